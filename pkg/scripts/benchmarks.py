"""Closed-form benchmarks against the numerical price optimizer."""
import numpy as np

from netpricing.equilibrium import Market
from netpricing.network import build_topology
from netpricing.pricing import PriceBox, lq_closed_forms, nonlinear_symmetric_foc, optimize_prices, star_prices
from netpricing.utility import UtilityModel


def market(kind, model, a, delta, n, domain):
    return Market.homogeneous(build_topology({"kind": kind, "n": n, "delta": delta}), model, a, 1.0, domain)


def main():
    for kind in ("null", "complete"):
        mkt = market(kind, UtilityModel.lq(), 3.0, 0.02, 20, (0.0, 10.0))
        sol = optimize_prices(mkt, PriceBox.from_market(mkt))
        ref = lq_closed_forms(kind, 3.0, 1.0, 0.02, 20)
        print(f"LQ {kind:<8} max |p - p_closed| = {np.max(np.abs(sol.p_star - ref.p_star)):.2e}")

    dc = UtilityModel.discrete_choice()
    for kind, delta in (("null", 0.0), ("complete", 0.1)):
        mkt = market(kind, dc, 2.0, delta, 5, (0.0, 1.0))
        sol = optimize_prices(mkt, PriceBox.from_market(mkt))
        _, p = nonlinear_symmetric_foc(kind, dc, 2.0, 1.0, delta, 5, bracket=(1e-9, 1 - 1e-9))
        print(f"logit {kind:<8} symmetric p* = {p:.6f}, optimizer = {sol.p_star.mean():.6f}")

    for kind in ("follower", "influencer"):
        mkt = market(f"star_{kind}", UtilityModel.lq(), 1.0, 0.1, 5, (0.0, 4.0))
        sol = optimize_prices(mkt, PriceBox.from_market(mkt))
        closed = star_prices(kind, 1.0, 0.1, 5)
        print(f"star {kind:<10} center {closed[0]:.7f} leaves {closed[1]:.7f} "
              f"optimizer gap {np.max(np.abs(sol.p_star - closed)):.2e}")


if __name__ == "__main__":
    main()
