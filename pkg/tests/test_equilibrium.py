import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import lq_market, random_market
from netpricing.equilibrium import (
    Market,
    best_response,
    foc_residual,
    jacobian,
    monotone_constants,
    price_map,
    price_sensitivity,
    solve_equilibrium,
    solve_fixed_point,
    solve_monotone,
)
from netpricing.errors import (
    BoundaryError,
    ConditionError,
    DimensionError,
    MarginError,
    NoConvergence,
    SingularError,
)
from netpricing.network import Network, block_diag_network, build_topology
from netpricing.utility import UtilityModel


def complete(n):
    return np.ones((n, n)) - np.eye(n)


SKEW = np.array([[0.0, 1.0], [-1.0, 0.0]])


def test_best_response_examples():
    mkt = lq_market(np.zeros((3, 3)), 0.0)
    np.testing.assert_allclose(best_response(mkt, np.array([0.3, 7.0, 1.0]), 1.0), 2.0)
    dc = Market.homogeneous(Network(np.zeros((2, 2))), UtilityModel.discrete_choice(), 0.0, 1.0, (0.0, 1.0))
    np.testing.assert_allclose(best_response(dc, np.array([0.2, 0.9]), 0.0), 0.5)
    mkt = lq_market(complete(3), 0.1, a=1.0)
    np.testing.assert_allclose(best_response(mkt, np.ones(3), 0.0), 1.2)
    with pytest.raises(DimensionError):
        best_response(mkt, np.ones(2), 0.0)


def test_best_response_clamps_to_endpoints():
    mkt = lq_market(np.zeros((2, 2)), 0.0, a=3.0, domain=(0.0, 1.0))
    np.testing.assert_array_equal(best_response(mkt, np.zeros(2), np.array([-10.0, 10.0])), [1.0, 0.0])


def test_fixed_point_examples():
    res = solve_fixed_point(lq_market(np.zeros((4, 4)), 0.0), 1.5)
    np.testing.assert_array_equal(res.x, 1.5)
    assert res.route == "contraction"
    res = solve_fixed_point(lq_market(complete(5), 0.1), 1.5)
    np.testing.assert_allclose(res.x, 2.5, atol=1e-9)
    assert res.residual <= 1e-10


def test_circular_routes_agree(circular20):
    mkt = Market.homogeneous(circular20, UtilityModel.lq(), 3.0, 1.0, (0.0, 10.0))
    p = np.linspace(0.5, 2.5, 20)
    fp = solve_fixed_point(mkt, p, tol=1e-10)
    mo = solve_monotone(mkt, p, tol=1e-10)
    assert fp.residual <= 1e-10 and mo.residual <= 1e-10
    assert np.max(np.abs(fp.x - mo.x)) <= 1e-8
    assert solve_equilibrium(mkt, p).route == "contraction"


def test_skew_monotone_example():
    # interior solve of x - 2Gx = 1 is (0.6, -0.2); on [0,4]^2 the VI solution pins x_2 at 0
    mkt = lq_market(SKEW, 2.0, a=1.0, domain=(0.0, 4.0))
    assert not mkt.conditions.contraction_holds
    np.testing.assert_allclose(np.linalg.solve(np.eye(2) - 2 * SKEW, np.ones(2)), [0.6, -0.2])
    res = solve_equilibrium(mkt, 0.0)
    assert res.route == "monotone"
    np.testing.assert_allclose(res.x, [1.0, 0.0], atol=1e-9)
    # complementarity: coordinate 2 at its lower bound has a nonnegative operator value
    f = res.x - 1.0 - 2.0 * SKEW @ res.x
    assert abs(f[0]) < 1e-9 and f[1] >= 0
    with pytest.raises(ConditionError):
        solve_fixed_point(mkt, 0.0)


def test_decoupled_monotone_is_fast():
    res = solve_monotone(lq_market(np.zeros((3, 3)), 0.0), 1.0)
    np.testing.assert_allclose(res.x, 2.0)
    assert res.iterations <= 3


def test_margin_error_and_no_certificate():
    mkt = lq_market(complete(3), 0.6)
    assert not mkt.conditions.variational_holds and not mkt.conditions.contraction_holds
    with pytest.raises(MarginError):
        solve_monotone(mkt, 1.0)
    with pytest.raises(ConditionError):
        solve_equilibrium(mkt, 1.0)


def test_no_convergence_carries_iterate():
    mkt = lq_market(complete(5), 0.2)
    with pytest.raises(NoConvergence) as info:
        solve_fixed_point(mkt, 1.5, max_iter=3)
    assert info.value.last.shape == (5,) and info.value.iterations == 3


def test_route_agreement_random_markets():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        mkt = random_market(rng)
        assert mkt.conditions.contraction_holds and mkt.conditions.variational_holds
        p = rng.uniform(0.0, 1.5, mkt.n)
        fp = solve_fixed_point(mkt, p, tol=1e-12)
        mo = solve_monotone(mkt, p, tol=1e-12)
        assert np.max(np.abs(fp.x - mo.x)) <= 1e-8


@given(st.integers(0, 100_000))
def test_foc_residual_at_interior(seed):
    rng = np.random.default_rng(seed)
    mkt = random_market(rng)
    p = rng.uniform(0.0, 1.5, mkt.n)
    res = solve_equilibrium(mkt, p, tol=1e-10)
    assert np.all(res.x >= mkt.lo) and np.all(res.x <= mkt.hi)
    interior = (res.x > mkt.lo) & (res.x < mkt.hi)
    f = mkt.phi_raw(res.x) - mkt.a + mkt.b * p - mkt.net.dg @ res.x
    assert np.all(np.abs(f[interior]) <= 1e-10)
    assert foc_residual(mkt, res.x, p) <= 1e-10


def test_block_decomposition():
    rng = np.random.default_rng(5)
    blocks = [rng.uniform(0, 1, (k, k)) * (1 - np.eye(k)) for k in (3, 4, 5)]
    net = block_diag_network(blocks, 0.1)
    mkt = Market.homogeneous(net, UtilityModel.power(0.5), rng.uniform(1, 2, 12), 1.0, (0.05, 2.0))
    p = rng.uniform(0, 1, 12)
    full = solve_equilibrium(mkt, p, tol=1e-13).x
    offset, parts = 0, []
    for blk in blocks:
        idx = np.arange(offset, offset + len(blk))
        parts.append(solve_equilibrium(mkt.submarket(idx), p[idx], tol=1e-13).x)
        offset += len(blk)
    np.testing.assert_allclose(full, np.concatenate(parts), atol=1e-10)


def test_monotone_contraction_factor():
    rng = np.random.default_rng(9)
    for _ in range(10):
        mkt = random_market(rng, family=(UtilityModel.lq(), (0.0, 5.0)))
        p = rng.uniform(0, 1, mkt.n)
        m, lip = monotone_constants(mkt)
        star = solve_monotone(mkt, p, tol=1e-14).x
        hist = solve_monotone(mkt, p, tol=1e-8, keep_history=True).history
        err = np.array([np.sum((h - star) ** 2) for h in hist])
        keep = err > 1e-20
        ratios = err[1:][keep[:-1] & keep[1:]] / err[:-1][keep[:-1] & keep[1:]]
        assert np.all(ratios <= 1 - (m / lip) ** 2 + 1e-6)


def test_jacobian_examples():
    rng = np.random.default_rng(1)
    g = rng.uniform(0, 1, (4, 4)) * (1 - np.eye(4))
    mkt = lq_market(g, 0.1)
    for _ in range(3):
        np.testing.assert_allclose(jacobian(mkt, rng.uniform(0, 10, 4)), np.eye(4) - 0.1 * g)
    dc = Market.homogeneous(Network(g, 0.1), UtilityModel.discrete_choice(), 0.0, 1.0, (0.0, 1.0))
    np.testing.assert_allclose(jacobian(dc, np.full(4, 0.5)), 4 * np.eye(4) - 0.1 * g)
    with pytest.raises(BoundaryError):
        jacobian(dc, np.array([0.0, 0.5, 0.5, 0.5]))
    pw = Market.homogeneous(Network(np.zeros((3, 3))), UtilityModel.power(0.5), 1.0, 1.0, (0.0, 1.0))
    np.testing.assert_allclose(jacobian(pw, np.full(3, 0.25)), np.eye(3))


def test_price_map_examples():
    np.testing.assert_allclose(price_map(lq_market(np.zeros((3, 3)), 0.0), np.full(3, 1.5)), 1.5)
    np.testing.assert_allclose(price_map(lq_market(complete(5), 0.1), np.full(5, 2.5)), 1.5)


@given(st.integers(0, 100_000))
def test_price_map_round_trip(seed):
    rng = np.random.default_rng(seed)
    mkt = random_market(rng)
    x0 = mkt.lo + (mkt.hi - mkt.lo) * rng.uniform(0.1, 0.9, mkt.n)
    res = solve_equilibrium(mkt, price_map(mkt, x0), tol=1e-12)
    np.testing.assert_allclose(res.x, x0, atol=1e-8)


def test_price_sensitivity_examples(circular20):
    np.testing.assert_allclose(price_sensitivity(lq_market(np.zeros((3, 3)), 0.0), np.ones(3)), -np.eye(3))
    mkt = Market.homogeneous(circular20, UtilityModel.lq(), 3.0, 1.0, (0.0, 10.0))
    m = circular20.dg
    series, term = np.zeros((20, 20)), np.eye(20)
    for _ in range(200):
        series += term
        term = term @ m
    np.testing.assert_allclose(price_sensitivity(mkt, np.ones(20)), -series, atol=1e-10)


def test_price_sensitivity_finite_differences(circular20):
    mkt = Market.homogeneous(circular20, UtilityModel.power(0.5), 2.0, 1.0, (0.05, 4.0))
    p = np.full(20, 1.3)
    x = solve_fixed_point(mkt, p, tol=1e-14).x
    assert np.all((x > mkt.lo) & (x < mkt.hi))
    sens = price_sensitivity(mkt, x)
    h = 1e-5
    for j in (0, 7, 13):
        e = np.zeros(20)
        e[j] = h
        fd = (solve_fixed_point(mkt, p + e, tol=1e-14).x - solve_fixed_point(mkt, p - e, tol=1e-14).x) / (2 * h)
        np.testing.assert_allclose(fd, sens[:, j], atol=1e-5)


def test_price_sensitivity_singular():
    mkt = lq_market(np.array([[0.0, 1.0], [1.0, 0.0]]), 1.0)
    with pytest.raises(SingularError):
        price_sensitivity(mkt, np.ones(2))


def test_result_export(tmp_path):
    mkt = lq_market(np.zeros((2, 2)), 0.0)
    res = solve_equilibrium(mkt, 1.0)
    assert set(res.to_dict()) == {"residual", "iterations", "route"}
    path = tmp_path / "eq.csv"
    res.to_csv(path, np.ones(2))
    assert path.read_text().splitlines() == ["i,x_i,p_i", "0,2,1", "1,2,1"]
