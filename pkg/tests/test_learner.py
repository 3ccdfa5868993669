import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from netpricing.equilibrium import Market, solve_equilibrium, solve_monotone
from netpricing.errors import InsufficientData, InsufficientPoints, PreconditionError, SpecError, DomainError
from netpricing.learner import (
    TIKHONOV,
    ExactPsi,
    LearnConfig,
    Samples,
    explore,
    exploration_length,
    fit_psi,
    plug_in_equilibrium,
    regret_slope,
    run_algorithm1,
)
from netpricing.network import Network, build_topology
from netpricing.pricing import PriceBox, optimize_prices
from netpricing.utility import ConsumerParams, UtilityModel


@pytest.fixture(scope="module")
def small_lq():
    net = build_topology({"kind": "circular", "n": 8, "w": 0.08, "flip": 0.1, "delta": 0.5}, seed=0)
    mkt = Market.homogeneous(net, UtilityModel.lq(), np.linspace(2, 3, 8), 1.0, (0.0, 5.0))
    box = PriceBox.from_market(mkt)
    return mkt, box, optimize_prices(mkt, box)


def nonneg_market(model, domain, n=6, seed=0):
    net = build_topology({"kind": "circular", "n": n, "w": 0.08, "flip": 0.0, "delta": 0.5}, seed=seed)
    return Market.homogeneous(net, model, 2.0, 1.0, domain)


@given(st.integers(2, 5000), st.floats(0.05, 0.95), st.floats(0.1, 3.0))
def test_exploration_length(horizon, beta, c):
    t0 = exploration_length(horizon, beta, c)
    v = c * horizon**beta
    assert 1 <= t0 <= horizon
    if 1 <= v <= horizon and abs(v - round(v)) > 1e-9 * v:
        assert t0 == math.ceil(v)


def test_exploration_length_examples():
    assert exploration_length(100, 0.5) == 10
    assert exploration_length(125, 0.75) == math.ceil(125**0.75)
    assert LearnConfig(125).t0 == 38


def test_config_defaults_and_validation():
    assert LearnConfig(10, alpha=1.0).beta == pytest.approx(0.75)
    assert LearnConfig(10, alpha=0.2).beta == pytest.approx(1.4 / 1.6)
    assert LearnConfig(10).beta == 0.75
    for bad in ({"horizon": 1}, {"horizon": 10, "beta": 1.0}, {"horizon": 10, "sigma": -1.0},
                {"horizon": 10, "exploration_mode": "bandit"}, {"horizon": 10, "segmentation": "some"}):
        with pytest.raises(SpecError):
            LearnConfig(**bad)
    cfg = LearnConfig(50, sigma=[0.1, 0.2], segmentation=[0, 1])
    assert LearnConfig.from_dict(cfg.to_dict()) == cfg


def test_explore_price_space_noiseless(small_lq):
    mkt, box, _ = small_lq
    cfg = LearnConfig(100, sigma=0.0, exploration_mode="price")
    samples, prices, _ = explore(mkt, box, cfg)
    assert samples.x.shape == (cfg.t0, 8)
    assert np.all(box.lo <= prices) and np.all(prices <= box.hi)
    for t in range(cfg.t0):
        m = samples.mask[t]
        psi = mkt.phi(samples.x[t]) - mkt.a
        assert np.all(np.abs(samples.y[t][m] - psi[m]) <= 1e-9)


def test_explore_consumption_space_noiseless(small_lq):
    mkt, box, _ = small_lq
    cfg = LearnConfig(100, sigma=0.0)
    samples, prices, revs = explore(mkt, box, cfg)
    for t in range(cfg.t0):
        x, m = samples.x[t], samples.mask[t]
        np.testing.assert_allclose(samples.y[t][m], (mkt.phi(x) - mkt.a)[m], atol=1e-9)
        assert revs[t] == pytest.approx(prices[t] @ solve_equilibrium(mkt, prices[t]).x, rel=1e-9)


def test_explore_known_intercepts(small_lq):
    mkt, box, _ = small_lq
    samples, _, _ = explore(mkt, box, LearnConfig(100, sigma=0.0, known_intercepts=True))
    m = samples.mask
    np.testing.assert_allclose(samples.y[m], samples.x[m], atol=1e-9)
    np.testing.assert_array_equal(samples.offset, mkt.a)


@pytest.mark.parametrize("mode", ["consumption", "price"])
def test_explore_deterministic(small_lq, mode):
    mkt, box, _ = small_lq
    cfg = LearnConfig(100, sigma=0.05, seed=3, exploration_mode=mode)
    s1, p1, r1 = explore(mkt, box, cfg)
    s2, p2, r2 = explore(mkt, box, cfg)
    for u, v in ((s1.x, s2.x), (s1.y, s2.y), (p1, p2), (r1, r2)):
        assert np.array_equal(u, v)


def test_explore_needs_variational_margin():
    net = Network(np.ones((3, 3)) - np.eye(3), 0.6)
    mkt = Market.homogeneous(net, UtilityModel.lq(), 1.0, 1.0, (0.0, 5.0))
    with pytest.raises(PreconditionError):
        explore(mkt, PriceBox.uniform(3, 0.0, 1.0), LearnConfig(10))


def test_fit_psi_pooled(small_lq):
    mkt, box, _ = small_lq
    samples, _, _ = explore(mkt, box, LearnConfig(100, sigma=0.05, known_intercepts=True))
    psi = fit_psi(samples, "all")
    assert len(psi.fits) == 1
    assert all(psi.fit_for(i) is psi.fits[0] for i in range(8))
    assert psi.fits[0].size == samples.mask.sum()
    per = fit_psi(samples)
    assert len(per.fits) == 8


def test_fit_psi_noiseless_recovery():
    mkt = nonneg_market(UtilityModel.lq(), (0.0, 5.0))
    box = PriceBox.from_market(mkt)
    cfg = LearnConfig(2000, beta=0.999, sigma=0.0)
    samples, _, _ = explore(mkt, box, cfg)
    psi = fit_psi(samples)
    for i in range(mkt.n):
        x = np.linspace(samples.x[:, i].min(), samples.x[:, i].max(), 500)
        assert np.max(np.abs(psi.coordinate(i, x) - (x - mkt.a[i]))) <= 1e-2


def test_fit_psi_insufficient_data():
    s = Samples(np.ones((1, 2)), np.ones((1, 2)), np.ones((1, 2), dtype=bool), np.zeros(2))
    with pytest.raises(InsufficientData):
        fit_psi(s)
    with pytest.raises(SpecError):
        fit_psi(s, [0])


def test_segmentation_contrast():
    lq, pw = UtilityModel.lq(), UtilityModel.power(0.5)
    consumers = [ConsumerParams(2.0, 1.0, lq, (0.05, 4.0))] * 3 + [ConsumerParams(2.0, 1.0, pw, (0.05, 4.0))] * 3
    net = build_topology({"kind": "circular", "n": 6, "w": 0.08, "flip": 0.0, "delta": 0.5}, seed=1)
    mkt = Market(net, consumers)
    samples, _, _ = explore(mkt, PriceBox.from_market(mkt), LearnConfig(400, beta=0.9, sigma=0.01))
    psi = fit_psi(samples, [0, 0, 0, 1, 1, 1])
    x = np.linspace(0.5, 3.5, 200)
    assert np.max(np.abs(psi.fits[0](x) - psi.fits[1](x))) > 0.3
    own = np.max(np.abs(psi.coordinate(4, x) - (pw.phi(x) - 2.0)))
    cross = np.max(np.abs(psi.coordinate(0, x) - (pw.phi(x) - 2.0)))
    assert cross > 5 * own


def test_segmentation_speedup():
    mkt = nonneg_market(UtilityModel.power(0.5), (0.05, 4.0), n=8)
    box = PriceBox.from_market(mkt)
    x = np.linspace(0.3, 3.7, 400)
    truth = UtilityModel.power(0.5).phi(x) - 2.0
    pooled, single = [], []
    for seed in range(7):
        samples, _, _ = explore(mkt, box, LearnConfig(200, beta=0.8, sigma=0.05, seed=seed))
        p = fit_psi(samples, "all")
        s = fit_psi(samples)
        pooled.append(np.max(np.abs(p.coordinate(0, x) - truth)))
        single.append(max(np.max(np.abs(s.coordinate(i, x) - truth)) for i in range(8)))
    assert np.median(pooled) < np.median(single)


def test_plug_in_exact_psi_matches_solver():
    rng = np.random.default_rng(0)
    cases = [(m, d, f) for m, d in ((UtilityModel.lq(), (0.0, 5.0)), (UtilityModel.power(0.5), (0.05, 4.0)),
                                    (UtilityModel.discrete_choice(), (0.01, 0.99)))
             for f in (0.0, 0.2)]
    for model, dom, flip in cases:
        net = build_topology({"kind": "circular", "n": 10, "w": 0.08, "flip": flip, "delta": 0.5}, seed=2)
        mkt = Market.homogeneous(net, model, 1.5, 1.0, dom)
        p = rng.uniform(0.0, 1.0, 10)
        res = plug_in_equilibrium(ExactPsi(mkt), net, mkt.b, p, mkt.lo, mkt.hi, epsilon=0.0)
        np.testing.assert_allclose(res.x, solve_monotone(mkt, p).x, atol=1e-6)
        res = plug_in_equilibrium(ExactPsi(mkt), net, mkt.b, p, mkt.lo, mkt.hi)
        assert res.epsilon == TIKHONOV
        np.testing.assert_allclose(res.x, solve_monotone(mkt, p).x, atol=1e-6)


def test_plug_in_decoupled_matches_generalized_inverse():
    net = Network(np.zeros((5, 5)), 0.0)
    mkt = Market.homogeneous(net, UtilityModel.power(0.5), 2.0, 1.0, (0.05, 4.0))
    samples, _, _ = explore(mkt, PriceBox.from_market(mkt), LearnConfig(300, beta=0.9, sigma=0.05))
    psi = fit_psi(samples)
    rng = np.random.default_rng(1)
    for _ in range(10):
        p = rng.uniform(0.0, 2.0, 5)
        res = plug_in_equilibrium(psi, net, mkt.b, p, mkt.lo, mkt.hi)
        np.testing.assert_allclose(res.x, psi.inverse(-mkt.b * p, mkt.lo, mkt.hi), atol=1e-6)
        # knot-level grid oracle: sign change of psi_hat + b p brackets the answer
        for i in range(5):
            grid = np.union1d(psi.fit_for(i).knots, np.linspace(mkt.lo[i], mkt.hi[i], 2001))
            grid = grid[(grid >= mkt.lo[i]) & (grid <= mkt.hi[i])]
            f = psi.coordinate(i, grid) + mkt.b[i] * p[i]
            if f[0] >= 0:
                assert res.x[i] == pytest.approx(mkt.lo[i])
            elif f[-1] <= 0:
                assert res.x[i] == pytest.approx(mkt.hi[i])
            else:
                k = np.argmax(f >= 0)
                assert grid[k - 1] - 1e-9 <= res.x[i] <= grid[k] + 1e-9


def test_plug_in_monotone_in_price():
    mkt = nonneg_market(UtilityModel.power(0.5), (0.05, 4.0))
    samples, _, _ = explore(mkt, PriceBox.from_market(mkt), LearnConfig(300, beta=0.9, sigma=0.03))
    psi = fit_psi(samples)
    rng = np.random.default_rng(2)
    for _ in range(10):
        p = rng.uniform(0.0, 1.5, mkt.n)
        base = plug_in_equilibrium(psi, mkt.net, mkt.b, p, mkt.lo, mkt.hi).x
        i = int(rng.integers(mkt.n))
        p2 = p.copy()
        p2[i] += 0.2
        bumped = plug_in_equilibrium(psi, mkt.net, mkt.b, p2, mkt.lo, mkt.hi).x
        assert bumped[i] <= base[i] + 1e-7


def test_known_psi_regret(small_lq):
    mkt, box, oracle = small_lq
    trace = run_algorithm1(mkt, box, LearnConfig(60, seed=1), oracle=oracle, psi=ExactPsi(mkt))
    assert trace.t0 == 0 and set(trace.phase) == {"exploit"}
    per_round = oracle.revenue - trace.revenue
    assert np.all(np.abs(per_round) <= 1e-6)


def test_regret_trace_properties(small_lq):
    mkt, box, oracle = small_lq
    cfg = LearnConfig(60, seed=2, segmentation="all", known_intercepts=True)
    trace = run_algorithm1(mkt, box, cfg, oracle=oracle)
    assert trace.t0 == cfg.t0
    assert trace.phase == ["explore"] * cfg.t0 + ["exploit"] * (60 - cfg.t0)
    np.testing.assert_array_equal(trace.t, np.arange(1, 61))
    assert np.all(oracle.revenue - trace.revenue >= -5e-10)
    assert np.all(np.diff(trace.regret) >= -5e-10)
    assert trace.total_regret > 0
    assert trace.epsilon == TIKHONOV
    assert np.all(box.lo <= trace.p_hat) and np.all(trace.p_hat <= box.hi)
    again = run_algorithm1(mkt, box, cfg, oracle=oracle)
    assert np.array_equal(trace.regret, again.regret)


def test_trace_csv(small_lq, tmp_path):
    mkt, box, oracle = small_lq
    trace = run_algorithm1(mkt, box, LearnConfig(20, seed=0), oracle=oracle)
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,phase,revenue,regret" and len(lines) == 21


def test_estimation_consistency():
    mkt = nonneg_market(UtilityModel.power(0.5), (0.05, 4.0))
    box = PriceBox.from_market(mkt)
    prices = [box.lo + f * (box.hi - box.lo) for f in (0.25, 0.5, 0.75)]
    truth = [solve_equilibrium(mkt, p).x for p in prices]
    medians = []
    for horizon in (30, 300, 3000):
        errs = []
        for seed in range(5):
            cfg = LearnConfig(horizon, beta=0.9, sigma=0.01, seed=seed)
            samples, _, _ = explore(mkt, box, cfg)
            psi = fit_psi(samples, "all")
            errs.append(max(np.linalg.norm(plug_in_equilibrium(psi, mkt.net, mkt.b, p, mkt.lo, mkt.hi).x - x)
                            for p, x in zip(prices, truth)))
        medians.append(np.median(errs))
    assert medians[0] > medians[1] > medians[2]


def test_regret_slope_examples():
    ts = [25, 50, 75, 100, 125]
    assert regret_slope([(t, t**0.75) for t in ts]) == pytest.approx(0.75)
    with pytest.raises(InsufficientPoints):
        regret_slope([(1, 1.0), (2, 2.0)])
    with pytest.raises(DomainError):
        regret_slope([(1, 1.0), (2, 0.0), (3, 1.0)])


@given(st.floats(0.1, 2.0), st.floats(0.01, 100.0))
def test_regret_slope_power_law(k, scale):
    ts = [10, 20, 40, 80]
    assert regret_slope([(t, scale * t**k) for t in ts]) == pytest.approx(k, abs=1e-9)
