import numpy as np
import pytest

from cohesion.corelp import core_membership, sample_core_points
from cohesion.fields import aggrieved, cohesion, dissatisfaction
from cohesion.flow import (FlowConfig, FlowError, Status, integrate, integrate_adaptive,
                           integrate_exact, integrate_rk4, region_hash, rk4_step)
from cohesion.game import Game, GameError, eta, gen_symmetric, random_preimputations
from corpus import EXAMPLE_X, balanced_corpus, example_game, unbalanced_corpus

INTEGRATORS = (integrate_rk4, integrate_adaptive, integrate_exact)
FAST_RK4 = FlowConfig(dt=1e-2)  # RK4 sweeps over the corpus; dt * L stays below 0.15


def corpus_runs(integrator, cfg=None, starts=3, seed=0):
    r = np.random.default_rng(seed)
    for g in (example_game(),) + balanced_corpus() + unbalanced_corpus():
        for x in random_preimputations(g.n, starts, 50.0, r):
            yield g, integrate(g, x, cfg, integrator)


def test_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(dt=0.0)
    with pytest.raises(ValueError):
        FlowConfig(stop_phi_norm=-1.0)
    with pytest.raises(ValueError):
        FlowConfig(sample_stride=0)
    with pytest.raises(ValueError):
        integrate(example_game(), EXAMPLE_X, None, "euler")


def test_rejects_bad_inputs():
    with pytest.raises(GameError):
        integrate_exact(Game(2, [1.0, 1.0, 4.0]), [0.0, 0.0])
    with pytest.raises(GameError):
        integrate_exact(example_game(), [1.0, 0.0, 0.0])


@pytest.mark.parametrize("fn", INTEGRATORS)
def test_core_start_is_fixed(fn):
    g = example_game()
    tr = fn(g, [0.5, 0.5, -1.0])
    assert tr.status == Status.REACHED_CORE
    assert len(tr) == 1 and tr.t_end == 0.0
    assert tr.region == [region_hash(())]


@pytest.mark.parametrize("fn", INTEGRATORS)
def test_worked_example_reaches_core(fn):
    g = example_game()
    tr = fn(g, EXAMPLE_X, FlowConfig(sample_stride=10) if fn is integrate_rk4 else None)
    assert tr.status == Status.REACHED_CORE
    assert core_membership(g, tr.final, 1e-6).member
    assert np.all(np.diff(tr.theta) <= 1e-12)
    assert tr.theta[0] == 8.5
    assert tr.stats["steps"] > 0 and tr.stats["region_crossings"] >= 1


def test_rk4_matches_adaptive():
    g = example_game()
    fine = integrate_rk4(g, EXAMPLE_X, FlowConfig(dt=1e-4, sample_stride=1000))
    ad = integrate_adaptive(g, EXAMPLE_X)
    assert np.abs(fine.final - ad.final).max() < 1e-6


def test_exact_matches_adaptive_on_worked_example():
    g = example_game()
    ex = integrate_exact(g, EXAMPLE_X)
    first = ex.segments[0]
    # the first region is {a}, {a,b}: its closed form must reproduce the affine field
    x_mid = first.at(0.5 * (first.t0 + first.t1))
    assert aggrieved(g, x_mid).members == (1, 3)
    assert np.abs(ex.final - integrate_adaptive(g, EXAMPLE_X).final).max() < 1e-8


def _smooth_segment_error(dt, t_end, g, exact):
    tr = integrate_rk4(g, EXAMPLE_X, FlowConfig(dt=dt, t_max=t_end, sample_stride=10**6))
    assert tr.status == Status.MAX_TIME and tr.t_end == t_end
    return np.abs(tr.final - exact).max()


def test_rk4_fourth_order_within_region():
    g = example_game()
    seg = integrate_exact(g, EXAMPLE_X).segments[0]
    t_end = 0.5 * seg.t1
    exact = seg.at(t_end)
    errs = [_smooth_segment_error(dt, t_end, g, exact) for dt in (0.04, 0.02, 0.01)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 3.7), orders


def test_rk4_step_on_linear_field():
    # one step of RK4 on x' = -x is the degree-4 Taylor polynomial of exp(-h)
    h = 0.3
    got = rk4_step(lambda x: -x, np.array([1.0]), h)[0]
    assert got == pytest.approx(1 - h + h**2 / 2 - h**3 / 6 + h**4 / 24, abs=1e-15)


def test_single_coalition_region_closed_form():
    # v({a}) = 1, other proper coalitions -10: at x = (-2, 1, 1) only {a} is aggrieved
    vals = np.full(7, -10.0)
    vals[0], vals[6] = 1.0, 0.0
    g = Game(3, vals)
    x0 = np.array([-2.0, 1.0, 1.0])
    assert aggrieved(g, x0).members == (1,)
    tr = integrate_exact(g, x0)
    seg = tr.segments[0]
    e0 = 3.0
    k2 = np.dot(eta(1, 3), eta(1, 3))
    for t in np.linspace(0, min(seg.t1, 20.0), 15):
        x = seg.at(t)
        assert 1.0 - x[0] == pytest.approx(e0 * np.exp(-k2 * t), abs=1e-12)
        d = x - x0
        assert np.linalg.norm(d - (d @ eta(1, 3)) / k2 * eta(1, 3)) < 1e-12


def test_empty_region_stationary_immediately():
    g = gen_symmetric(4, -1.0)
    tr = integrate_exact(g, np.zeros(4))
    assert tr.status == Status.REACHED_CORE and len(tr) == 1
    assert tr.stats["segments"] == 0


def test_max_time_and_underflow():
    g = example_game()
    for fn in INTEGRATORS:
        tr = fn(g, 10 * EXAMPLE_X, FlowConfig(t_max=1e-6))
        assert tr.status == Status.MAX_TIME
        assert tr.t_end == pytest.approx(1e-6)
    assert integrate_adaptive(g, EXAMPLE_X, FlowConfig(adaptive_tol=1e-30)).status \
        == Status.STEP_UNDERFLOW


def test_nonfinite_state_raises_with_prefix():
    g = example_game()
    with pytest.raises(FlowError) as info:
        with np.errstate(over="ignore", invalid="ignore"):
            integrate_rk4(g, [1e308, -1e308, 0.0], FlowConfig(dt=1.0))
    assert len(info.value.trajectory) >= 1
    assert np.all(np.isfinite(info.value.trajectory.x))


def test_far_start_keeps_precision():
    g = example_game()
    for s in (1e6, 1e9, 1e12):
        tr = integrate_exact(g, [s, -s, 0.0])
        assert tr.status == Status.REACHED_CORE
        np.testing.assert_allclose(tr.final, [3, -3, 0], atol=1e-9)


@pytest.mark.parametrize("name,cfg", [("rk4", FAST_RK4), ("adaptive", None), ("exact", None)])
def test_hyperplane_and_monotone_theta(name, cfg):
    for g, tr in corpus_runs(name, cfg, starts=2):
        assert np.abs(tr.x.sum(axis=1)).max() <= 1e-9
        assert np.all(np.diff(tr.t) > 0)
        assert np.all(np.diff(tr.theta) <= 1e-12 * max(1.0, tr.theta[0]))
        assert tr.status in (Status.REACHED_CORE, Status.STATIONARY)


def test_exact_vs_adaptive_on_corpus():
    r = np.random.default_rng(7)
    for g in (example_game(),) + balanced_corpus() + unbalanced_corpus():
        for x in random_preimputations(g.n, 4, 100.0, r):
            a = integrate_exact(g, x)
            b = integrate_adaptive(g, x)
            assert a.status == b.status
            assert np.abs(a.final - b.final).max() < 1e-6


def test_core_points_never_move():
    r = np.random.default_rng(8)
    for g in balanced_corpus()[:6]:
        for x in sample_core_points(g, 5, r):
            for fn in INTEGRATORS:
                tr = fn(g, x)
                assert len(tr) == 1 and np.array_equal(tr.final, x - x.mean())
                assert not cohesion(g, x).any()


def test_unbalanced_runs_end_stationary():
    r = np.random.default_rng(9)
    for g in unbalanced_corpus():
        thetas = []
        for x in random_preimputations(g.n, 10, 100.0, r):
            tr = integrate_exact(g, x)
            assert tr.status == Status.STATIONARY
            assert tr.phi_norm[-1] <= 1e-10 and tr.theta[-1] > 0
            thetas.append(tr.theta[-1])
        assert max(thetas) - min(thetas) <= 1e-8


def test_trajectory_at():
    g = example_game()
    ex = integrate_exact(g, EXAMPLE_X)
    for t in np.linspace(0, ex.t_end, 17):
        x = ex.at(t)
        k = np.searchsorted(ex.t, t)
        if k < len(ex.t) and ex.t[k] == t:
            np.testing.assert_allclose(x, ex.x[k], atol=1e-12)
    np.testing.assert_array_equal(ex.at(ex.t_end + 5.0), ex.final)
    ad = integrate_adaptive(g, EXAMPLE_X)
    mid = 0.5 * (ad.t[3] + ad.t[4])
    np.testing.assert_allclose(ad.at(mid), 0.5 * (ad.x[3] + ad.x[4]))


def test_energy_identity_per_segment():
    r = np.random.default_rng(10)
    for g in (example_game(),) + balanced_corpus()[:10] + unbalanced_corpus():
        for x in random_preimputations(g.n, 3, 30.0, r):
            for seg in integrate_exact(g, x).segments:
                lhs = dissatisfaction(g, seg.at(seg.t1)) - dissatisfaction(g, seg.at(seg.t0))
                assert abs(lhs + seg.dissipation(seg.t1)) <= 1e-9 * max(1.0, abs(lhs))
