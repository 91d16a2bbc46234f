"""Acceptance criteria 1-10; a summary line per criterion is printed at the end of the run."""

import itertools
import time

import numpy as np
import pytest

from cohesion.audit import realm_probe, tail_consistency
from cohesion.corelp import (contains_balanced, distance_to_core, epsilon_core_membership,
                             is_balanced, least_core, sample_core_points)
from cohesion.fields import aggrieved, cohesion, dissatisfaction, fd_gradient
from cohesion.flow import (FlowConfig, Status, integrate_adaptive, integrate_exact,
                           integrate_rk4, rk4_step)
from cohesion.game import excesses, gen_random, plane_basis, random_preimputations
from cohesion.relations import check_theta_compat
from corpus import EXAMPLE_X, balanced_corpus, example_game, unbalanced_corpus

criterion = pytest.mark.criterion


@criterion(1, "worked example: aggrieved set, excesses, theta, phi")
def test_worked_example_exact(record_property):
    g = example_game()
    coll = aggrieved(g, EXAMPLE_X)
    assert coll.members == (0b001, 0b011)  # {a}, {a,b}
    e = excesses(g, EXAMPLE_X)
    np.testing.assert_allclose(e[[0, 2]], [1.0, 4.0], rtol=0, atol=1e-12)
    assert abs(dissatisfaction(g, EXAMPLE_X) - 8.5) <= 1e-12
    np.testing.assert_allclose(cohesion(g, EXAMPLE_X), [2.0, 1.0, -3.0], rtol=0, atol=1e-12)
    record_property("detail", "theta 8.5, phi (2, 1, -3)")


def _interior_point(g, rng, h):
    basis = plane_basis(g.n)
    while True:
        x = random_preimputations(g.n, 1, 20.0, rng)[0]
        key = aggrieved(g, x).key()
        # the central differences must not leave the region of x
        if all(aggrieved(g, x + s * h * u).key() == key for u in basis.T for s in (-1, 1)):
            return x


@criterion(2, "phi equals minus the gradient of theta")
def test_potential_identity(record_property):
    tic = time.perf_counter()
    games = [gen_random(3 + s % 3, 500 + s, s % 2 == 0) for s in range(10)]
    rng = np.random.default_rng(2)
    worst = 0.0
    for g in games:
        for _ in range(100):
            x = _interior_point(g, rng, 1e-6)
            phi = cohesion(g, x)
            err = np.abs(fd_gradient(g, x) + phi).max() / (1 + np.abs(phi).max())
            worst = max(worst, err)
    elapsed = time.perf_counter() - tic
    record_property("detail", f"worst {worst:.2e}, {elapsed:.1f}s")
    assert worst < 1e-5
    assert elapsed < 10


@criterion(3, "global attraction to the core, 21 games x 1000 starts")
def test_global_attraction(record_property):
    tic = time.perf_counter()
    games = (example_game(),) + balanced_corpus()
    worst = 0.0
    for k, g in enumerate(games):
        starts = random_preimputations(g.n, 1000, 100.0, np.random.default_rng(300 + k))
        s = realm_probe(g, starts, integrator="exact")
        assert s.status_counts == {"ReachedCore": 1000}, (k, s.status_counts)
        assert s.audit_failures == 0, k
        assert s.max_distance < 1e-6, (k, s.max_distance)
        worst = max(worst, s.max_distance)
    elapsed = time.perf_counter() - tic
    record_property("detail", f"max distance {worst:.2e}, {elapsed:.0f}s")
    assert elapsed < 300


@criterion(4, "core points stay fixed on [0, 100]")
def test_core_invariance(record_property):
    rng = np.random.default_rng(4)
    games = (example_game(),) + balanced_corpus()
    pts = [(g, x) for i, g in enumerate(games[:10])
           for x in sample_core_points(g, 10, rng)]
    assert len(pts) == 100
    worst = 0.0
    grid = np.linspace(0.0, 100.0, 201)
    for g, x0 in pts:
        for fn in (integrate_exact, integrate_adaptive, integrate_rk4):
            tr = fn(g, x0, FlowConfig(t_max=100.0))
            worst = max(worst, max(np.abs(tr.at(t) - x0).max() for t in grid))
        # march the field without any stopping rule
        x = x0.copy()
        for _ in range(1000):
            x = rk4_step(lambda y: cohesion(g, y), x, 0.1)
            worst = max(worst, np.abs(x - x0).max())
    record_property("detail", f"sup drift {worst:.1e}")
    assert worst < 1e-10


def _brute_contains(coll, n, memo):
    key = frozenset(coll)
    if key not in memo:
        memo[key] = is_balanced(sorted(key), n).feasible or any(
            _brute_contains(key - {m}, n, memo) for m in key if len(key) > 1)
    return memo[key]


@criterion(5, "balanced-subcollection LP matches brute force; aggrieved sets unbalanced")
def test_oracle_equivalence(record_property):
    tic = time.perf_counter()
    checked = 0
    for n, kmax in ((3, 6), (4, 5)):
        masks = range(1, 2**n)
        memo = {}
        for k in range(1, kmax + 1):
            for coll in itertools.combinations(masks, k):
                lp = contains_balanced(coll, n)
                assert lp.feasible == _brute_contains(coll, n, memo), (n, coll)
                if lp.feasible:
                    assert is_balanced(lp.collection.members, n).feasible
                checked += 1
    rng = np.random.default_rng(5)
    games = balanced_corpus()
    found = 0
    while found < 1000:
        g = games[found % len(games)]
        x = random_preimputations(g.n, 1, 50.0, rng)[0]
        coll = aggrieved(g, x)
        if not len(coll):
            continue
        lp = contains_balanced(coll, g.n)
        assert not lp.feasible
        # Farkas ray: y(S) >= 0 on every member, y(N) < 0
        y = lp.certificate
        assert all(y[[i for i in range(g.n) if m >> i & 1]].sum() >= -1e-9 for m in coll)
        assert y.sum() < 0
        found += 1
    elapsed = time.perf_counter() - tic
    record_property("detail", f"{checked} collections, {found} aggrieved sets, {elapsed:.0f}s")
    assert elapsed < 120


@criterion(6, "runs restarted mid-trajectory follow the original tail")
def test_tail_consistency(record_property):
    rng = np.random.default_rng(6)
    games = (example_game(),) + balanced_corpus() + unbalanced_corpus()
    worst = 0.0
    for k in range(50):
        g = games[k % len(games)]
        x0 = random_preimputations(g.n, 1, 100.0, rng)[0]
        t1 = rng.uniform(0.01, 2.0)
        worst = max(worst, tail_consistency(g, x0, t1))
    record_property("detail", f"sup distance {worst:.1e}")
    assert worst < 1e-8


@criterion(7, "outvoting never increases theta; the negative control does")
def test_outvoting_compatibility(record_property):
    games = (example_game(),) + balanced_corpus()
    pairs = violations = subset = control = 0
    for k, g in enumerate(games):
        rep = check_theta_compat(g, 500, seed=700 + k)
        pairs += rep.pairs
        violations += rep.violations
        subset += rep.subset_failures
        control += check_theta_compat(g, 500, seed=700 + k, check_external=False).violations
    record_property("detail", f"{pairs} pairs, {violations} violations, control {control}")
    assert pairs >= 100 and violations == 0 and subset == 0
    assert control >= 1


@criterion(8, "theta exceeds alpha outside the sqrt(2 alpha)-core")
def test_uniform_unboundedness(record_property):
    g = example_game()
    rng = np.random.default_rng(8)
    outside_total = 0
    for alpha in (1.0, 10.0, 100.0):
        eps = np.sqrt(2 * alpha)
        radii = np.geomspace(0.5, 1000.0, 100)
        outside = 0
        for r in radii:
            pts = random_preimputations(3, 100, 1.0, rng)
            pts = r * pts / np.linalg.norm(pts, axis=1, keepdims=True)
            for x in pts:
                if not epsilon_core_membership(g, x, eps):
                    outside += 1
                    assert dissatisfaction(g, x) > alpha, (alpha, x)
        assert outside > 0
        outside_total += outside
    record_property("detail", f"{outside_total} of 30000 samples outside")


@criterion(9, "exact vs adaptive endpoints; RK4 convergence order")
def test_integrator_cross_validation(record_property):
    rng = np.random.default_rng(9)
    worst = 0.0
    for g in (example_game(),) + balanced_corpus():
        for x in random_preimputations(g.n, 3, 100.0, rng):
            a, b = integrate_exact(g, x), integrate_adaptive(g, x)
            worst = max(worst, np.abs(a.final - b.final).max())
    g = example_game()
    seg = integrate_exact(g, EXAMPLE_X).segments[0]
    t_end = 0.5 * seg.t1  # stay inside the first region
    ref = seg.at(t_end)
    errs = []
    for dt in (0.04, 0.02, 0.01):
        tr = integrate_rk4(g, EXAMPLE_X, FlowConfig(dt=dt, t_max=t_end, sample_stride=10**6))
        errs.append(np.abs(tr.final - ref).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    record_property("detail", f"endpoint gap {worst:.1e}, RK4 orders {orders.round(2).tolist()}")
    assert worst < 1e-6
    assert np.all(orders >= 3)


@criterion(10, "empty core: common stationary theta, positive least-core epsilon")
def test_empty_core_behaviour(record_property):
    rng = np.random.default_rng(10)
    spreads = []
    for g in unbalanced_corpus():
        eps, _ = least_core(g)
        assert eps > 0
        starts = random_preimputations(g.n, 100, 100.0, rng)
        s = realm_probe(g, starts)
        assert s.status_counts == {"StationaryPoint": 100}
        assert s.audit_failures == 0
        spreads.append(s.theta_final_spread)
    record_property("detail", f"max spread {max(spreads):.1e}")
    assert max(spreads) <= 1e-8
