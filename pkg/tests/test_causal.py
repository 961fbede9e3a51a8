import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from relboltz.causal import (bump_surface, flat_surface, gamma_bar, hitting_time, hypersurface_independence_check,
                             lemma_check, make_hypersurface, normal, normal_variation, hitting_time_bound,
                             hitting_bound_check, tilted_surface, variation_density)
from relboltz.collision import kernel_constant, kernel_hard_sphere
from relboltz.errors import NoCrossing, NotSpacelike
from relboltz.geometry import christoffel, inner
from relboltz.harness.checks import lemma_functions
from relboltz.phase_space import JuttnerField, PhasePoint, ZeroField
from relboltz.process import SimConfig
from relboltz.rng import CounterRNG


def test_flat_normal_is_time_axis(mink):
    V = flat_surface(mink, 0.0)
    assert np.array_equal(normal(V, np.array([0.0, 1.0, 2.0, 3.0])), [1.0, 0.0, 0.0, 0.0])


def test_tilted_normal(mink):
    a = 0.4
    V = tilted_surface(mink, [a, 0.0, 0.0])
    n = normal(V, np.zeros(4))
    assert np.allclose(n, np.array([1.0, a, 0.0, 0.0]) / math.sqrt(1 - a * a), atol=1e-15)


def test_schwarzschild_static_normal(schw):
    V = flat_surface(schw, 0.0)
    x = np.array([0.0, 5.0, 1.0, 0.0])
    n = normal(V, x)
    assert n[0] == pytest.approx(1 / math.sqrt(1 - 2 / 5), rel=1e-14)
    assert np.all(n[1:] == 0)
    assert inner(schw.metric(x), n, n) == pytest.approx(1.0, abs=1e-14)


def test_steep_surface_not_spacelike(mink):
    V = tilted_surface(mink, [1.2, 0.0, 0.0])
    with pytest.raises(NotSpacelike):
        normal(V, np.zeros(4))
    with pytest.raises(NotSpacelike):
        V.check_spacelike()


def test_make_hypersurface_kinds(mink):
    assert make_hypersurface(mink, "flat", {"t0": 2.0}).t0 == 2.0
    with pytest.raises(Exception):
        make_hypersurface(mink, "sphere", {})


def test_gamma_bar_examples_and_bound(mink, rng):
    V = flat_surface(mink, 0.0)
    assert gamma_bar(V, PhasePoint(np.zeros(4), np.array([1.0, 0, 0, 0]))) == 1.0
    v = np.array([math.sqrt(10), 3.0, 0, 0])
    assert gamma_bar(V, PhasePoint(np.zeros(4), v)) == pytest.approx(math.sqrt(10), rel=1e-15)
    W = bump_surface(mink, 0.2, 0.8, tilt=[0.3, 0.0, 0.0])
    n = 5000
    u = rng.spawn(3).uniform(np.arange(n), 6)
    xs = 2 * u[:, :3] - 1
    p = 4 * u[:, 3:] - 2
    vel = np.concatenate([np.sqrt(1 + np.sum(p * p, -1))[:, None], p], -1)
    gb = gamma_bar(W, PhasePoint(W.point(xs), vel))
    assert np.min(gb) >= 1 - 1e-12


def test_normal_variation_flat(mink):
    V = flat_surface(mink, 0.0)
    m = np.array([[0.0, 1.0, 2.0, 3.0]])
    assert np.allclose(normal_variation(V, m, 0.25), [[0.25, 1.0, 2.0, 3.0]], atol=1e-14)
    assert np.allclose(normal_variation(V, m, -0.25), [[-0.25, 1.0, 2.0, 3.0]], atol=1e-14)


def test_variation_density_minkowski_is_one(mink):
    V = tilted_surface(mink, [0.3, 0.1, 0.0])
    G, dG = variation_density(V, np.array([[0.1, 0.2, 0.0]]), 0.3)
    assert G[0] == pytest.approx(1.0, abs=1e-8)
    assert abs(dG[0]) <= 1e-6


def test_variation_density_flrw_volume_growth(frw):
    t0, eps = 1.0, 0.3
    V = flat_surface(frw, t0)
    G, dG = variation_density(V, np.array([[0.0, 0.0, 0.0], [0.4, -0.2, 0.1]]), eps)
    # a(t) = t
    assert np.allclose(G, ((t0 + eps) / t0) ** 3, rtol=1e-7)
    assert np.allclose(dG, 3 * (t0 + eps) ** 2 / t0**3, rtol=1e-6)


def test_hitting_time_flat(mink):
    V = flat_surface(mink, 0.0)
    H, hit = hitting_time(mink, PhasePoint(np.array([1.0, 0, 0, 0]), np.array([1.0, 0, 0, 0])), V, 5.0)
    assert H == pytest.approx(1.0, abs=1e-12)
    assert abs(hit.m[0]) <= 1e-12
    H, _ = hitting_time(mink, PhasePoint(np.array([1.0, 0, 0, 0]), np.array([math.sqrt(10), 3.0, 0, 0])), V, 5.0)
    assert H == pytest.approx(1 / math.sqrt(10), abs=1e-12)


def test_hitting_time_no_crossing(mink):
    V = flat_surface(mink, 0.0)
    with pytest.raises(NoCrossing):
        hitting_time(mink, PhasePoint(np.array([1.0, 0, 0, 0]), np.array([1.0, 0, 0, 0])), V, 0.5)


def test_hitting_time_schwarzschild_vs_event_root(schw):
    x = np.array([0.0, 10.0, math.pi / 2, 0.0])
    ut = 1 / math.sqrt(1 - 0.2)
    v = np.array([ut, -0.1, 0.0, 0.0])
    g = schw.metric(x)
    v[0] = math.sqrt((1 - g[1, 1] * v[1] ** 2) / g[0, 0])
    V = flat_surface(schw, -4.0)
    H, hit = hitting_time(schw, PhasePoint(x, v), V, 20.0, ds=0.01)

    def rhs(_, y):
        G = christoffel(schw, y[:4])
        return np.concatenate([-y[4:], np.einsum("kij,i,j->k", G, y[4:], y[4:])])

    def cross(_, y):
        return y[0] + 4.0

    cross.terminal = True
    sol = solve_ivp(rhs, (0, 20), np.concatenate([x, v]), method="DOP853", rtol=1e-13, atol=1e-13,
                    events=cross)
    assert abs(H - sol.t_events[0][0]) <= 1e-8
    assert np.max(np.abs(hit.m - sol.y_events[0][0][:4])) <= 1e-8


def test_hitting_time_bound_values(mink, schw):
    assert hitting_time_bound(flat_surface(mink, 0.0), np.array([1.0, 0, 0, 0])) == 1.0
    assert hitting_time_bound(tilted_surface(mink, [0.5, 0, 0]), np.array([1.0, 0, 0, 0])) == pytest.approx(2.0)
    assert hitting_time_bound(flat_surface(schw, 0.0), np.array([2.0, 6.0, 1.0, 0.0])) == 2.0
    assert hitting_time_bound(tilted_surface(schw, [0.01, 0, 0]), np.array([2.0, 6.0, 1.0, 0.0])) is None


def test_hitting_bound_free_flight_hits_at_level_over_dtds(mink):
    V = flat_surface(mink, 0.0)
    cfg = SimConfig(ds=0.05, chunk_size=256)
    rep = hitting_bound_check(V, np.array([1.0, 0, 0, 0]), 500, cfg, CounterRNG(2), ZeroField(),
                            kernel_constant(0.0), beta_probe=1.0)
    assert rep["all_within"]
    assert np.allclose(rep["H"], 1.0 / rep["start"].mdot[:, 0], atol=1e-9)


def test_hitting_bound_with_collisions(mink):
    V = flat_surface(mink, 0.0)
    cfg = SimConfig(ds=0.05, chunk_size=256)
    rep = hitting_bound_check(V, np.array([1.0, 0, 0, 0]), 500, cfg, CounterRNG(2), JuttnerField(2.0),
                            kernel_hard_sphere(1.0, 15.0), beta_probe=2.0)
    assert rep["bound_kind"] == "analytic" and rep["all_within"]


def test_hitting_bound_pilot_bound(schw):
    V = tilted_surface(schw, [0.01, 0.0, 0.0], t0=0.0, origin=[8.0, 0.0, 0.0])
    cfg = SimConfig(ds=0.05, chunk_size=256)
    rep = hitting_bound_check(V, np.array([1.0, 8.0, 1.2, 0.0]), 200, cfg, CounterRNG(4), ZeroField(),
                            kernel_constant(0.0), beta_probe=5.0, pilot=200)
    assert rep["bound_kind"] == "pilot" and rep["all_hit"]


def test_lemma_flat_residual(mink):
    V = flat_surface(mink, 0.0)
    f, h = lemma_functions(0.0, 0.3)
    rep = lemma_check(V, f, h, 0.3)
    assert rep["residual"] <= 1e-8
    assert abs(rep["boundary"]) <= 1e-12


def test_lemma_boundary_term_accounts_for_defect(mink):
    V = flat_surface(mink, 0.0)
    f, h = lemma_functions(0.0, 0.3, vanish=False)
    rep = lemma_check(V, f, h, 0.3)
    assert rep["residual"] > 1e-3
    assert rep["defect"] == pytest.approx(rep["boundary"], rel=1e-8)


def test_independence_free_flight_exact(mink):
    cfg = SimConfig(ds=0.05, chunk_size=256)
    sp = 0.3
    gam = 1 / math.sqrt(1 - sp * sp)
    phi = PhasePoint(np.zeros(4), np.array([gam, gam * sp, 0, 0]))
    V1 = tilted_surface(mink, [sp, 0, 0])
    V2 = bump_surface(mink, -0.1, 0.3, center=[-0.2, 0.3, 0.0], tilt=[sp, 0, 0])
    fin = JuttnerField(2.0, drift=[0.2, 0.0, 0.0])
    rep = hypersurface_independence_check(mink, ZeroField(), kernel_constant(0.0), phi, V1, V2, 50, cfg,
                                          CounterRNG(1), f_initial=fin)
    assert rep["agree"] and rep["difference"] == pytest.approx(0.0, abs=1e-12)


def test_independence_rejects_non_members(mink):
    cfg = SimConfig(ds=0.05)
    phi = PhasePoint(np.zeros(4), np.array([1.0, 0, 0, 0]))
    rep = hypersurface_independence_check(mink, ZeroField(), kernel_constant(0.0), phi, flat_surface(mink, 0.0),
                                          flat_surface(mink, -0.5), 10, cfg, CounterRNG(1))
    assert rep["members"] is False and rep["agree"] is None
    rep = hypersurface_independence_check(mink, ZeroField(), kernel_constant(0.0), phi, flat_surface(mink, 0.0),
                                          tilted_surface(mink, [0.3, 0, 0]), 10, cfg, CounterRNG(1))
    assert rep["agree"] is None and "orthogonal" in rep["reasons"][0]
