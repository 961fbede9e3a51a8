import math

import numpy as np
import pytest

from relboltz.causal import flat_surface
from relboltz.collision import kernel_constant, kernel_hard_sphere
from relboltz.errors import ConfigError, NoHit, ThinningViolation
from relboltz.phase_space import JuttnerField, PhasePoint, SumField, ZeroField
from relboltz.process import (SimConfig, estimate_f, majorant, martingale_check, mean_collision_rate,
                              simulate_backward, simulate_forward, smooth_test_function,
                              weak_stationarity_check, write_events_csv)
from relboltz.rng import CounterRNG
from relboltz.stats import chi2_critical, poisson_chi2

HS = kernel_hard_sphere(1.0, 15.0)


def _rest(n=None):
    m = np.array([1.0, 0.0, 0.0, 0.0])
    v = np.array([1.0, 0.0, 0.0, 0.0])
    if n is None:
        return PhasePoint(m, v)
    return PhasePoint(np.tile(m, (n, 1)), np.tile(v, (n, 1)))


def test_sim_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(ds=0.0)
    with pytest.raises(ConfigError):
        SimConfig(workers=0)
    with pytest.raises(ConfigError):
        SimConfig(lambda_bar=-1.0)


def test_forward_without_collisions_is_geodesic(schw):
    x = np.array([0.0, 8.0, math.pi / 2, 0.0])
    g = schw.metric(x)
    v = np.array([1 / math.sqrt(g[0, 0]), 0.0, 0.0, 0.0])
    res = simulate_forward(schw, PhasePoint(x, v), ZeroField(), kernel_constant(0.0), SimConfig(ds=0.01), CounterRNG(1),
                           n=3, s_max=2.0)
    assert np.all(res.n_jumps == 0)
    assert np.allclose(res.s, 2.0)
    # radial free fall from rest: r decreases, all lanes identical
    assert np.all(res.m[:, 1] < 8.0)
    assert np.array_equal(res.m[0], res.m[2])


def test_majorant_and_lambda_check(mink):
    f = JuttnerField(1.0)
    need = majorant(mink, f, HS)
    assert need == pytest.approx(4 * math.pi * HS.rate_bound * float(f.local_norm(mink, np.zeros(4))))
    with pytest.raises(ConfigError):
        simulate_forward(mink, _rest(), f, HS, SimConfig(lambda_bar=0.5 * need), CounterRNG(1), n=4)


def test_thinning_violation_when_bound_is_wrong(mink):
    # a kernel whose declared bound understates its value
    from relboltz.collision import CollisionKernel
    bad = CollisionKernel("bad", lambda chart, m, a, b, ang: np.full(np.shape(a)[:-1], 1.0), 1e-3)
    with pytest.raises(ThinningViolation):
        simulate_forward(mink, _rest(), JuttnerField(1.0), bad, SimConfig(), CounterRNG(1), n=200, s_max=5.0)


def test_jump_counts_are_poisson(mink):
    f = JuttnerField(1.0)
    c, S = 1.0, 3.0
    res = simulate_forward(mink, _rest(), f, kernel_constant(c), SimConfig(lambda_bar=2.0, chunk_size=1000),
                           CounterRNG(2), n=5000, s_max=S)
    mu = c * float(f.local_norm(mink, np.zeros(4))) * S
    stat, dof, _ = poisson_chi2(res.n_jumps, mu)
    assert stat <= chi2_critical(dof, 0.01)
    assert np.all(res.n_candidates >= res.n_jumps)


def test_backward_free_flight_weight_one(mink):
    V = flat_surface(mink, 0.0)
    res = simulate_backward(mink, _rest(), ZeroField(), kernel_constant(0.0), V, SimConfig(), CounterRNG(3), n=10)
    assert np.all(res.hit) and np.allclose(res.s, 1.0, atol=1e-12)
    assert np.all(res.log_weight == 0.0)


def test_backward_rejects_start_in_past(mink):
    V = flat_surface(mink, 2.0)
    with pytest.raises(ValueError):
        simulate_backward(mink, _rest(), ZeroField(), kernel_constant(0.0), V, SimConfig(), CounterRNG(3), n=2)


def test_nohit_raised(mink):
    V = flat_surface(mink, 0.0)
    cfg = SimConfig(nohit_factor=1.0)
    # start far to the future but cap the budget below the required time
    phi = PhasePoint(np.array([5.0, 0, 0, 0]), np.array([1.0, 0, 0, 0]))
    with pytest.raises(NoHit):
        simulate_backward(mink, phi, ZeroField(), kernel_constant(0.0), V, cfg, CounterRNG(3), n=2, hit_bound=1.0)


def test_estimate_at_equilibrium_is_exact(mink):
    f = JuttnerField(2.0)
    V = flat_surface(mink, 0.0)
    v = np.array([math.sqrt(1.25), 0.5, 0.0, 0.0])
    phi = PhasePoint(np.array([1.0, 0, 0, 0]), v)
    est = estimate_f(mink, phi, f, HS, V, f, 500, SimConfig(chunk_size=256), CounterRNG(4))
    exact = float(f.eval(mink, phi.m, v))
    assert abs(est.estimate - exact) <= 1e-12 * exact
    assert est.batch.n_jumps.sum() > 0


def test_estimate_free_flight_transports_data(mink):
    # with W = 0 the estimator is f_initial at the straight-line foot point
    fin = JuttnerField(2.0, drift=[0.3, 0.0, 0.0])
    V = flat_surface(mink, 0.0)
    v = np.array([math.sqrt(1.25), 0.5, 0.0, 0.0])
    phi = PhasePoint(np.array([1.0, 0.2, 0, 0]), v)
    est = estimate_f(mink, phi, ZeroField(), kernel_constant(0.0), V, fin, 4, SimConfig(), CounterRNG(4))
    foot = phi.m - v / v[0]
    assert est.estimate == pytest.approx(float(fin.eval(mink, foot, v)), rel=1e-12)
    assert est.stderr == pytest.approx(0.0, abs=1e-15)


def test_causality_outside_cone_has_no_effect(mink):
    from relboltz.harness.config import bump_modulation
    f = JuttnerField(2.0)
    V = flat_surface(mink, 0.0)
    phi = _rest()
    cfg = SimConfig(chunk_size=256)
    base = estimate_f(mink, phi, f, HS, V, f, 1000, cfg, CounterRNG(5))
    far = SumField([(1.0, f), (1.0, JuttnerField(2.0, density=0.5, modulation=bump_modulation([1.5, 0, 0], 0.4)))])
    near = SumField([(1.0, f), (1.0, JuttnerField(2.0, density=0.5, modulation=bump_modulation([0.3, 0, 0], 0.4)))])
    d_far = estimate_f(mink, phi, f, HS, V, far, 1000, cfg, CounterRNG(5)).values - base.values
    d_near = estimate_f(mink, phi, f, HS, V, near, 1000, cfg, CounterRNG(5)).values - base.values
    assert np.all(d_far == 0.0)
    assert d_near.mean() >= 5 * d_near.std(ddof=1) / math.sqrt(1000)


def test_martingale_constant_at_equilibrium_and_drift_off(mink):
    f = JuttnerField(2.0)
    V = flat_surface(mink, 0.0)
    grid = np.linspace(0.0, 0.9, 10)
    cfg = SimConfig(chunk_size=256)
    eq = martingale_check(mink, _rest(), f, HS, V, cfg, 1000, grid, CounterRNG(6))
    assert eq["constant"] and len(eq["table"]) == 10
    bad = martingale_check(mink, _rest(), JuttnerField(2.6), HS, V, cfg, 1000, grid, CounterRNG(6), background=f)
    assert bad["max_z"] > 5


def test_weak_stationarity_zero_function_exact(mink):
    h = smooth_test_function(mink, np.zeros(4), 1.0, "zero")
    assert weak_stationarity_check(mink, JuttnerField(2.0), HS, h, (-np.ones(4), np.ones(4)), 100,
                                   CounterRNG(7)) == (0.0, 0.0)


def test_weak_stationarity_equilibrium_vs_drifting_mixture(mink):
    region = (-np.ones(4), np.ones(4))
    h = smooth_test_function(mink, np.zeros(4), 1.0, "px2")
    val, se = weak_stationarity_check(mink, JuttnerField(2.0), HS, h, region, 200_000, CounterRNG(8))
    assert abs(val) <= 3 * se
    mix = SumField([(0.5, JuttnerField(2.0)), (0.5, JuttnerField(2.0, drift=[0.8, 0, 0]))])
    val, se = weak_stationarity_check(mink, mix, HS, h, region, 200_000, CounterRNG(8))
    assert abs(val) > 5 * se


def test_weak_stationarity_antithetic_unbiased_for_inhomogeneous_field(mink):
    from relboltz.harness.config import bump_modulation
    region = (-np.ones(4), np.ones(4))
    h = smooth_test_function(mink, np.zeros(4), 1.0, "px2")
    f = SumField([(1.0, JuttnerField(2.0)),
                  (1.0, JuttnerField(2.0, density=0.8, modulation=bump_modulation([0.4, 0.2, 0.0], 0.7)))])
    a, sa = weak_stationarity_check(mink, f, HS, h, region, 100_000, CounterRNG(13))
    b, sb = weak_stationarity_check(mink, f, HS, h, region, 100_000, CounterRNG(14), antithetic=False)
    assert abs(a - b) <= 3 * math.hypot(sa, sb)
    assert sa < sb


def test_smooth_test_function_kinds(mink):
    with pytest.raises(ValueError):
        smooth_test_function(mink, np.zeros(4), 1.0, "cubic")
    h = smooth_test_function(mink, np.zeros(4), 1.0, "energy")
    assert h(np.array([2.0, 0, 0, 0]), np.array([1.0, 0, 0, 0])) == 0.0
    assert h(np.zeros(4), np.array([1.0, 0, 0, 0])) == pytest.approx(1.0)


def test_mean_collision_rate_constant_kernel(mink):
    f = JuttnerField(1.0)
    r, se = mean_collision_rate(mink, f, kernel_constant(2.0), 100, CounterRNG(9))
    assert r == pytest.approx(2.0 * float(f.local_norm(mink, np.zeros(4))), rel=1e-14)


def test_reproducible_across_workers_and_calls(mink):
    f = JuttnerField(2.0)
    start = f.sample_partner(mink, np.zeros(4), CounterRNG(10), np.arange(600))
    phi = PhasePoint(np.zeros((600, 4)), start)
    runs = [simulate_forward(mink, phi, f, HS, SimConfig(workers=w, chunk_size=128, s_max=0.5), CounterRNG(11))
            for w in (1, 4, 1)]
    for r in runs[1:]:
        assert np.array_equal(r.m, runs[0].m) and np.array_equal(r.mdot, runs[0].mdot)
        assert np.array_equal(r.n_jumps, runs[0].n_jumps)


def test_event_log_csv(tmp_path, mink):
    res = simulate_forward(mink, _rest(), JuttnerField(1.0), kernel_constant(1.0), SimConfig(lambda_bar=2.0),
                           CounterRNG(12), n=3, s_max=3.0, record=True)
    assert all(e.kind in ("jump", "flight-step", "hit", "abort") for evs in res.events for e in evs)
    out = tmp_path / "ev.csv"
    write_events_csv(out, res.events)
    lines = out.read_text().splitlines()
    assert lines[0].startswith("#") and "schema_version" in lines[0]
    assert len(lines) == 2 + sum(len(e) for e in res.events)
