"""Named verification checks runnable from scenario files.

Every check takes (scenario, params, rng) and returns a dict with a boolean
``passed`` and JSON-safe ``metrics``. Parameters absent from the config
take the defaults below.
"""
from __future__ import annotations

import math
from typing import Callable, Dict

import numpy as np
from scipy import special

from ..causal import (bump_surface, flat_surface, gamma_bar, hitting_density_check,
                      hypersurface_independence_check, lemma_check, normal, hitting_bound_check,
                      tilted_surface)
from ..collision import (ScatterAngle, collide, collision_integral, kernel_constant, kernel_hard_sphere,
                         uniform_angles)
from ..errors import ConfigError
from ..geodesic import flow_to, geodesic_flow
from ..geometry import build_tetrad, christoffel, christoffel_fd, inner, schwarzschild
from ..phase_space import (JuttnerField, PhasePoint, SumField, canonical_momentum, juttner_energy_cdf,
                           sample_juttner_momenta, shell_error)
from ..process import (estimate_f, martingale_check, mean_collision_rate, simulate_backward,
                       simulate_forward, smooth_test_function, weak_stationarity_check)
from ..rng import CounterRNG
from ..stats import chi2_critical, ks_statistic, poisson_chi2

__all__ = ["CHECKS", "run_check", "register"]

CHECKS: Dict[str, Callable] = {}


def register(name):
    def deco(fn):
        CHECKS[name] = fn
        return fn
    return deco


def run_check(scenario, spec: dict, rng: CounterRNG) -> dict:
    name = spec["name"]
    if name not in CHECKS:
        raise ConfigError(f"checks: unknown check {name!r} (known: {', '.join(sorted(CHECKS))})")
    params = {k: v for k, v in spec.items() if k != "name"}
    out = CHECKS[name](scenario, params, rng)
    out.setdefault("metrics", {})
    out["name"] = name
    return out


def _beta(sc, params):
    if "beta" in params:
        return float(params["beta"])
    f = sc.field
    if not isinstance(f, JuttnerField):
        raise ConfigError("this check needs a Juttner field or an explicit beta")
    return f.beta


def _vel(chart, m, p_spatial):
    fr = chart.frame(np.asarray(m, float))
    p = np.asarray(p_spatial, dtype=float)
    p4 = np.concatenate([[math.sqrt(1.0 + p @ p)], p])
    return p4 @ fr.vectors


def _floor_ok(diff, se, ref, k=3.0):
    return bool(abs(diff) <= k * se + 1e-12 * abs(ref))


# --- geometry / geodesics --------------------------------------------------------


@register("christoffel_consistency")
def _christoffel(sc, params, rng):
    n = int(params.get("n", 1000))
    tol = float(params.get("tol", 1e-6))
    lo = np.asarray(params.get("lower", [0.0, -5.0, -5.0, -5.0]), float)
    hi = np.asarray(params.get("upper", [1.0, 5.0, 5.0, 5.0]), float)
    x = lo + (hi - lo) * rng.uniform(np.arange(n), 4)
    ch = sc.chart
    if ch.christoffel_fn is None:
        return {"passed": True, "metrics": {"skipped": "chart has no analytic Christoffel symbols"}}
    err = float(np.max(np.abs(christoffel(ch, x) - christoffel_fd(ch, x))))
    return {"passed": err <= tol, "metrics": {"max_abs_error": err, "n": n, "tol": tol}}


@register("geodesic_conservation")
def _geo_conservation(sc, params, rng):
    M = float(params.get("M", 1.0))
    r = float(params.get("r", 6.0))
    ds = float(params.get("ds", 1e-3))
    orbits = float(params.get("orbits", 1.0))
    tol = float(params.get("tol", 1e-8))
    ch = schwarzschild(M)
    vr = float(params.get("radial_velocity", 0.0))
    ut = 1.0 / math.sqrt(1.0 - 3.0 * M / r)
    up = ut * math.sqrt(M / r**3)
    x = np.array([0.0, r, math.pi / 2, 0.0])
    g = ch.metric(x)
    # nonzero radial velocity makes the orbit eccentric; re-solve ut for the shell
    ut = math.sqrt((1.0 - g[1, 1] * vr**2 - g[3, 3] * up**2) / g[0, 0])
    v = np.array([ut, vr, 0.0, up])
    S = orbits * 2 * math.pi / up
    path = geodesic_flow(ch, PhasePoint(x, v), S, ds)

    def EL(p):
        g = ch.metric(p.m)
        return g[0, 0] * p.mdot[0], -g[3, 3] * p.mdot[3]

    E0, L0 = EL(path[0][1])
    E1, L1 = EL(path[-1][1])
    dE = abs(E1 - E0) / orbits
    dL = abs(L1 - L0) / orbits
    shell = max(e for _, _, e in path)
    return {"passed": bool(dE <= tol and dL <= tol and shell <= 1e-9),
            "metrics": {"E": E0, "L": L0, "E_drift_per_orbit": dE, "L_drift_per_orbit": dL,
                        "max_shell_error": shell, "steps": len(path) - 1}}


# --- sampling --------------------------------------------------------------------


@register("juttner_sampler")
def _juttner_sampler(sc, params, rng):
    beta = _beta(sc, params)
    n = int(params.get("n", 100_000))
    observer = bool(params.get("observer", False))
    tol = float(params.get("ks_max", 0.01))
    p = sample_juttner_momenta(beta, rng, np.arange(n), observer=observer)
    g = np.sqrt(1.0 + np.sum(p * p, -1))
    ks = ks_statistic(g, lambda e: juttner_energy_cdf(beta, e, observer))
    return {"passed": ks <= tol, "metrics": {"ks": ks, "n": n, "beta": beta, "mean_energy": float(g.mean())}}


# --- collisions ------------------------------------------------------------------


def _random_pairs(sc, m, n, beta, rng):
    f = JuttnerField(beta)
    lanes = np.arange(n)
    a = f.sample_partner(sc.chart, m, rng, lanes)
    b = f.sample_partner(sc.chart, m, rng, lanes)
    u = rng.uniform(lanes, 2)
    return a, b, uniform_angles(u[:, 0], u[:, 1])


@register("collision_kinematics")
def _collision_kinematics(sc, params, rng):
    n = int(params.get("n", 100_000))
    beta = float(params.get("beta", 1.0))
    m = np.asarray(params.get("point", [0.0, 0.0, 0.0, 0.0]), float)
    tol = float(params.get("tol", 1e-12))
    ch = sc.chart
    a, b, ang = _random_pairs(sc, m, n, beta, rng)
    p, p2 = collide(ch, m, a, b, ang)
    mm = np.broadcast_to(m, a.shape)
    cons = float(np.max(np.abs(p + p2 - a - b)))
    shell = float(max(np.max(shell_error(ch, mm, p)), np.max(shell_error(ch, mm, p2))))
    q, q2 = collide(ch, m, a, b, ScatterAngle(np.zeros(n), np.zeros(n)))
    ident = float(max(np.max(np.abs(q - a)), np.max(np.abs(q2 - b))))
    sym = {}
    for kern in (kernel_constant(1.0), kernel_hard_sphere(1.0, 50.0)):
        w1 = kern(ch, mm, a, b, ang)
        w2 = kern(ch, mm, p, p2, ang)
        sym[kern.name] = float(np.max(np.abs(w1 - w2) / np.maximum(np.abs(w1), 1e-300)))
    ok = cons <= tol and shell <= tol and ident == 0.0 and all(v <= tol for v in sym.values())
    return {"passed": bool(ok), "metrics": {"conservation": cons, "shell": shell, "theta0_identity": ident,
                                            "symmetry": sym, "n": n}}


@register("collision_equilibrium")
def _collision_equilibrium(sc, params, rng):
    beta = _beta(sc, params)
    n = int(params.get("n", 1_000_000))
    npts = int(params.get("points", 5))
    f = JuttnerField(beta)
    m = np.zeros(4)
    kern = sc.kernel
    pts = sample_juttner_momenta(beta, rng, np.arange(npts))
    rows = []
    ok = True
    for p in pts:
        v = _vel(sc.chart, m, p)
        val, se = collision_integral(sc.chart, m, v, f, f, kern, n, rng, paired=False)
        good = abs(val) <= 3.0 * se
        ok &= good
        rows.append({"p": p.tolist(), "value": val, "stderr": se, "passed": bool(good)})
    return {"passed": bool(ok), "metrics": {"points": rows, "n": n, "beta": beta}}


# --- forward process ---------------------------------------------------------------


@register("thinning_poisson")
def _thinning_poisson(sc, params, rng):
    n = int(params.get("n", 10_000))
    S = float(params.get("horizon", 3.0))
    alpha = float(params.get("alpha", 0.01))
    kern = sc.kernel
    if kern.name != "constant":
        raise ConfigError("thinning_poisson needs the constant kernel")
    c = kern.params["c"]
    m = np.zeros(4)
    nf = float(sc.field.local_norm(sc.chart, m))
    v = sc.chart.observer(m)
    res = simulate_forward(sc.chart, PhasePoint(m, v), sc.field, kern, sc.sim, rng, n=n, s_max=S)
    stat, dof, pval = poisson_chi2(res.n_jumps, c * nf * S)
    crit = chi2_critical(dof, alpha)
    return {"passed": bool(stat <= crit), "metrics": {"chi2": stat, "dof": dof, "critical": crit, "p_value": pval,
                                                     "mean_jumps": float(res.n_jumps.mean()),
                                                     "expected_mean": c * nf * S}}


@register("interjump_exponential")
def _interjump(sc, params, rng):
    n_jumps = int(params.get("jumps", 10_000))
    per_path = int(params.get("per_path", 5))
    tol = float(params.get("ks_max", 0.01))
    kern = sc.kernel
    c = kern.params["c"]
    m = np.zeros(4)
    nf = float(sc.field.local_norm(sc.chart, m))
    rate = c * nf
    # only the first few gaps of each path are used; the horizon makes
    # censoring of those negligible (gaps cut by the horizon would bias KS)
    S = float(params.get("horizon", 20.0 / rate))
    paths = int(math.ceil(n_jumps / per_path))
    v = sc.chart.observer(m)
    res = simulate_forward(sc.chart, PhasePoint(m, v), sc.field, kern, sc.sim, rng, n=paths, s_max=S,
                           record=True)
    gaps = []
    censored = 0
    for evs in res.events:
        t = [0.0] + [e.s for e in evs if e.kind == "jump"][:per_path]
        censored += len(t) - 1 < per_path
        gaps.extend(np.diff(t).tolist())
    gaps = np.asarray(gaps)
    ks = ks_statistic(gaps, lambda x: 1.0 - np.exp(-rate * x))
    return {"passed": ks <= tol, "metrics": {"ks": ks, "jumps": int(gaps.size), "rate": rate,
                                            "censored_paths": int(censored)}}


@register("stationarity")
def _stationarity(sc, params, rng):
    beta = _beta(sc, params)
    n = int(params.get("n", 100_000))
    mft = float(params.get("mean_free_times", 5.0))
    tol = float(params.get("ks_max", 0.01))
    f = sc.field
    m = np.zeros(4)
    R, _ = mean_collision_rate(sc.chart, f, sc.kernel, int(params.get("rate_samples", 400_000)), rng)
    S = mft / R
    start = f.sample_partner(sc.chart, m, rng, np.arange(n))
    res = simulate_forward(sc.chart, PhasePoint(np.zeros((n, 4)), start), f, sc.kernel, sc.sim, rng, s_max=S)
    e = canonical_momentum(sc.chart, res.m, res.mdot)[:, 0]
    ks = ks_statistic(e, lambda x: juttner_energy_cdf(beta, x))
    return {"passed": ks <= tol, "metrics": {"ks": ks, "n": n, "horizon": S, "mean_rate": R,
                                            "mean_jumps": float(res.n_jumps.mean()),
                                            "lambda_bar": res.lambda_bar}}


@register("weak_stationarity")
def _weak_stationarity(sc, params, rng):
    beta = _beta(sc, params)
    n = int(params.get("n", 400_000))
    kinds = list(params.get("functions", ["energy", "px2", "mixed"]))
    radius = float(params.get("radius", 1.0))
    drift = float(params.get("drift", 0.8))
    region = (np.full(4, -radius), np.full(4, radius))
    eq = JuttnerField(beta)
    noneq = SumField([(0.5, JuttnerField(beta)), (0.5, JuttnerField(beta, drift=[drift, 0.0, 0.0]))])
    rows = []
    eq_ok = True
    max_noneq_z = 0.0
    for kind in kinds:
        h = smooth_test_function(sc.chart, np.zeros(4), radius, kind)
        val, se = weak_stationarity_check(sc.chart, eq, sc.kernel, h, region, n, rng)
        val2, se2 = weak_stationarity_check(sc.chart, noneq, sc.kernel, h, region, n, rng)
        z2 = abs(val2) / se2 if se2 > 0 else 0.0
        eq_ok &= abs(val) <= 3.0 * se
        max_noneq_z = max(max_noneq_z, z2)
        rows.append({"function": kind, "equilibrium": val, "equilibrium_stderr": se,
                     "nonstationary": val2, "nonstationary_stderr": se2, "nonstationary_z": z2})
    return {"passed": bool(eq_ok and max_noneq_z > 5.0),
            "metrics": {"functions": rows, "n": n, "max_nonstationary_z": max_noneq_z}}


# --- backward process ------------------------------------------------------------------


def _V(sc):
    return sc.hypersurface if sc.hypersurface is not None else flat_surface(sc.chart, 0.0)


@register("estimate_equilibrium")
def _estimate_equilibrium(sc, params, rng):
    n = int(params.get("n", 10_000))
    m = np.asarray(params.get("point", [1.0, 0.0, 0.0, 0.0]), float)
    v = _vel(sc.chart, m, params.get("momentum", [0.5, 0.0, 0.0]))
    f = sc.field
    est = estimate_f(sc.chart, PhasePoint(m, v), f, sc.kernel, _V(sc), f, n, sc.sim, rng)
    exact = float(f.eval(sc.chart, m, v))
    ok = _floor_ok(est.estimate - exact, est.stderr, exact)
    return {"passed": ok, "metrics": {"estimate": est.estimate, "stderr": est.stderr, "exact": exact,
                                      "mean_jumps": float(est.batch.n_jumps.mean())}}


def _bump_field(beta, center, width, amp):
    from .config import bump_modulation
    return JuttnerField(beta, density=amp, modulation=bump_modulation(center, width))


@register("causality")
def _causality(sc, params, rng):
    beta = _beta(sc, params)
    n = int(params.get("n", 10_000))
    m = np.asarray(params.get("point", [1.0, 0.0, 0.0, 0.0]), float)
    v = _vel(sc.chart, m, params.get("momentum", [0.0, 0.0, 0.0]))
    width = float(params.get("width", 0.4))
    amp = float(params.get("amplitude", 0.5))
    inside = np.asarray(params.get("inside", [0.3, 0.0, 0.0]), float)
    outside = np.asarray(params.get("outside", [1.5, 0.0, 0.0]), float)
    f = JuttnerField(beta)
    V = _V(sc)
    phi = PhasePoint(m, v)
    stream = rng.stream
    base = estimate_f(sc.chart, phi, f, sc.kernel, V, f, n, sc.sim, rng.spawn(stream))
    out = {}
    for label, c in (("outside", outside), ("inside", inside)):
        fin = SumField([(1.0, f), (1.0, _bump_field(beta, c, width, amp))])
        est = estimate_f(sc.chart, phi, f, sc.kernel, V, fin, n, sc.sim, rng.spawn(stream))
        d = est.values - base.values
        out[label] = {"delta": float(d.mean()), "stderr": float(d.std(ddof=1) / math.sqrt(n))}
    o, i = out["outside"], out["inside"]
    ok_out = abs(o["delta"]) <= 3.0 * o["stderr"]
    ok_in = i["stderr"] > 0 and i["delta"] >= 5.0 * i["stderr"]
    return {"passed": bool(ok_out and ok_in), "metrics": {**out, "n": n}}


@register("martingale")
def _martingale(sc, params, rng):
    beta = _beta(sc, params)
    n = int(params.get("n", 10_000))
    m = np.asarray(params.get("point", [1.0, 0.0, 0.0, 0.0]), float)
    v = _vel(sc.chart, m, params.get("momentum", [0.0, 0.0, 0.0]))
    npts = int(params.get("grid_points", 10))
    smax = float(params.get("s_end", 0.9))
    wrong = float(params.get("wrong_beta", beta * 1.3))
    grid = np.linspace(0.0, smax, npts)
    f = JuttnerField(beta)
    V = _V(sc)
    phi = PhasePoint(m, v)
    eq = martingale_check(sc.chart, phi, f, sc.kernel, V, sc.sim, n, grid, rng.spawn(rng.stream))
    bad = martingale_check(sc.chart, phi, JuttnerField(wrong), sc.kernel, V, sc.sim, n, grid,
                           rng.spawn(rng.stream), background=f)
    return {"passed": bool(eq["constant"] and bad["max_z"] > 5.0),
            "metrics": {"equilibrium_table": eq["table"], "equilibrium_max_z": eq["max_z"],
                        "wrong_beta": wrong, "wrong_table": bad["table"], "wrong_max_z": bad["max_z"]}}


@register("hitting_bound")
def _hitting_bound(sc, params, rng):
    n = int(params.get("n", 10_000))
    m = np.asarray(params.get("point", [1.0, 0.0, 0.0, 0.0]), float)
    # start velocities: Juttner at the background temperature unless given
    probe = params.get("beta_probe")
    if probe is None:
        probe = sc.field.beta if isinstance(sc.field, JuttnerField) else 0.5
    rep = hitting_bound_check(_V(sc), m, n, sc.sim, rng, sc.field, sc.kernel, beta_probe=float(probe))
    passed = rep["all_within"] if rep["bound_kind"] == "analytic" else rep["all_hit"]
    return {"passed": bool(passed), "metrics": {k: rep[k] for k in ("bound", "bound_kind", "n", "max_H",
                                                                    "all_hit", "all_within")}}


@register("hypersurface_independence")
def _independence(sc, params, rng):
    n = int(params.get("n", 2000))
    speed = float(params.get("speed", 0.3))
    lead = float(params.get("lead", 0.5))
    m = np.zeros(4)
    gam = 1.0 / math.sqrt(1.0 - speed**2)
    v = np.array([gam, gam * speed, 0.0, 0.0])
    V1 = tilted_surface(sc.chart, speed)
    V2 = bump_surface(sc.chart, float(params.get("amplitude", -0.1)), float(params.get("width", 0.3)),
                      center=params.get("center", [-0.2, 0.3, 0.0]), tilt=[speed, 0.0, 0.0])
    V2.check_spacelike()
    rep = hypersurface_independence_check(sc.chart, sc.field, sc.kernel, PhasePoint(m, v), V1, V2, n,
                                          sc.sim, rng, lead=lead)
    return {"passed": bool(rep["agree"]), "metrics": {k: v for k, v in rep.items()}}


@register("hitting_density")
def _hitting_density(sc, params, rng):
    beta = _beta(sc, params)
    n = int(params.get("n", 100_000))
    bins = int(params.get("bins", 20))
    lead = float(params.get("lead_time", 1.0))
    rep = hitting_density_check(sc.chart, beta, sc.kernel, sc.sim, rng, n=n, lead_time=lead, n_bins=bins)
    return {"passed": rep["all_within"],
            "metrics": {"bins": bins, "n_hits": rep["n_hits"], "max_abs_z": float(np.max(np.abs(rep["z"]))),
                        "z": rep["z"].tolist()}}


# --- normal-variation lemma ---------------------------------------------------------------


def lemma_functions(t0, eta, vanish=True):
    def f_test(x):
        t = x[..., 0] - t0
        return 1.0 + 0.3 * t + 0.2 * t**2 - 0.1 * t**3 + 0.05 * x[..., 1]

    def h_test(x):
        t = x[..., 0] - t0
        if vanish:
            return (1.0 - (t / eta) ** 2) ** 2 * (1.0 + 0.2 * x[..., 2])
        return 1.0 + 0.5 * t + 0.2 * x[..., 2]

    return f_test, h_test


@register("lemma")
def _lemma(sc, params, rng):
    t0 = float(params.get("t0", sc.hypersurface.t0 if sc.hypersurface is not None else 0.0))
    eta = float(params.get("eta", 0.3))
    V = sc.hypersurface if sc.hypersurface is not None else flat_surface(sc.chart, t0)
    f_test, h_test = lemma_functions(t0, eta)
    if sc.chart.flat:
        rep = lemma_check(V, f_test, h_test, eta, n_eps=int(params.get("n_eps", 16)),
                          deps=float(params.get("deps", 1e-3)))
        tol = float(params.get("tol", 1e-8))
        return {"passed": rep["residual"] <= tol, "metrics": rep}
    steps = [float(s) for s in params.get("deps_list", [4e-2, 2e-2, 1e-2])]
    res = []
    for i, d in enumerate(steps):
        r = lemma_check(V, f_test, h_test, eta, n_eps=int(params.get("n_eps", 16)) * 2**i, deps=d)
        res.append(r["residual"])
    slope = float(np.polyfit(np.log(steps), np.log(res), 1)[0])
    return {"passed": slope >= float(params.get("min_slope", 2.0)) - float(params.get("slope_tol", 0.0)),
            "metrics": {"deps": steps, "residuals": res, "slope": slope}}
