"""Spacelike hypersurfaces, hitting times and the normal-variation machinery.

A hypersurface is a graph V = {t = tau(x)} over the spatial coordinates of a
chart whose x[0] is a global time function. Its level function
``t - tau(x)`` is positive to the future of V.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (GeodesicAbort, LeftDomain, NoCrossing, NotSpacelike, OutOfDomain,
                     VariationFold)
from .geodesic import RENORM_TOL, MAX_HALVINGS, _try_step, flow_to
from .geometry import Chart, inner
from .phase_space import PhasePoint

__all__ = [
    "Hypersurface",
    "flat_surface",
    "tilted_surface",
    "bump_surface",
    "make_hypersurface",
    "normal",
    "gamma_bar",
    "normal_variation",
    "variation_density",
    "fly",
    "hitting_time",
    "hitting_time_bound",
    "hitting_bound_check",
    "lemma_check",
    "hypersurface_independence_check",
    "hitting_density_check",
]

BISECT_TOL = 1e-10


def _bump(r2):
    """C^2 compactly supported profile (1 - r^2)^3 on r < 1."""
    b = np.clip(1.0 - r2, 0.0, None)
    return b**3


def _bump_grad(r2):
    """d/d(r^2) of _bump."""
    b = np.clip(1.0 - r2, 0.0, None)
    return -3.0 * b**2


@dataclass(frozen=True)
class Hypersurface:
    """t = t0 + tilt . (x - origin) + amp * bump(|x - center| / width).

    ``bounds`` (3, 2) limits the spatial probe region used by the spacelike
    check and the variation-fold probe.
    """

    chart: Chart
    t0: float = 0.0
    tilt: np.ndarray = field(default_factory=lambda: np.zeros(3))
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    amp: float = 0.0
    width: float = 1.0
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bounds: np.ndarray = field(default_factory=lambda: np.array([[-1.0, 1.0]] * 3))
    kind: str = "flat"

    def __post_init__(self):
        for name in ("tilt", "origin", "center", "bounds"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.width <= 0:
            raise ValueError("bump width must be positive")

    @property
    def linear(self) -> bool:
        return self.amp == 0.0

    @property
    def grad_bound(self) -> float:
        """Upper bound of |grad tau| (Euclidean, coordinate components)."""
        # max of |d/dr (1-r^2)^3| / width on [0, 1] is 6 r (1-r^2)^2 at r = 1/sqrt(5)
        r = 1.0 / math.sqrt(5.0)
        bump_max = 6.0 * r * (1.0 - r * r) ** 2 / self.width
        return float(np.linalg.norm(self.tilt) + abs(self.amp) * bump_max)

    def tau(self, xs):
        xs = np.asarray(xs, dtype=float)
        out = self.t0 + (xs - self.origin) @ self.tilt
        if self.amp:
            d = (xs - self.center) / self.width
            out = out + self.amp * _bump(np.sum(d * d, axis=-1))
        return out

    def grad_tau(self, xs):
        xs = np.asarray(xs, dtype=float)
        gr = np.broadcast_to(self.tilt, xs.shape).copy()
        if self.amp:
            d = (xs - self.center) / self.width
            gr = gr + (self.amp * 2.0 / self.width * _bump_grad(np.sum(d * d, axis=-1)))[..., None] * d
        return gr

    def level(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., 0] - self.tau(x[..., 1:])

    def point(self, xs):
        """Spacetime point of V above spatial coordinates ``xs``."""
        xs = np.asarray(xs, dtype=float)
        return np.concatenate([self.tau(xs)[..., None], xs], axis=-1)

    def tangents(self, xs):
        """Coordinate tangents d/dx^i of the graph, shape (..., 3, 4)."""
        gr = self.grad_tau(xs)
        shape = np.shape(xs)[:-1]
        t = np.zeros(shape + (3, 4))
        t[..., :, 0] = gr
        t[..., [0, 1, 2], [1, 2, 3]] = 1.0
        return t

    def induced_metric(self, xs):
        xs = np.asarray(xs, dtype=float)
        T = self.tangents(xs)
        g = self.chart.metric(self.point(xs))
        return np.einsum("...ai,...ij,...bj->...ab", T, g, T)

    def probe_grid(self, n: int = 5):
        axes = [np.linspace(lo, hi, n) for lo, hi in self.bounds]
        return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)

    def check_spacelike(self, n: int = 5):
        """Raise NotSpacelike unless the induced metric is negative-definite on the probe grid."""
        xs = self.probe_grid(n)
        ev = np.linalg.eigvalsh(self.induced_metric(xs))
        if np.any(ev >= 0):
            bad = xs[np.any(ev >= 0, axis=-1)][0]
            raise NotSpacelike(f"hypersurface is not spacelike near x={bad.tolist()}")
        return True


def flat_surface(chart, t0=0.0, **kw) -> Hypersurface:
    return Hypersurface(chart, t0=t0, kind="flat", **kw)


def tilted_surface(chart, tilt, t0=0.0, origin=(0.0, 0.0, 0.0), **kw) -> Hypersurface:
    tilt = np.asarray(tilt, dtype=float)
    if tilt.ndim == 0:
        tilt = np.array([float(tilt), 0.0, 0.0])
    return Hypersurface(chart, t0=t0, tilt=tilt, origin=np.asarray(origin, float), kind="tilted", **kw)


def bump_surface(chart, amp, width, t0=0.0, center=(0.0, 0.0, 0.0), tilt=(0.0, 0.0, 0.0),
                 origin=(0.0, 0.0, 0.0), **kw) -> Hypersurface:
    return Hypersurface(chart, t0=t0, tilt=np.asarray(tilt, float), origin=np.asarray(origin, float),
                        amp=float(amp), width=float(width), center=np.asarray(center, float),
                        kind="bump", **kw)


def make_hypersurface(chart, kind: str = "flat", params: Optional[dict] = None) -> Hypersurface:
    params = dict(params or {})
    if kind == "flat":
        V = flat_surface(chart, **params)
    elif kind in ("tilted", "tilted-plane", "tilted_plane"):
        V = tilted_surface(chart, params.pop("tilt", params.pop("alpha", 0.0)), **params)
    elif kind == "bump":
        V = bump_surface(chart, params.pop("amp", params.pop("amplitude", 0.0)),
                         params.pop("width", 1.0), **params)
    else:
        raise ValueError(f"unknown hypersurface kind {kind!r}")
    V.check_spacelike()
    return V


# --- normals -------------------------------------------------------------------


def normal(V: Hypersurface, m):
    """Future unit normal: the metric dual of the conormal dt - d tau, normalized."""
    m = np.asarray(m, dtype=float)
    g = V.chart.metric(m)
    n_low = np.concatenate([np.ones(m.shape[:-1] + (1,)), -V.grad_tau(m[..., 1:])], axis=-1)
    ginv = np.linalg.inv(g)
    up = np.einsum("...ij,...j->...i", ginv, n_low)
    nn = np.einsum("...i,...i->...", up, n_low)
    if np.any(nn <= 0):
        raise NotSpacelike("conormal is not timelike: hypersurface not spacelike here")
    return up / np.sqrt(nn)[..., None]


def gamma_bar(V: Hypersurface, phi: PhasePoint):
    """g(varpi, mdot) at the base point of ``phi``."""
    m = np.asarray(phi.m, dtype=float)
    return inner(V.chart.metric(m), normal(V, m), np.asarray(phi.mdot, dtype=float))


# --- normal variation ----------------------------------------------------------


def normal_variation(V: Hypersurface, m, eps, ds: float = 1e-2, check_fold: bool = False):
    """Phi_eps(m): position after proper time eps along the normal geodesic from m."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    eps = np.broadcast_to(np.asarray(eps, dtype=float), m.shape[:1])
    out = m.copy()
    for sgn in (1, -1):
        sel = np.sign(eps) == sgn
        if np.any(sel):
            xs, _, _, _ = flow_to(V.chart, m[sel], normal(V, m[sel]), np.abs(eps[sel]),
                                  ds=min(ds, float(np.max(np.abs(eps[sel])))),
                                  direction=sgn)
            out[sel] = xs
    if check_fold:
        _check_fold(out, m)
    return out


def _check_fold(images, sources, tol=1e-9):
    d_img = np.linalg.norm(images[:, None, :] - images[None, :, :], axis=-1)
    d_src = np.linalg.norm(sources[:, None, :] - sources[None, :, :], axis=-1)
    np.fill_diagonal(d_img, np.inf)
    np.fill_diagonal(d_src, np.inf)
    if np.any(d_img < tol * np.maximum(1.0, d_src)):
        raise VariationFold("normal variation maps distinct probe points together; shrink eta")


def _central(fn, e, deps, order):
    """d/de of fn at e by a central difference of the given order (2 or 4)."""
    if order == 2:
        return (fn(e + deps) - fn(e - deps)) / (2.0 * deps)
    if order == 4:
        return (8.0 * (fn(e + deps) - fn(e - deps)) - (fn(e + 2 * deps) - fn(e - 2 * deps))) / (12.0 * deps)
    raise ValueError("order must be 2 or 4")


def variation_density(V: Hypersurface, xs, eps, h: float = 1e-4, deps: float = 1e-4, ds: float = 1e-2,
                      order: int = 2):
    """G_eps at the points of V above ``xs`` and its eps-derivative.

    G is the ratio of induced volume elements sqrt|det h| of the leaf
    V_eps = Phi_eps(V) and of V, with the Jacobian of Phi_eps taken by
    central differences of step ``h`` in the spatial coordinates. The
    eps-derivative is a central difference of step ``deps`` and ``order``.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))

    def G(e):
        n = xs.shape[0]
        jac = np.empty((n, 3, 4))
        for i in range(3):
            dx = np.zeros(3)
            dx[i] = h
            plus = normal_variation(V, V.point(xs + dx), e, ds)
            minus = normal_variation(V, V.point(xs - dx), e, ds)
            jac[:, i, :] = (plus - minus) / (2.0 * h)
        base = normal_variation(V, V.point(xs), e, ds)
        g = V.chart.metric(base)
        hmat = np.einsum("nai,nij,nbj->nab", jac, g, jac)
        return np.sqrt(np.abs(np.linalg.det(hmat)))

    g0 = np.sqrt(np.abs(np.linalg.det(V.induced_metric(xs))))
    val = G(eps) / g0
    dval = _central(G, eps, deps, order) / g0
    return val, dval


# --- flight with hitting detection ---------------------------------------------


def fly(chart: Chart, x, v, length, sgn: int, ds: float, V: Optional[Hypersurface] = None):
    """Advance lanes by proper time ``length`` (array) in direction ``sgn``.

    When V is given, lanes whose path crosses V stop on it; the crossing is
    refined to BISECT_TOL in proper time. Returns
    (x, v, travelled, hit, aborted, max shell correction).
    Lanes that leave the chart or exhaust step halving are flagged aborted
    and frozen where they were.
    """
    x = np.array(x, dtype=float, copy=True)
    v = np.array(v, dtype=float, copy=True)
    n = x.shape[0]
    length = np.broadcast_to(np.asarray(length, dtype=float), (n,)).copy()
    travelled = np.zeros(n)
    hit = np.zeros(n, dtype=bool)
    aborted = np.zeros(n, dtype=bool)
    corr = np.zeros(n)
    if n == 0:
        return x, v, travelled, hit, aborted, corr
    if chart.flat:
        xn = x + (sgn * length)[:, None] * v
        if V is not None:
            l0 = V.level(x)
            l1 = V.level(xn)
            cross = (l0 > 0) & (l1 <= 0) if sgn < 0 else (l0 < 0) & (l1 >= 0)
            if np.any(cross):
                idx = np.nonzero(cross)[0]
                if V.linear:
                    sstar = length[idx] * l0[idx] / (l0[idx] - l1[idx])
                else:
                    sstar = _bisect_line(V, x[idx], v[idx], sgn, length[idx])
                xn[idx] = x[idx] + (sgn * sstar)[:, None] * v[idx]
                length[idx] = sstar
                hit[idx] = True
        inside = chart.in_domain(xn)
        aborted = ~inside
        xn[aborted] = x[aborted]
        length[aborted] = 0.0
        return xn, v, length, hit, aborted, corr

    halv = np.zeros(n, dtype=np.int64)
    active = length > 0
    while np.any(active):
        idx = np.nonzero(active)[0]
        h = np.minimum(ds / 2.0 ** halv[idx], length[idx] - travelled[idx])
        xn, vn, c, inside = _try_step(chart, x[idx], v[idx], sgn * h)
        ok = inside & (c <= RENORM_TOL)
        rej = idx[~ok]
        halv[rej] += 1
        dead = rej[halv[rej] > MAX_HALVINGS]
        aborted[dead] = True
        acc = idx[ok]
        if V is not None and acc.size:
            lev = V.level(xn[ok])
            crossed = lev <= 0 if sgn < 0 else lev >= 0
            if np.any(crossed):
                ci = np.nonzero(crossed)[0]
                lanes_c = acc[ci]
                sstar, xs_, vs_ = _bisect_step(chart, V, x[lanes_c], v[lanes_c], sgn, h[ok][ci])
                xn[ok.nonzero()[0][ci]] = xs_
                vn[ok.nonzero()[0][ci]] = vs_
                h_ok = h[ok].copy()
                h_ok[ci] = sstar
                hit[lanes_c] = True
            else:
                h_ok = h[ok]
        else:
            h_ok = h[ok]
        x[acc] = xn[ok]
        v[acc] = vn[ok]
        travelled[acc] += h_ok
        corr[acc] = np.maximum(corr[acc], c[ok])
        halv[acc] = 0
        active = (length - travelled > 1e-15 * np.maximum(1.0, length)) & ~hit & ~aborted
    return x, v, travelled, hit, aborted, corr


def _bisect_line(V, x, v, sgn, length, iters=80):
    lo = np.zeros(length.shape)
    hi = length.copy()
    l0 = V.level(x)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lm = V.level(x + (sgn * mid)[:, None] * v)
        same = np.sign(lm) == np.sign(l0)
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
        if np.all(hi - lo <= BISECT_TOL * 1e-3):
            break
    return hi


def _bisect_step(chart, V, x, v, sgn, h):
    """Bisection on the step size of a single RK4 step from (x, v) for the V crossing."""
    lo = np.zeros(h.shape)
    hi = h.copy()
    l0 = V.level(x)
    while np.any(hi - lo > BISECT_TOL):
        mid = 0.5 * (lo + hi)
        xm, _, _, _ = _try_step(chart, x, v, sgn * mid)
        same = np.sign(V.level(xm)) == np.sign(l0)
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    xs, vs, _, _ = _try_step(chart, x, v, sgn * hi)
    return hi, xs, vs


def hitting_time(chart: Chart, phi: PhasePoint, V: Hypersurface, s_max: float, ds: float = 1e-2,
                 direction=-1):
    """First proper time at which the geodesic from ``phi`` meets V.

    Returns (H, PhasePoint on V). Raises NoCrossing when V is not met within
    ``s_max``.
    """
    sgn = -1 if direction in (-1, "past") else 1
    x = np.atleast_2d(np.asarray(phi.m, dtype=float))
    v = np.atleast_2d(np.asarray(phi.mdot, dtype=float))
    xs, vs, trav, hit, aborted, _ = fly(chart, x, v, np.full(x.shape[0], float(s_max)), sgn, ds, V)
    if np.any(aborted):
        raise LeftDomain("path left the chart before meeting the hypersurface")
    if not np.all(hit):
        raise NoCrossing(f"no crossing of the hypersurface within s = {s_max}")
    if np.ndim(phi.m) == 1:
        return float(trav[0]), PhasePoint(xs[0], vs[0])
    return trav, PhasePoint(xs, vs)


# --- hitting-time bound ----------------------------------------------------------


def hitting_time_bound(V: Hypersurface, m) -> Optional[float]:
    """Proper-time bound for past-directed timelike paths from m to meet V.

    Along any such path d(level)/ds >= dt/ds - |grad tau| |dx/ds|. In
    Minkowski |dx/ds| <= dt/ds and dt/ds >= 1, so T = level / (1 - |grad tau|).
    For t-level surfaces in charts with g_tt <= 1 and g_ti = 0 every unit
    timelike vector has dt/ds >= 1, giving T = level. Other cases return None.
    """
    m = np.asarray(m, dtype=float)
    lev = float(V.level(m))
    if lev <= 0:
        return 0.0
    chart = V.chart
    if chart.flat:
        gb = V.grad_bound
        return lev / (1.0 - gb) if gb < 1.0 else None
    if V.linear and not np.any(V.tilt) and chart.name in ("schwarzschild", "flrw"):
        return lev
    return None


def hitting_bound_check(V: Hypersurface, m, n: int, cfg, rng, field, kernel, beta_probe: float = 0.5,
                      pilot: int = 1000, safety: float = 1.5, tol: float = 1e-9):
    """Run n past-directed process paths from m with random velocities and compare H to T(m)."""
    from .phase_space import JuttnerParams, juttner_sample
    from .process import simulate_backward

    m = np.asarray(m, dtype=float)
    chart = V.chart
    T = hitting_time_bound(V, m)
    kind = "analytic"
    if T is None:
        kind = "pilot"
        prng = rng.spawn(rng.stream + 7919)
        u = chart.observer(m)
        start = juttner_sample(chart, JuttnerParams(beta_probe, u), chart.frame(m), prng, pilot)
        res = simulate_backward(chart, start, field, kernel, V, cfg, prng)
        T = safety * float(np.max(res.s))
    u = chart.observer(m)
    start = juttner_sample(chart, JuttnerParams(beta_probe, u), chart.frame(m), rng, n)
    res = simulate_backward(chart, start, field, kernel, V, cfg, rng, hit_bound=T if kind == "analytic" else None)
    H = res.s
    return {
        "bound": T,
        "bound_kind": kind,
        "n": int(n),
        "max_H": float(np.max(H)),
        "all_hit": bool(np.all(res.hit)),
        "all_within": bool(np.all(res.hit) and np.all(H <= T + tol)),
        "H": H,
        "start": start,
    }


# --- integration-by-parts lemma --------------------------------------------------


def lemma_check(V: Hypersurface, f_test: Callable, h_test: Callable, eta: float, n_eps: int = 16,
                deps: float = 1e-3, probes=None, probe_n: int = 3, ds: float = 1e-2, G_step: float = 1e-4,
                order: int = 4):
    """Both sides of the duality int f (d_eps h) G = - int (d_eps f) h G - int f h d_eps G.

    The integral runs over (-eta, eta) x probe points of V (weighted by the
    induced volume of V), with f and h evaluated at Phi_eps(m) and every
    eps-derivative taken by a central difference of step ``deps`` and
    ``order`` (the fourth-order stencil is exact on quartics). Returns a
    dict with both sides, their relative residual and the boundary term
    [f h G] at +-eta (which the identity drops).
    """
    xs = V.probe_grid(probe_n) if probes is None else np.atleast_2d(np.asarray(probes, float))
    base = V.point(xs)
    vol = np.sqrt(np.abs(np.linalg.det(V.induced_metric(xs))))
    wv = vol / len(xs)
    nodes, weights = np.polynomial.legendre.leggauss(n_eps)
    eps_nodes = eta * nodes
    w_eps = eta * weights
    _check_fold(normal_variation(V, base, eta, ds), base)

    def at(e):
        return normal_variation(V, base, np.full(len(base), e), ds)

    left = right = 0.0
    for e, we in zip(eps_nodes, w_eps):
        p0 = at(e)
        f0 = f_test(p0)
        h0 = h_test(p0)
        dh = _central(lambda u: h_test(at(u)), e, deps, order)
        df = _central(lambda u: f_test(at(u)), e, deps, order)
        G, dG = variation_density(V, xs, e, h=G_step, deps=deps, ds=ds, order=order)
        left += we * np.sum(wv * f0 * dh * G)
        right += we * np.sum(wv * (-df * h0 * G - f0 * h0 * dG))
    bnd = 0.0
    for e, sgn in ((eta, 1.0), (-eta, -1.0)):
        p = at(e)
        G, _ = variation_density(V, xs, e, h=G_step, deps=deps, ds=ds)
        bnd += sgn * np.sum(wv * f_test(p) * h_test(p) * G)
    scale = max(abs(left), abs(right))
    resid = abs(left - right) / scale if scale > 0 else 0.0
    return {"left": float(left), "right": float(right), "residual": float(resid),
            "boundary": float(bnd), "defect": float(left - right)}


# --- hypersurface independence ----------------------------------------------------


def hypersurface_independence_check(chart: Chart, field, kernel, phi: PhasePoint, V1: Hypersurface,
                                    V2: Hypersurface, n: int, cfg, rng, lead: float = 0.5,
                                    f_initial=None, tol: float = 1e-9):
    """Estimate f at a point a proper time ``lead`` to the future of ``phi`` from data on V1 and V2.

    Both surfaces must pass through the base point of ``phi`` with future
    normal equal to its velocity; otherwise the report flags the violation
    and makes no comparison. The same random streams are used for both
    runs.
    """
    from .process import estimate_f

    phi = PhasePoint(np.asarray(phi.m, float), np.asarray(phi.mdot, float))
    report = {"members": True, "reasons": []}
    for name, V in (("V1", V1), ("V2", V2)):
        if abs(float(V.level(phi.m))) > 1e-9:
            report["members"] = False
            report["reasons"].append(f"{name} does not contain the base point")
        elif abs(float(gamma_bar(V, phi)) - 1.0) > tol:
            report["members"] = False
            report["reasons"].append(f"{name} is not orthogonal to the velocity")
    if not report["members"]:
        report["agree"] = None
        return report
    xs, vs, _, _ = flow_to(chart, phi.m[None], phi.mdot[None], lead, ds=cfg.ds)
    target = PhasePoint(xs[0], vs[0])
    fi = field if f_initial is None else f_initial
    e1 = estimate_f(chart, target, field, kernel, V1, fi, n, cfg, rng.spawn(rng.stream))
    e2 = estimate_f(chart, target, field, kernel, V2, fi, n, cfg, rng.spawn(rng.stream))
    diff = e1.estimate - e2.estimate
    se = math.hypot(e1.stderr, e2.stderr)
    report.update({
        "estimate_1": e1.estimate, "stderr_1": e1.stderr,
        "estimate_2": e2.estimate, "stderr_2": e2.stderr,
        "difference": diff, "combined_stderr": se,
        "agree": bool(abs(diff) <= 3.0 * se + 1e-12 * max(abs(e1.estimate), abs(e2.estimate))),
    })
    return report


# --- hitting density on V (relation mu = gamma_bar f) --------------------------------


def hitting_density_check(chart: Chart, beta: float, kernel, cfg, rng, n: int = 100_000,
                          lead_time: float = 1.0, n_bins: int = 20):
    """Energy histogram of equilibrium particles crossing {t = 0} against gamma_bar f.

    Particles start on {t = -lead_time} distributed like the crossing flux of
    a homogeneous Juttner gas (density gamma_bar f on T^1 V), collide with
    the same gas while flying forward, and are recorded where they meet
    {t = 0}. Stationarity of the equilibrium predicts the same law there.
    Bin edges are equal-probability quantiles of the predicted law.
    """
    from scipy import optimize
    from .phase_space import JuttnerField, juttner_energy_cdf, sample_juttner_momenta
    from .process import simulate_forward

    if not chart.flat:
        raise ValueError("hitting_density_check is implemented for flat charts")
    field = JuttnerField(beta)
    lanes = np.arange(n)
    p = sample_juttner_momenta(beta, rng, lanes, observer=True)
    p0 = np.sqrt(1.0 + np.sum(p * p, -1))
    x0 = np.zeros((n, 4))
    x0[:, 0] = -lead_time
    v0 = np.concatenate([p0[:, None], p], -1)
    V = flat_surface(chart, 0.0)
    res = simulate_forward(chart, PhasePoint(x0, v0), field, kernel, cfg, rng, V=V,
                           s_max=lead_time * 1e3)
    if not np.all(res.hit):
        raise NoCrossing("some particles did not reach the hypersurface")
    gam = gamma_bar(V, PhasePoint(res.m, res.mdot))
    qs = np.linspace(0.0, 1.0, n_bins + 1)[1:-1]
    edges = [1.0]
    for q in qs:
        edges.append(optimize.brentq(lambda g: juttner_energy_cdf(beta, g, True) - q, 1.0, 1.0 + 200.0 / beta))
    edges.append(np.inf)
    edges = np.array(edges)
    counts, _ = np.histogram(gam, bins=edges)
    prob = np.diff(np.concatenate([[0.0], juttner_energy_cdf(beta, edges[1:-1], True), [1.0]]))
    expected = n * prob
    stderr = np.sqrt(n * prob * (1 - prob))
    z = (counts - expected) / stderr
    return {
        "edges": edges, "counts": counts, "expected": expected, "stderr": stderr, "z": z,
        "n_hits": int(n), "all_within": bool(np.all(np.abs(z) <= 3.0)),
        "gamma": gam,
    }
