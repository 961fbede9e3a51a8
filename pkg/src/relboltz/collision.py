"""Elastic binary collisions, kernels W and the collision integral.

The scattering angle lives on S^2 with the uniform solid-angle measure
(total mass 4 pi); kernels are normalized against that measure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DegeneratePair
from .geometry import Chart, inner
from .phase_space import DistributionField
from .rng import CounterRNG

__all__ = [
    "ScatterAngle",
    "uniform_angles",
    "collide",
    "cm_axes",
    "CollisionKernel",
    "kernel_constant",
    "kernel_hard_sphere",
    "make_kernel",
    "total_rate",
    "collision_integral",
    "DEGENERATE_GAMMA",
]

DEGENERATE_GAMMA = 1e-12
FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class ScatterAngle:
    """Polar angle in [0, pi] and azimuth in [0, 2 pi) relative to the incoming relative momentum."""

    theta: np.ndarray
    phi_az: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float)
        ph = np.asarray(self.phi_az, dtype=float)
        if np.any((th < 0) | (th > math.pi)):
            raise ValueError("theta must lie in [0, pi]")
        if np.any((ph < 0) | (ph >= 2 * math.pi)):
            raise ValueError("phi_az must lie in [0, 2 pi)")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "phi_az", ph)


def uniform_angles(u1, u2) -> ScatterAngle:
    """Uniform point of S^2 from two uniforms."""
    cos_t = np.clip(1.0 - 2.0 * np.asarray(u1), -1.0, 1.0)
    return ScatterAngle(np.arccos(cos_t), np.mod(2.0 * math.pi * np.asarray(u2), 2.0 * math.pi))


_CHART_SEEDS = np.eye(4)[[1, 2, 3, 0]]


def _project_out(g, w, basis, signs):
    for e, sgn in zip(basis, signs):
        w = w - (sgn * inner(g, w, e))[..., None] * e
    return w


def cm_axes(g, e0, e1, axes=None):
    """Spatial CM axes (e2, e3) completing (e0, e1) by Gram-Schmidt.

    Seeds are ``axes`` (two reference vectors) when given, then the chart
    axes d1, d2, d3, d0. Per lane the first seed whose projection keeps at
    least half of its frame length is used.
    """
    n = e0.shape[:-1]
    seeds = list(_CHART_SEEDS)
    if axes is not None:
        axes = np.asarray(axes, dtype=float)
        seeds = [axes[..., 0, :], axes[..., 1, :]] + seeds
    out = []
    basis = [e0, e1]
    signs = [1.0, -1.0]
    for _ in range(2):
        chosen = np.zeros(n + (4,))
        have = np.zeros(n, dtype=bool)
        best = np.zeros(n + (4,))
        best_score = np.full(n, -1.0)
        for sd in seeds:
            w = np.broadcast_to(sd, n + (4,))
            # frame length^2 of w relative to e0: a^2 - g(w, w)
            scale = inner(g, w, e0) ** 2 - inner(g, w, w)
            wp = _project_out(g, w, basis, signs)
            wp = _project_out(g, wp, basis, signs)
            nrm2 = -inner(g, wp, wp)
            score = np.where(scale > 0, nrm2 / np.where(scale > 0, scale, 1.0), 0.0)
            cand = wp / np.sqrt(np.maximum(nrm2, 1e-300))[..., None]
            take = (~have) & (score > 0.25)
            chosen = np.where(take[..., None], cand, chosen)
            have |= take
            better = score > best_score
            best = np.where(better[..., None], cand, best)
            best_score = np.where(better, score, best_score)
        e = np.where(have[..., None], chosen, best)
        out.append(e)
        basis = basis + [e]
        signs = signs + [-1.0]
    return out[0], out[1]


def collide(chart: Chart, m, mdot, mdot2, angle: ScatterAngle, axes=None, strict: bool = True):
    """Outgoing (p, p') of an elastic collision at m.

    In the centre-of-momentum frame e0 = P/sqrt(s) with P = mdot + mdot2,
    each momentum has magnitude k = sqrt((gamma - 1)/2) with gamma =
    g(mdot, mdot2), and mdot points along e1. The outgoing direction is
    cos(theta) e1 + sin(theta)(cos(phi) e2 + sin(phi) e3), and
    p = mdot + k (n' - e1), p' = mdot2 - k (n' - e1) so that p + p' = P
    holds to rounding.

    Identical momenta have no CM direction: with ``strict`` a nonzero theta
    raises DegeneratePair, otherwise the inputs are returned.
    """
    mdot = np.asarray(mdot, dtype=float)
    mdot2 = np.asarray(mdot2, dtype=float)
    shape = np.broadcast_shapes(mdot.shape, mdot2.shape)
    mdot = np.broadcast_to(mdot, shape)
    mdot2 = np.broadcast_to(mdot2, shape)
    m = np.broadcast_to(np.asarray(m, dtype=float), shape)
    g = chart.metric(m)
    theta = np.broadcast_to(angle.theta, shape[:-1])
    phi = np.broadcast_to(angle.phi_az, shape[:-1])

    gam = inner(g, mdot, mdot2)
    P = mdot + mdot2
    s = inner(g, P, P)
    e0 = P / np.sqrt(s)[..., None]
    k2 = 0.5 * (gam - 1.0)
    degenerate = gam < 1.0 + DEGENERATE_GAMMA
    if strict and np.any(degenerate & (theta != 0)):
        raise DegeneratePair(f"gamma_rel - 1 = {float(np.min(gam - 1.0)):.2e}: CM direction undefined")
    k = np.sqrt(np.maximum(k2, 0.0))
    rel = mdot - inner(g, mdot, e0)[..., None] * e0
    rn = np.sqrt(np.maximum(-inner(g, rel, rel), 0.0))
    usable = rn > 0
    e1 = rel / np.where(usable, rn, 1.0)[..., None]
    if not np.all(usable):
        e1 = np.where(usable[..., None], e1, _fallback_axis(g, e0))
    e2, e3 = cm_axes(g, e0, e1, axes)
    ct, st = np.cos(theta), np.sin(theta)
    # n' - e1 computed directly so that theta = 0 is exactly zero
    d = (ct - 1.0)[..., None] * e1 + (st * np.cos(phi))[..., None] * e2 + (st * np.sin(phi))[..., None] * e3
    kd = np.where(usable, k, 0.0)[..., None] * d
    p = mdot + kd
    p2 = mdot2 - kd
    return p, p2


def _fallback_axis(g, e0):
    """Some unit spatial vector orthogonal to e0 (used when the pair has no CM direction)."""
    out = np.zeros(e0.shape)
    have = np.zeros(e0.shape[:-1], dtype=bool)
    for sd in _CHART_SEEDS:
        w = np.broadcast_to(sd, e0.shape)
        wp = w - inner(g, w, e0)[..., None] * e0
        nrm2 = -inner(g, wp, wp)
        take = (~have) & (nrm2 > 1e-6)
        out = np.where(take[..., None], wp / np.sqrt(np.maximum(nrm2, 1e-300))[..., None], out)
        have |= take
    return out


@dataclass(frozen=True)
class CollisionKernel:
    """W(m; mdot, mdot'; theta) >= 0 with a finite bound on a compact momentum support.

    ``eval(chart, m, mdot, mdot2, angle)`` broadcasts over lanes;
    ``rate_bound`` bounds W whenever both canonical-frame momenta satisfy
    |p| <= ``p_max`` (None: unbounded support).
    """

    name: str
    eval: Callable
    rate_bound: float
    p_max: Optional[float] = None
    params: dict = field(default_factory=dict)

    def __call__(self, chart, m, mdot, mdot2, angle):
        return self.eval(chart, m, mdot, mdot2, angle)


def kernel_constant(c: float) -> CollisionKernel:
    """W = c / (4 pi): total rate c times the partner density."""
    if c < 0:
        raise ValueError("c must be nonnegative")
    w = c / FOUR_PI

    def ev(chart, m, mdot, mdot2, angle):
        shape = np.broadcast_shapes(np.shape(mdot)[:-1], np.shape(mdot2)[:-1])
        return np.full(shape, w)

    return CollisionKernel("constant", ev, w, None, {"c": c})


def kernel_hard_sphere(sigma: float, p_max: float) -> CollisionKernel:
    """W = sigma / (4 pi) sqrt(gamma_rel^2 - 1), bounded on |p| <= p_max."""
    if sigma < 0 or p_max <= 0:
        raise ValueError("sigma must be nonnegative and p_max positive")
    e_max = math.sqrt(1.0 + p_max * p_max)
    gam_max = 2.0 * e_max * e_max - 1.0
    bound = sigma / FOUR_PI * math.sqrt(gam_max * gam_max - 1.0)
    c = sigma / FOUR_PI

    def ev(chart, m, mdot, mdot2, angle):
        g = chart.metric(np.broadcast_to(np.asarray(m, float), np.broadcast_shapes(np.shape(mdot), np.shape(mdot2))))
        gam = inner(g, mdot, mdot2)
        # pairs collide() treats as identical get exactly zero
        gam = np.where(gam < 1.0 + DEGENERATE_GAMMA, 1.0, gam)
        return c * np.sqrt(np.maximum(gam * gam - 1.0, 0.0))

    return CollisionKernel("hard_sphere", ev, bound, p_max, {"sigma": sigma, "p_max": p_max})


def make_kernel(name: str, params: Optional[dict] = None) -> CollisionKernel:
    params = dict(params or {})
    if name == "constant":
        return kernel_constant(float(params.get("c", 1.0)))
    if name == "hard_sphere":
        return kernel_hard_sphere(float(params.get("sigma", 1.0)), float(params.get("p_max", 10.0)))
    raise ValueError(f"unknown kernel {name!r}")


def _angles(rng, lanes, block, sub=0):
    u = rng.uniform_at(lanes, block, 2, sub=sub)
    return uniform_angles(u[:, 0], u[:, 1])


def total_rate(chart: Chart, m, mdot, f: DistributionField, kernel: CollisionKernel, n: int,
               rng: CounterRNG):
    """Monte Carlo of int W dtheta f(m, mdot') VOL^1(dmdot'): mean of 4 pi n_f W."""
    m = np.asarray(m, dtype=float)
    norm = float(f.local_norm(chart, m))
    if norm == 0.0:
        return 0.0, 0.0
    lanes = np.arange(n)
    partners = f.sample_partner(chart, m, rng, lanes)
    ang = _angles(rng, lanes, rng.reserve())
    vals = FOUR_PI * norm * kernel(chart, m, mdot, partners, ang)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


def collision_integral(chart: Chart, m, mdot, f: DistributionField, g: DistributionField,
                       kernel: CollisionKernel, n: int, rng: CounterRNG, paired: bool = True):
    """Monte Carlo of C(f, g)(m, mdot) = int int {g(p) f(p') - g(mdot) f(mdot')} W dtheta VOL^1(dmdot').

    Partners are drawn from f and theta uniformly. ``paired`` evaluates gain
    and loss on the same draws (low variance; exactly zero per draw at
    equilibrium). With ``paired=False`` the two halves of the sample are
    used for gain and loss separately, which gives an honest error bar at
    equilibrium.
    """
    m = np.asarray(m, dtype=float)
    mdot = np.asarray(mdot, dtype=float)
    norm = float(f.local_norm(chart, m))
    if norm == 0.0:
        return 0.0, 0.0
    lanes = np.arange(n)
    partners = f.sample_partner(chart, m, rng, lanes)
    ang = _angles(rng, lanes, rng.reserve())
    p, p2 = collide(chart, m, mdot, partners, ang, strict=False)
    w = FOUR_PI * norm * kernel(chart, m, mdot, partners, ang)
    mm = np.broadcast_to(m, partners.shape)
    fpart = f.eval(chart, mm, partners)
    g_here = float(g.eval(chart, m, mdot))
    gain = w * g.eval(chart, mm, p) * f.eval(chart, mm, p2) / fpart
    loss = w * g_here
    if paired:
        vals = gain - loss
        return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))
    h = n // 2
    ga, lo = gain[:h], loss[h:2 * h]
    val = ga.mean() - lo.mean()
    se = math.sqrt(ga.var(ddof=1) / ga.size + lo.var(ddof=1) / lo.size)
    return float(val), float(se)
