"""Lorentzian charts, Christoffel symbols and orthonormal tetrads.

Signature is (+,-,-,-) everywhere: unit future timelike vectors have
``g(u, u) = +1``. All array functions broadcast over leading axes, with the
coordinate/component axis last. Christoffel arrays are indexed ``[k, i, j]``
for ``Gamma^k_ij``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NotTimelike, OutOfDomain, SingularMetric

__all__ = [
    "Chart",
    "Tetrad",
    "ETA",
    "inner",
    "metric_eval",
    "christoffel",
    "christoffel_fd",
    "build_tetrad",
    "minkowski",
    "schwarzschild",
    "flrw",
    "flrw_power",
    "make_chart",
    "christoffel_lanes",
]

ETA = np.diag([1.0, -1.0, -1.0, -1.0])
COND_MAX = 1e12


def inner(g, u, v):
    """g(u, v) for batched metrics (..., 4, 4) and vectors (..., 4)."""
    return np.einsum("...i,...ij,...j->...", u, g, v)


@dataclass(frozen=True)
class Chart:
    """A single coordinate chart with a global time coordinate ``x[0]``.

    ``metric_fn`` and ``christoffel_fn`` must broadcast over leading axes.
    The domain is an open box; points closer to its faces than the
    finite-difference stencil are rejected.
    """

    name: str
    metric_fn: Callable[[np.ndarray], np.ndarray]
    lower: np.ndarray
    upper: np.ndarray
    christoffel_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    flat: bool = False
    params: dict = field(default_factory=dict)

    dimension = 4

    def fd_step(self, x):
        return np.maximum(1e-5, 1e-7 * np.abs(np.asarray(x, dtype=float)))

    def check_domain(self, x, margin=0.0):
        x = np.asarray(x, dtype=float)
        ok = np.all((x - margin > self.lower) & (x + margin < self.upper), axis=-1)
        ok &= np.all(np.isfinite(x), axis=-1)
        if not np.all(ok):
            bad = x.reshape(-1, 4)[~np.asarray(ok).reshape(-1)][0]
            raise OutOfDomain(f"{self.name}: point {bad.tolist()} outside the chart domain")

    def in_domain(self, x, margin=0.0):
        x = np.asarray(x, dtype=float)
        return np.all((x - margin > self.lower) & (x + margin < self.upper), axis=-1) & np.all(
            np.isfinite(x), axis=-1
        )

    def metric(self, x):
        """Metric without domain or signature checks (hot path)."""
        return self.metric_fn(np.asarray(x, dtype=float))

    def observer(self, x):
        """Unit future vector along the time coordinate, ``d_t / sqrt(g_tt)``."""
        x = np.asarray(x, dtype=float)
        g = self.metric(x)
        u = np.zeros(x.shape)
        u[..., 0] = 1.0 / np.sqrt(g[..., 0, 0])
        return u

    def frame(self, x):
        """Canonical tetrad at ``x``: Gram-Schmidt seeded by the time direction."""
        x = np.asarray(x, dtype=float)
        return build_tetrad(self, x, self.observer(x), check=False)


@dataclass(frozen=True)
class Tetrad:
    """Orthonormal frame; ``vectors[..., a, :]`` holds the components of e_a."""

    base: np.ndarray
    vectors: np.ndarray

    @property
    def e0(self):
        return self.vectors[..., 0, :]

    def to_coordinates(self, p4):
        """Frame components (..., 4) -> coordinate components (..., 4)."""
        return np.einsum("...a,...ai->...i", p4, self.vectors)

    def to_frame(self, chart, v):
        """Coordinate components -> frame components ``p^a = eta^aa g(e_a, v)``."""
        g = chart.metric(self.base)
        gv = np.einsum("...ij,...j->...i", g, v)
        return np.einsum("...ai,...i->...a", self.vectors, gv) * np.diag(ETA)


def metric_eval(chart: Chart, m) -> np.ndarray:
    """Metric at ``m`` with domain and (+,-,-,-) signature checks."""
    m = np.asarray(m, dtype=float)
    chart.check_domain(m)
    g = chart.metric(m)
    if not np.allclose(g, np.swapaxes(g, -1, -2), rtol=0, atol=1e-14 * (1 + np.abs(g).max())):
        raise SingularMetric(f"{chart.name}: metric not symmetric")
    ev = np.linalg.eigvalsh(g)
    if np.any(np.sum(ev > 0, axis=-1) != 1) or np.any(np.sum(ev < 0, axis=-1) != 3):
        raise SingularMetric(f"{chart.name}: metric signature is not (+,-,-,-)")
    return g


def _check_conditioning(chart, g):
    c = np.linalg.cond(g)
    if np.any(~np.isfinite(c)) or np.any(c > COND_MAX):
        raise SingularMetric(f"{chart.name}: metric condition number {np.max(c):.3e}")


def christoffel_fd(chart: Chart, m) -> np.ndarray:
    """Christoffel symbols from central differences of the metric closure."""
    m = np.asarray(m, dtype=float)
    h = chart.fd_step(m)
    chart.check_domain(m, margin=h)
    g = chart.metric(m)
    _check_conditioning(chart, g)
    ginv = np.linalg.inv(g)
    dg = np.empty(m.shape[:-1] + (4, 4, 4))  # dg[..., l, i, j] = d_l g_ij
    for l in range(4):
        step = np.zeros(m.shape)
        step[..., l] = h[..., l]
        dg[..., l, :, :] = (chart.metric(m + step) - chart.metric(m - step)) / (2.0 * h[..., l, None, None])
    # lowered[l, i, j] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    lowered = 0.5 * (
        np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg
    )
    gam = np.einsum("...kl,...lij->...kij", ginv, lowered)
    return 0.5 * (gam + np.swapaxes(gam, -1, -2))


def christoffel(chart: Chart, m) -> np.ndarray:
    """Gamma^k_ij at ``m``; analytic closure when present, else finite differences."""
    m = np.asarray(m, dtype=float)
    if chart.christoffel_fn is None:
        return christoffel_fd(chart, m)
    chart.check_domain(m, margin=chart.fd_step(m))
    gam = chart.christoffel_fn(m)
    return 0.5 * (gam + np.swapaxes(gam, -1, -2))


def christoffel_lanes(chart: Chart, m) -> np.ndarray:
    """Batched Gamma^k_ij without raising: lanes outside the domain get NaN.

    Used inside integrators, which mask such lanes themselves.
    """
    m = np.asarray(m, dtype=float)
    if chart.christoffel_fn is not None:
        with np.errstate(all="ignore"):
            gam = chart.christoffel_fn(m)
        gam = 0.5 * (gam + np.swapaxes(gam, -1, -2))
        bad = ~chart.in_domain(m)
        if np.any(bad):
            gam = np.where(bad[..., None, None, None], np.nan, gam)
        return gam
    flat = m.reshape(-1, 4)
    out = np.full((flat.shape[0], 4, 4, 4), np.nan)
    ok = chart.in_domain(flat, margin=chart.fd_step(flat))
    if np.any(ok):
        try:
            out[ok] = christoffel_fd(chart, flat[ok])
        except (SingularMetric, np.linalg.LinAlgError):
            for i in np.nonzero(ok)[0]:
                try:
                    out[i] = christoffel_fd(chart, flat[i])
                except (SingularMetric, np.linalg.LinAlgError):
                    pass
    return out.reshape(m.shape[:-1] + (4, 4, 4))


def build_tetrad(chart: Chart, m, e0_hint, check=True) -> Tetrad:
    """Orthonormal tetrad whose e_0 is the normalisation of ``e0_hint``.

    Spatial legs come from Gram-Schmidt on the coordinate basis vectors
    d_1, d_2, d_3, d_0 in that order; a seed that has lost most of its norm to
    the earlier legs is skipped in favour of the next one.
    """
    m = np.asarray(m, dtype=float)
    e0_hint = np.asarray(e0_hint, dtype=float)
    if check:
        chart.check_domain(m)
    shape = np.broadcast_shapes(m.shape, e0_hint.shape)
    m = np.broadcast_to(m, shape)
    g = chart.metric(m)
    n0 = inner(g, e0_hint, e0_hint)
    if np.any(n0 <= 0):
        raise NotTimelike("e0 hint is not timelike")
    e0 = e0_hint / np.sqrt(n0)[..., None]
    if check and np.any(e0[..., 0] <= 0):
        raise NotTimelike("e0 hint is not future-oriented")
    legs = [np.broadcast_to(e0, shape)]
    signs = [1.0]
    cands = [np.broadcast_to(np.eye(4)[i], shape) for i in (1, 2, 3, 0)]
    for _ in range(3):
        resid, norms, scores = [], [], []
        for c in cands:
            r = c.copy()
            for _pass in range(2):
                for e, s in zip(legs, signs):
                    r = r - (s * inner(g, e, r))[..., None] * e
            resid.append(r)
            norms.append(-inner(g, r, r))
            scores.append(norms[-1] / np.maximum(np.abs(inner(g, c, c)), 1e-300))
        norms = np.stack(norms, axis=-1)
        scores = np.stack(scores, axis=-1)
        # first seed that keeps a quarter of its norm, else the best one
        good = scores > 0.25
        idx = np.where(np.any(good, axis=-1), np.argmax(good, axis=-1), np.argmax(scores, axis=-1))
        best = np.take_along_axis(np.stack(resid, axis=-2), idx[..., None, None], axis=-2)[..., 0, :]
        best_norm = np.take_along_axis(norms, idx[..., None], axis=-1)[..., 0]
        legs.append(best / np.sqrt(best_norm)[..., None])
        signs.append(-1.0)
    vecs = np.stack(legs, axis=-2)
    return Tetrad(base=np.array(m), vectors=vecs)


# --- built-in spacetimes -------------------------------------------------


def _minkowski_metric(x):
    return np.broadcast_to(ETA, x.shape[:-1] + (4, 4)).copy()


def _zeros_gamma(x):
    return np.zeros(x.shape[:-1] + (4, 4, 4))


def minkowski() -> Chart:
    inf = np.inf
    return Chart(
        name="minkowski",
        metric_fn=_minkowski_metric,
        lower=np.full(4, -inf),
        upper=np.full(4, inf),
        christoffel_fn=_zeros_gamma,
        flat=True,
    )


def schwarzschild(M: float = 1.0) -> Chart:
    """Exterior Schwarzschild in (t, r, theta, phi), domain r > 2.1 M."""
    if M <= 0:
        raise ValueError("mass must be positive")

    def metric_fn(x):
        r, th = x[..., 1], x[..., 2]
        f = 1.0 - 2.0 * M / r
        g = np.zeros(x.shape[:-1] + (4, 4))
        g[..., 0, 0] = f
        g[..., 1, 1] = -1.0 / f
        g[..., 2, 2] = -r * r
        g[..., 3, 3] = -(r * np.sin(th)) ** 2
        return g

    def gamma_fn(x):
        r, th = x[..., 1], x[..., 2]
        d = r * (r - 2.0 * M)
        s, c = np.sin(th), np.cos(th)
        G = np.zeros(x.shape[:-1] + (4, 4, 4))
        G[..., 0, 0, 1] = G[..., 0, 1, 0] = M / d
        G[..., 1, 0, 0] = M * (r - 2.0 * M) / r**3
        G[..., 1, 1, 1] = -M / d
        G[..., 1, 2, 2] = -(r - 2.0 * M)
        G[..., 1, 3, 3] = -(r - 2.0 * M) * s * s
        G[..., 2, 1, 2] = G[..., 2, 2, 1] = 1.0 / r
        G[..., 2, 3, 3] = -s * c
        G[..., 3, 1, 3] = G[..., 3, 3, 1] = 1.0 / r
        G[..., 3, 2, 3] = G[..., 3, 3, 2] = c / s
        return G

    inf = np.inf
    return Chart(
        name="schwarzschild",
        metric_fn=metric_fn,
        lower=np.array([-inf, 2.1 * M, 0.0, -inf]),
        upper=np.array([inf, inf, np.pi, inf]),
        christoffel_fn=gamma_fn,
        params={"M": M},
    )


def flrw(scale_factor: Callable, scale_rate: Optional[Callable] = None, params=None) -> Chart:
    """Spatially flat FLRW in (t, x, y, z), g = diag(1, -a^2, -a^2, -a^2), t > 0.

    Without ``scale_rate`` the chart has no analytic Christoffel closure and
    falls back to finite differences.
    """

    def metric_fn(x):
        a2 = scale_factor(x[..., 0]) ** 2
        g = np.zeros(x.shape[:-1] + (4, 4))
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = g[..., 2, 2] = g[..., 3, 3] = -a2
        return g

    gamma_fn = None
    if scale_rate is not None:

        def gamma_fn(x):
            t = x[..., 0]
            a, ad = scale_factor(t), scale_rate(t)
            G = np.zeros(x.shape[:-1] + (4, 4, 4))
            for i in (1, 2, 3):
                G[..., 0, i, i] = a * ad
                G[..., i, 0, i] = G[..., i, i, 0] = ad / a
            return G

    inf = np.inf
    return Chart(
        name="flrw",
        metric_fn=metric_fn,
        lower=np.array([0.0, -inf, -inf, -inf]),
        upper=np.full(4, inf),
        christoffel_fn=gamma_fn,
        params=dict(params or {}),
    )


def flrw_power(power: float = 1.0, analytic: bool = True) -> Chart:
    """FLRW with a(t) = t**power."""
    p = float(power)
    rate = (lambda t: p * t ** (p - 1.0)) if analytic else None
    return flrw(lambda t: t**p, rate, params={"power": p})


def make_chart(name: str, params: Optional[dict] = None) -> Chart:
    """Chart by config name: ``minkowski``, ``schwarzschild`` (M), ``flrw`` (power)."""
    params = dict(params or {})
    if name == "minkowski":
        return minkowski()
    if name == "schwarzschild":
        return schwarzschild(float(params.get("M", 1.0)))
    if name == "flrw":
        return flrw_power(float(params.get("power", 1.0)), bool(params.get("analytic", True)))
    raise KeyError(f"unknown spacetime {name!r}")
