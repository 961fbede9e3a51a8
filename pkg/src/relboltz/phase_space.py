"""Unit future tangent bundle: phase points, hyperboloid measure, distribution fields.

Momenta on the unit hyperboloid are handled in tetrad coordinates
``p = (p1, p2, p3)`` with ``p0 = sqrt(1 + |p|^2)``; in these coordinates the
hyperboloid volume measure is ``d^3p / p0``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

from .errors import RelBoltzError
from .geometry import ETA, Chart, Tetrad, build_tetrad, inner
from .rng import CounterRNG, standard_normal, unit_sphere

__all__ = [
    "PhasePoint",
    "ShellError",
    "SHELL_TOL",
    "shell_error",
    "check_on_shell",
    "lift_to_shell",
    "frame_momentum",
    "canonical_momentum",
    "vol1_density",
    "JuttnerParams",
    "juttner_log_norm",
    "juttner_eval",
    "juttner_sample",
    "juttner_energy_cdf",
    "juttner_mean_energy",
    "sample_juttner_momenta",
    "DistributionField",
    "JuttnerField",
    "ZeroField",
    "SumField",
    "TabulatedField",
    "current",
    "spatial_density",
    "phase_space_density",
]

SHELL_TOL = 1e-9


class ShellError(RelBoltzError):
    """A phase point left the unit mass shell."""


@dataclass(frozen=True)
class PhasePoint:
    """A point (m, mdot) of T^1 M in chart coordinates; arrays may be batched."""

    m: np.ndarray
    mdot: np.ndarray

    def __iter__(self):
        return iter((self.m, self.mdot))

    def as_array(self):
        return np.concatenate([self.m, self.mdot], axis=-1)


def shell_error(chart: Chart, m, mdot):
    m = np.asarray(m, dtype=float)
    mdot = np.asarray(mdot, dtype=float)
    return np.abs(inner(chart.metric(m), mdot, mdot) - 1.0)


def check_on_shell(chart: Chart, m, mdot, tol: float = SHELL_TOL):
    """Raise ShellError unless ``mdot`` is unit and future-oriented."""
    err = shell_error(chart, m, mdot)
    if np.any(err > tol):
        raise ShellError(f"mass-shell error {np.max(err):.3e} exceeds {tol:.1e}")
    g = chart.metric(m)
    if np.any(inner(g, mdot, chart.observer(m)) <= 0):
        raise ShellError("velocity is not future-oriented")


def lift_to_shell(chart: Chart, m, tetrad: Tetrad, p_spatial) -> PhasePoint:
    """mdot = p0 e_0 + p^i e_i with p0 = sqrt(1 + |p|^2)."""
    p = np.asarray(p_spatial, dtype=float)
    p0 = np.sqrt(1.0 + np.sum(p * p, axis=-1))
    p4 = np.concatenate([p0[..., None], p], axis=-1)
    mdot = tetrad.to_coordinates(p4)
    m = np.broadcast_to(np.asarray(m, dtype=float), mdot.shape).copy()
    check_on_shell(chart, m, mdot)
    return PhasePoint(m, mdot)


def frame_momentum(chart: Chart, tetrad: Tetrad, mdot):
    """Spatial tetrad components of ``mdot`` (the inverse of lift_to_shell)."""
    return tetrad.to_frame(chart, mdot)[..., 1:]


def vol1_density(p_spatial):
    """Density of the hyperboloid volume in tetrad momentum coordinates, 1/p0."""
    p = np.asarray(p_spatial, dtype=float)
    return 1.0 / np.sqrt(1.0 + np.sum(p * p, axis=-1))


def phase_space_density(chart: Chart, field: "DistributionField", m, mdot, varpi):
    """g(mdot, varpi) f(m, mdot): the phase-space density seen by a varpi-observer."""
    g = chart.metric(m)
    out = inner(g, mdot, varpi) * field.eval(chart, m, mdot)
    if np.any(out < 0):
        raise ShellError("negative observer phase-space density")
    return out


# --- Juttner equilibrium ---------------------------------------------------


@dataclass(frozen=True)
class JuttnerParams:
    """Inverse temperature (mass = 1) and unit future 4-velocity (coordinates)."""

    beta: float
    u: np.ndarray

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))

    def check(self, chart: Chart, m):
        err = shell_error(chart, m, self.u)
        if np.any(err > 1e-12):
            raise ShellError(f"Juttner velocity not unit: error {np.max(err):.2e}")


def juttner_log_norm(beta):
    """log Z(beta) with Z = 4 pi K2(beta) / beta (unit rest-frame density)."""
    return math.log(4.0 * math.pi) + math.log(special.kve(2, beta)) - beta - math.log(beta)


def _juttner_from_gamma(beta, gamma):
    # exp(-beta*gamma)/Z, written to avoid underflow of K2 at large beta
    return beta / (4.0 * math.pi * special.kve(2, beta)) * np.exp(-beta * (gamma - 1.0))


def juttner_eval(chart: Chart, params: JuttnerParams, phi: PhasePoint):
    """Z^-1 exp(-beta g(u, mdot))."""
    g = chart.metric(phi.m)
    return _juttner_from_gamma(params.beta, inner(g, params.u, phi.mdot))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _juttner_energy_integral(beta, gamma, observer):
    """int_1^gamma sqrt(x^2-1) [x] exp(-beta (x-1)) dx, composite Gauss-Legendre in rapidity."""
    gamma = np.asarray(gamma, dtype=float)
    chi = np.arccosh(np.maximum(gamma, 1.0))
    panels = 16
    edges = chi[..., None] * np.linspace(0.0, 1.0, panels + 1)
    a, b = edges[..., :-1], edges[..., 1:]
    half = 0.5 * (b - a)
    nodes = (a + b)[..., None] * 0.5 + half[..., None] * _GL_X
    ch = np.cosh(nodes)
    integrand = np.sinh(nodes) ** 2 * np.exp(-beta * (ch - 1.0))
    if observer:
        integrand = integrand * ch
    return np.sum(half * np.sum(integrand * _GL_W, axis=-1), axis=-1)


def juttner_energy_cdf(beta: float, gamma, observer: bool = False):
    """CDF of the rest-frame energy g(u, mdot).

    ``observer=False``: law of f under VOL^1 (what juttner_sample draws).
    ``observer=True``: law of g(u, mdot) f under VOL^1 (particle counting in the
    u-frame).
    """
    norm = special.kve(2 if observer else 1, beta) / beta
    return np.clip(_juttner_energy_integral(beta, gamma, observer) / norm, 0.0, 1.0)


def juttner_mean_energy(beta: float, observer: bool = False) -> float:
    """Mean rest-frame energy: K2/K1 under VOL^1, K1/K2 + 3/beta for the observer law."""
    if observer:
        return special.kve(1, beta) / special.kve(2, beta) + 3.0 / beta
    return special.kve(2, beta) / special.kve(1, beta)


def sample_juttner_momenta(beta: float, rng: CounterRNG, lanes, observer: bool = False,
                           block: Optional[int] = None):
    """Rest-frame spatial momenta, one per lane, by rejection.

    The kinetic energy k = gamma - 1 has density proportional to
    sqrt(k (k + 2)) exp(-beta k) (times 1 + k for the observer law). Using
    sqrt(k + 2) <= sqrt(2) + sqrt(k) the envelope is a finite Gamma mixture
    and the acceptance probability sqrt(k + 2) / (sqrt(2) + sqrt(k)) is at
    least 1/sqrt(2).
    """
    lanes = np.asarray(lanes, dtype=np.int64).ravel()
    n = lanes.size
    if block is None:
        block = rng.reserve()
    if observer:
        shapes = np.array([1.5, 2.0, 2.5, 3.0])
        w = np.array([math.sqrt(2) * math.gamma(1.5) / beta**1.5, 1.0 / beta**2,
                      math.sqrt(2) * math.gamma(2.5) / beta**2.5, 2.0 / beta**3])
    else:
        shapes = np.array([1.5, 2.0])
        w = np.array([math.sqrt(2) * math.gamma(1.5) / beta**1.5, 1.0 / beta**2])
    cw = np.cumsum(w / w.sum())
    k = np.empty(n)
    pending = np.arange(n)
    per_attempt = 8
    for attempt in range(400):
        if pending.size == 0:
            break
        u = rng.uniform_at(lanes[pending], block, per_attempt, sub=attempt * per_attempt // 2)
        comp = np.minimum(np.searchsorted(cw, u[:, 0], side="right"), shapes.size - 1)
        shape = shapes[comp]
        ints = np.floor(shape).astype(int)
        g = -np.log(u[:, 1]) - np.where(ints >= 2, np.log(u[:, 2]), 0.0) - np.where(ints >= 3, np.log(u[:, 3]), 0.0)
        half = shape != ints
        z = standard_normal(u[:, 4], u[:, 5])
        g = g + np.where(half, 0.5 * z * z, 0.0)
        kk = g / beta
        acc = u[:, 6] * (math.sqrt(2.0) + np.sqrt(kk)) <= np.sqrt(kk + 2.0)
        k[pending[acc]] = kk[acc]
        pending = pending[~acc]
    else:
        raise RuntimeError("Juttner rejection sampler did not terminate")
    d = rng.uniform_at(lanes, block, 2, sub=1 << 30)
    pmag = np.sqrt(k * (k + 2.0))
    return pmag[:, None] * unit_sphere(d[:, 0], d[:, 1])


def juttner_sample(chart: Chart, params: JuttnerParams, tetrad: Tetrad, rng: CounterRNG,
                   n: int = 1, observer: bool = False, lanes=None) -> PhasePoint:
    """Phase points at ``tetrad.base`` distributed like the Juttner law under VOL^1.

    If the tetrad's e_0 is not ``params.u`` a tetrad aligned with ``u`` is built.
    """
    m = np.asarray(tetrad.base, dtype=float)
    e0 = tetrad.e0
    if not np.allclose(e0, params.u, rtol=0, atol=1e-12):
        tetrad = build_tetrad(chart, m, params.u)
    if lanes is None:
        lanes = np.arange(n)
    p = sample_juttner_momenta(params.beta, rng, lanes, observer=observer)
    tet = Tetrad(np.broadcast_to(m, (p.shape[0], 4)), np.broadcast_to(tetrad.vectors, (p.shape[0], 4, 4)))
    return lift_to_shell(chart, tet.base, tet, p)


# --- distribution fields ---------------------------------------------------


class DistributionField:
    """Nonnegative scalar f on T^1 M with a partner sampler.

    Subclasses implement ``eval``, ``local_norm`` and ``sample_partner``.
    ``local_norm(m)`` is the integral of f(m, .) against VOL^1_m and
    ``sample_partner`` draws one velocity per lane from f(m, .)/local_norm.
    ``m`` is either one point (4,) or one point per lane (n, 4).
    """

    homogeneous = False

    def eval(self, chart, m, mdot):
        raise NotImplementedError

    def local_norm(self, chart, m):
        raise NotImplementedError

    def sample_partner(self, chart, m, rng, lanes, block=None):
        raise NotImplementedError

    def norm_bound(self, chart):
        """Upper bound of local_norm over the chart, or None when unknown."""
        if self.homogeneous:
            return float(np.max(self.local_norm(chart, np.zeros((1, 4)))))
        return None

    def __call__(self, chart, m, mdot):
        return self.eval(chart, m, mdot)


def _frames(chart, m, n):
    """Canonical frames for n lanes, computing a single frame on flat charts."""
    m = np.asarray(m, dtype=float)
    if chart.flat or m.ndim == 1:
        one = chart.frame(m.reshape(-1, 4)[0])
        return np.broadcast_to(one.vectors, (n, 4, 4))
    return chart.frame(m).vectors


def canonical_momentum(chart, m, mdot):
    """Frame components (p0, p1, p2, p3) of ``mdot`` in the chart's canonical frame."""
    mdot = np.asarray(mdot, dtype=float)
    mm = np.broadcast_to(np.asarray(m, dtype=float), mdot.shape).reshape(-1, 4)
    n = mm.shape[0]
    vec = _frames(chart, mm, n)
    g = chart.metric(mm[:1]) if chart.flat else chart.metric(mm)
    gv = np.einsum("nij,nj->ni", np.broadcast_to(g, (n, 4, 4)), mdot.reshape(-1, 4))
    p = np.einsum("nai,ni->na", vec, gv) * np.diag(ETA)
    return p.reshape(mdot.shape)


class JuttnerField(DistributionField):
    """Juttner equilibrium of given rest-frame density, optionally position-modulated.

    ``drift`` gives the spatial components of the fluid velocity in the
    canonical frame of the chart (zero: the fluid is at rest with respect to
    the coordinate-time observers). ``modulation(m) >= 0`` multiplies the
    density.
    """

    def __init__(self, beta: float, density: float = 1.0, drift: Sequence[float] = (0.0, 0.0, 0.0),
                 modulation: Optional[Callable] = None):
        if beta <= 0 or density < 0:
            raise ValueError("beta must be positive and density nonnegative")
        self.beta = float(beta)
        self.density = float(density)
        self.drift = np.asarray(drift, dtype=float)
        self.modulation = modulation
        self.homogeneous = modulation is None
        self._moving = bool(np.any(self.drift != 0.0))
        self._norm_ratio = special.kve(1, self.beta) / special.kve(2, self.beta)

    def __repr__(self):
        return f"JuttnerField(beta={self.beta}, density={self.density}, drift={self.drift.tolist()})"

    def velocity(self, chart, m):
        m = np.asarray(m, dtype=float)
        if not self._moving:
            return chart.observer(m)
        frames = _frames(chart, m, 1 if m.ndim == 1 else m.shape[0])
        p0 = math.sqrt(1.0 + float(self.drift @ self.drift))
        u = np.einsum("a,...ai->...i", np.concatenate([[p0], self.drift]), frames)
        return u[0] if m.ndim == 1 else u

    def _rho(self, m):
        rho = self.density
        if self.modulation is not None:
            rho = rho * np.asarray(self.modulation(np.asarray(m, dtype=float)))
        return rho

    def eval(self, chart, m, mdot):
        m = np.asarray(m, dtype=float)
        mdot = np.asarray(mdot, dtype=float)
        mm = np.broadcast_to(m, mdot.shape)
        u = self.velocity(chart, mm)
        gam = inner(chart.metric(mm), u, mdot)
        return self._rho(mm) * _juttner_from_gamma(self.beta, gam)

    def local_norm(self, chart, m):
        return self._rho(np.asarray(m, dtype=float)) * self._norm_ratio

    def norm_bound(self, chart):
        if self.modulation is None:
            return self.density * self._norm_ratio
        bound = getattr(self.modulation, "bound", None)
        return None if bound is None else self.density * self._norm_ratio * float(bound)

    def sample_partner(self, chart, m, rng, lanes, block=None):
        lanes = np.asarray(lanes, dtype=np.int64).ravel()
        n = lanes.size
        p = sample_juttner_momenta(self.beta, rng, lanes, block=block)
        p0 = np.sqrt(1.0 + np.sum(p * p, axis=-1))
        p4 = np.concatenate([p0[:, None], p], axis=-1)
        m = np.asarray(m, dtype=float)
        if self._moving:
            mm = np.broadcast_to(m, (n, 4))
            if chart.flat:
                vec = np.broadcast_to(build_tetrad(chart, mm[0], self.velocity(chart, mm[0])).vectors, (n, 4, 4))
            else:
                vec = build_tetrad(chart, mm, self.velocity(chart, mm), check=False).vectors
        else:
            vec = _frames(chart, m, n)
        return np.einsum("na,nai->ni", p4, vec)


class ZeroField(DistributionField):
    homogeneous = True

    def eval(self, chart, m, mdot):
        return np.zeros(np.asarray(mdot).shape[:-1])

    def local_norm(self, chart, m):
        return np.zeros(np.asarray(m).shape[:-1])

    def sample_partner(self, chart, m, rng, lanes, block=None):
        raise ValueError("cannot sample partners from the zero field")


class SumField(DistributionField):
    """Nonnegative combination sum_k c_k f_k; partners drawn from the mixture."""

    def __init__(self, terms):
        self.terms = [(float(c), f) for c, f in terms]
        if any(c < 0 for c, _ in self.terms):
            raise ValueError("coefficients must be nonnegative")
        self.homogeneous = all(f.homogeneous for _, f in self.terms)

    def eval(self, chart, m, mdot):
        return sum(c * f.eval(chart, m, mdot) for c, f in self.terms)

    def local_norm(self, chart, m):
        return sum(c * f.local_norm(chart, m) for c, f in self.terms)

    def norm_bound(self, chart):
        bounds = [f.norm_bound(chart) for _, f in self.terms]
        if any(b is None for b in bounds):
            return None
        return sum(c * b for (c, _), b in zip(self.terms, bounds))

    def sample_partner(self, chart, m, rng, lanes, block=None):
        lanes = np.asarray(lanes, dtype=np.int64).ravel()
        n = lanes.size
        if block is None:
            block = rng.reserve()
        m = np.asarray(m, dtype=float)
        norms = np.stack([np.broadcast_to(c * f.local_norm(chart, m), (n,)) for c, f in self.terms], axis=-1)
        cum = np.cumsum(norms, axis=-1)
        u = rng.uniform_at(lanes, block, 1, sub=(1 << 31))[:, 0] * cum[:, -1]
        which = np.minimum((u[:, None] >= cum).sum(axis=-1), len(self.terms) - 1)
        out = np.empty((n, 4))
        mm = np.broadcast_to(m, (n, 4))
        # sub-blocks: term k uses its own sub-range of the same block
        for k, (_, f) in enumerate(self.terms):
            sel = which == k
            if np.any(sel):
                sub_rng = _SubBlockRNG(rng, block, k + 1)
                out[sel] = f.sample_partner(chart, mm[sel], sub_rng, lanes[sel], block=block)
        return out


class _SubBlockRNG(CounterRNG):
    """View of a CounterRNG whose sub-counters are shifted into a private window."""

    def __init__(self, parent: CounterRNG, block: int, window: int):
        super().__init__(parent.seed, parent.stream)
        self._parent = parent
        self._offset = window << 24

    def uniform_at(self, lanes, block, k, sub=0):
        return self._parent.uniform_at(lanes, block, k, sub=(sub + self._offset) & 0xFFFFFFFF)

    def reserve(self, n=1):
        return self._parent.reserve(n)


class TabulatedField(DistributionField):
    """Histogram over a tetrad momentum grid, homogeneous in position.

    f(m, mdot) is the value of the cell containing the canonical-frame
    momentum of ``mdot`` (zero outside the grid). Partners are drawn with an
    alias table over cells weighted by value * int_cell d^3p/p0, then within
    the cell by rejection against 1/p0.
    """

    homogeneous = True
    schema_version = 1

    def __init__(self, lower, upper, values):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim != 3 or np.any(self.values < 0):
            raise ValueError("values must be a nonnegative 3-D array")
        self.shape = np.array(self.values.shape)
        self.width = (self.upper - self.lower) / self.shape
        self._cell_vol1 = self._cell_integrals()
        mass = (self.values * self._cell_vol1).ravel()
        self._norm = float(mass.sum())
        self._alias_prob, self._alias = _alias_table(mass) if self._norm > 0 else (None, None)
        lo = self.lower + self.width * np.stack(np.indices(self.values.shape), -1)
        hi = lo + self.width
        nearest = np.clip(0.0, lo, hi)
        self._p0_min = np.sqrt(1.0 + np.sum(nearest**2, axis=-1)).ravel()

    def _cell_integrals(self):
        x, w = np.polynomial.legendre.leggauss(4)
        idx = np.stack(np.indices(self.values.shape), -1)
        lo = self.lower + self.width * idx
        pts = 0.5 * (x + 1.0)
        total = np.zeros(self.values.shape)
        for i, wi in zip(pts, w):
            for j, wj in zip(pts, w):
                for k, wk in zip(pts, w):
                    p = lo + self.width * np.array([i, j, k])
                    total += wi * wj * wk / np.sqrt(1.0 + np.sum(p * p, axis=-1))
        return total * np.prod(self.width) / 8.0

    def _cell_index(self, p):
        idx = np.floor((p - self.lower) / self.width).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < self.shape), axis=-1)
        return np.where(inside[..., None], idx, 0), inside

    def eval(self, chart, m, mdot):
        mdot = np.asarray(mdot, dtype=float)
        p = canonical_momentum(chart, m, mdot).reshape(-1, 4)[:, 1:]
        idx, inside = self._cell_index(p)
        val = self.values[idx[:, 0], idx[:, 1], idx[:, 2]]
        return np.where(inside, val, 0.0).reshape(mdot.shape[:-1])

    def local_norm(self, chart, m):
        return np.full(np.asarray(m).shape[:-1], self._norm)

    def sample_partner(self, chart, m, rng, lanes, block=None):
        if self._norm <= 0:
            raise ValueError("cannot sample partners from an empty table")
        lanes = np.asarray(lanes, dtype=np.int64).ravel()
        n = lanes.size
        if block is None:
            block = rng.reserve()
        u = rng.uniform_at(lanes, block, 2, sub=0)
        ncell = self._alias.size
        j = np.minimum((u[:, 0] * ncell).astype(np.int64), ncell - 1)
        cell = np.where(u[:, 1] < self._alias_prob[j], j, self._alias[j])
        idx = np.stack(np.unravel_index(cell, self.values.shape), -1)
        lo = self.lower + self.width * idx
        p = np.empty((n, 3))
        pending = np.arange(n)
        for attempt in range(1, 2000):
            if pending.size == 0:
                break
            v = rng.uniform_at(lanes[pending], block, 4, sub=2 * attempt)
            trial = lo[pending] + self.width * v[:, :3]
            p0 = np.sqrt(1.0 + np.sum(trial**2, axis=-1))
            acc = v[:, 3] * p0 <= self._p0_min[cell[pending]]
            p[pending[acc]] = trial[acc]
            pending = pending[~acc]
        else:
            raise RuntimeError("tabulated sampler did not terminate")
        p0 = np.sqrt(1.0 + np.sum(p * p, axis=-1))
        vec = _frames(chart, m, n)
        return np.einsum("na,nai->ni", np.concatenate([p0[:, None], p], -1), vec)

    def to_csv(self, path):
        path = Path(path)
        meta = {"schema_version": self.schema_version, "kind": "tabulated_field",
                "lower": self.lower.tolist(), "upper": self.upper.tolist(),
                "shape": self.shape.tolist()}
        centers = self.lower + self.width * (np.stack(np.indices(self.values.shape), -1) + 0.5)
        with path.open("w", newline="") as fh:
            fh.write("# " + json.dumps(meta) + "\n")
            w = csv.writer(fh)
            w.writerow(["p1", "p2", "p3", "value"])
            for c, v in zip(centers.reshape(-1, 3), self.values.ravel()):
                w.writerow([repr(float(c[0])), repr(float(c[1])), repr(float(c[2])), repr(float(v))])

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        with path.open() as fh:
            first = fh.readline()
            if not first.startswith("#"):
                raise ValueError("missing grid metadata line")
            meta = json.loads(first[1:])
            if meta.get("schema_version") != cls.schema_version:
                raise ValueError(f"unsupported schema_version {meta.get('schema_version')}")
            rows = list(csv.DictReader(fh))
        lower, upper = np.array(meta["lower"]), np.array(meta["upper"])
        shape = tuple(meta["shape"])
        width = (upper - lower) / np.array(shape)
        values = np.zeros(shape)
        for r in rows:
            c = np.array([float(r["p1"]), float(r["p2"]), float(r["p3"])])
            i = tuple(np.floor((c - lower) / width).astype(int))
            values[i] = float(r["value"])
        return cls(lower, upper, values)

    @classmethod
    def from_field(cls, chart, field: DistributionField, lower, upper, shape, m=None):
        """Tabulate another field at the cell centres (position ``m``, default origin-like)."""
        lower, upper = np.asarray(lower, float), np.asarray(upper, float)
        width = (upper - lower) / np.asarray(shape)
        centers = lower + width * (np.stack(np.indices(tuple(shape)), -1) + 0.5)
        if m is None:
            m = np.array([1.0, 0.0, 0.0, 0.0])
        frame = chart.frame(np.asarray(m, float))
        p = centers.reshape(-1, 3)
        p4 = np.concatenate([np.sqrt(1 + np.sum(p * p, -1))[:, None], p], -1)
        mdot = p4 @ frame.vectors
        vals = field.eval(chart, np.broadcast_to(m, mdot.shape), mdot).reshape(tuple(shape))
        return cls(lower, upper, vals)


def _alias_table(weights):
    """Vose's alias method; returns (acceptance probabilities, aliases)."""
    w = np.asarray(weights, dtype=float)
    n = w.size
    prob = w * n / w.sum()
    alias = np.arange(n)
    small = [i for i in range(n) if prob[i] < 1.0]
    large = [i for i in range(n) if prob[i] >= 1.0]
    while small and large:
        s, l = small.pop(), large.pop()
        alias[s] = l
        prob[l] = prob[l] + prob[s] - 1.0
        (small if prob[l] < 1.0 else large).append(l)
    for i in small + large:
        prob[i] = 1.0
    return prob, alias


# --- moments -----------------------------------------------------------------


def current(chart: Chart, m, field: DistributionField, n: int, rng: CounterRNG):
    """Monte Carlo particle current j(m) = int mdot f VOL^1 and per-component stderr."""
    m = np.asarray(m, dtype=float)
    norm = float(field.local_norm(chart, m))
    if norm == 0.0:
        return np.zeros(4), np.zeros(4)
    mdot = field.sample_partner(chart, m, rng, np.arange(n))
    vals = norm * mdot
    return vals.mean(axis=0), vals.std(axis=0, ddof=1) / math.sqrt(n)


def spatial_density(chart: Chart, m, field: DistributionField, varpi, n: int, rng: CounterRNG):
    """n(m) = g(j(m), varpi) with its standard error."""
    m = np.asarray(m, dtype=float)
    varpi = np.asarray(varpi, dtype=float)
    g = chart.metric(m)
    if abs(inner(g, varpi, varpi) - 1.0) > 1e-10 or inner(g, varpi, chart.observer(m)) <= 0:
        raise ValueError("varpi must be unit, future-directed and timelike")
    norm = float(field.local_norm(chart, m))
    if norm == 0.0:
        return 0.0, 0.0
    mdot = field.sample_partner(chart, m, rng, np.arange(n))
    vals = norm * inner(g, mdot, varpi)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))
