"""Geodesic motion on T^1 M between collisions.

The vector field is dm^i = mdot^i, dmdot^k = -Gamma^k_ij mdot^i mdot^j. It is
integrated with classical RK4 and the velocity is rescaled back onto the
mass shell after every step. Past-directed motion negates the field.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import GeodesicAbort, LeftDomain, StepRejected
from .geometry import Chart, christoffel, christoffel_lanes, inner
from .phase_space import PhasePoint

__all__ = [
    "FUTURE",
    "PAST",
    "MAX_STEP",
    "RENORM_TOL",
    "h0_rhs",
    "geodesic_step",
    "geodesic_flow",
    "flow_to",
    "straight_line",
    "write_path_csv",
    "read_path_csv",
]

FUTURE = 1
PAST = -1
MAX_STEP = 0.5
RENORM_TOL = 1e-6
MAX_HALVINGS = 20


def _sign(direction) -> int:
    if direction in (FUTURE, "future", "+"):
        return 1
    if direction in (PAST, "past", "-"):
        return -1
    raise ValueError(f"direction must be future or past, got {direction!r}")


def h0_rhs(chart: Chart, x, mdot):
    """(dm, dmdot) of the geodesic field at (x, mdot); broadcasts over leading axes."""
    x = np.asarray(x, dtype=float)
    mdot = np.asarray(mdot, dtype=float)
    if chart.flat:
        return mdot.copy(), np.zeros_like(mdot)
    gam = christoffel(chart, x)
    return mdot.copy(), -np.einsum("...kij,...i,...j->...k", gam, mdot, mdot)


def _rhs_lanes(chart, x, mdot):
    if chart.flat:
        return mdot, np.zeros_like(mdot)
    gam = christoffel_lanes(chart, x)
    return mdot, -np.einsum("...kij,...i,...j->...k", gam, mdot, mdot)


def _rk4(chart, x, v, h):
    hh = h[..., None]
    k1x, k1v = _rhs_lanes(chart, x, v)
    k2x, k2v = _rhs_lanes(chart, x + 0.5 * hh * k1x, v + 0.5 * hh * k1v)
    k3x, k3v = _rhs_lanes(chart, x + 0.5 * hh * k2x, v + 0.5 * hh * k2v)
    k4x, k4v = _rhs_lanes(chart, x + hh * k3x, v + hh * k3v)
    xn = x + hh / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    vn = v + hh / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return xn, vn


def _try_step(chart, x, v, h):
    """RK4 step of signed size h (array); returns (x, v, correction, ok-in-domain mask)."""
    shape = h.shape
    x, v, h = x.reshape(-1, 4), v.reshape(-1, 4), h.reshape(-1)
    with np.errstate(invalid="ignore"):
        xn, vn = _rk4(chart, x, v, h)
    inside = chart.in_domain(xn) & np.all(np.isfinite(vn), axis=-1)
    corr = np.full(h.shape, np.inf)
    if np.any(inside):
        norm2 = inner(chart.metric(xn[inside]), vn[inside], vn[inside])
        good = norm2 > 0
        sub = np.nonzero(inside)[0]
        inside[sub[~good]] = False
        sc = np.sqrt(norm2[good])
        vn[sub[good]] = vn[sub[good]] / sc[:, None]
        corr[sub[good]] = np.abs(sc - 1.0)
    return xn.reshape(shape + (4,)), vn.reshape(shape + (4,)), corr.reshape(shape), inside.reshape(shape)


def geodesic_step(chart: Chart, phi: PhasePoint, ds: float, direction=FUTURE,
                  max_step: float = MAX_STEP) -> Tuple[PhasePoint, np.ndarray]:
    """One RK4 step plus shell renormalization; returns (new point, correction).

    Raises LeftDomain if the step exits the chart and StepRejected if the
    renormalization correction exceeds RENORM_TOL.
    """
    if abs(ds) > max_step:
        raise ValueError(f"|ds| = {abs(ds)} exceeds the maximum step {max_step}")
    sgn = _sign(direction)
    x = np.asarray(phi.m, dtype=float)
    v = np.asarray(phi.mdot, dtype=float)
    h = np.full(x.shape[:-1], sgn * float(ds))
    if chart.flat:
        return PhasePoint(x + h[..., None] * v, v.copy()), np.zeros(h.shape)
    xn, vn, corr, inside = _try_step(chart, x, v, h)
    if not np.all(inside):
        raise LeftDomain(f"geodesic step left the domain of {chart.name}")
    if np.any(corr > RENORM_TOL):
        raise StepRejected(float(np.max(corr)))
    return PhasePoint(xn, vn), corr


def straight_line(x, v, s):
    """Exact flow on flat charts."""
    return x + np.asarray(s)[..., None] * v, v


def flow_to(chart: Chart, x, v, s, ds: float = 0.01, direction=FUTURE):
    """Batched flow of each lane by its own proper time ``s`` (array or scalar).

    Returns (x, v, max correction, s_done). Raises GeodesicAbort when a lane
    needs more than MAX_HALVINGS halvings and LeftDomain when a lane cannot
    stay inside the chart.
    """
    sgn = _sign(direction)
    x = np.array(x, dtype=float, copy=True)
    v = np.array(v, dtype=float, copy=True)
    n = x.shape[0]
    s = np.broadcast_to(np.asarray(s, dtype=float), (n,)).copy()
    done = np.zeros(n)
    maxcorr = np.zeros(n)
    if chart.flat:
        x, v = straight_line(x, v, sgn * s)
        return x, v, maxcorr, s
    halv = np.zeros(n, dtype=np.int64)
    active = s > done
    while np.any(active):
        idx = np.nonzero(active)[0]
        h = np.minimum(ds / 2.0 ** halv[idx], s[idx] - done[idx])
        xn, vn, corr, inside = _try_step(chart, x[idx], v[idx], sgn * h)
        bad = idx[~inside]
        if np.any(halv[bad] >= MAX_HALVINGS):
            raise LeftDomain(f"geodesic left the domain of {chart.name} near x={x[bad[0]]}")
        ok = inside & (corr <= RENORM_TOL)
        rej = idx[~ok]
        halv[rej] += 1
        if np.any(halv[rej] > MAX_HALVINGS):
            raise GeodesicAbort(
                f"step halved {MAX_HALVINGS} times without meeting the shell tolerance at x={x[rej[0]]}")
        acc = idx[ok]
        x[acc] = xn[ok]
        v[acc] = vn[ok]
        done[acc] += h[ok]
        maxcorr[acc] = np.maximum(maxcorr[acc], corr[ok])
        halv[acc] = 0
        active = s - done > 1e-15 * np.maximum(1.0, s)
    return x, v, maxcorr, done


def geodesic_flow(chart: Chart, phi: PhasePoint, s_total: float, ds: float = 0.01,
                  direction=FUTURE, observer: Optional[Callable] = None,
                  max_step: float = MAX_STEP) -> List[Tuple[float, PhasePoint, float]]:
    """Path of a single phase point as a list of (s, PhasePoint, shell error).

    Iterates geodesic_step; a rejected step is retried with half the step
    size, at most MAX_HALVINGS times. ``observer(s, phi)`` is called after
    every accepted step.
    """
    if ds <= 0 or s_total < 0:
        raise ValueError("ds must be positive and s_total nonnegative")
    ds = min(ds, max_step)
    x = np.asarray(phi.m, dtype=float)
    v = np.asarray(phi.mdot, dtype=float)
    g0 = abs(float(inner(chart.metric(x), v, v)) - 1.0)
    path = [(0.0, PhasePoint(x.copy(), v.copy()), g0)]
    s = 0.0
    nsteps = int(math.ceil(s_total / ds - 1e-9))
    for i in range(nsteps):
        target = min((i + 1) * ds, s_total)
        while s < target - 1e-15 * max(1.0, target):
            h = target - s
            for _ in range(MAX_HALVINGS + 1):
                try:
                    cur, corr = geodesic_step(chart, PhasePoint(x, v), h, direction, max_step)
                    break
                except StepRejected:
                    h *= 0.5
            else:
                raise GeodesicAbort(f"step halved {MAX_HALVINGS} times at s={s}, x={x}")
            x, v = cur.m, cur.mdot
            s += h
            err = abs(float(inner(chart.metric(x), v, v)) - 1.0)
            path.append((s, PhasePoint(x.copy(), v.copy()), err))
            if observer is not None:
                observer(s, path[-1][1])
    return path


PATH_SCHEMA_VERSION = 1


def write_path_csv(path, records, meta=None):
    """Write (s, PhasePoint, shell_error) records after a ``# {json}`` metadata line."""
    head = {"schema_version": PATH_SCHEMA_VERSION, "kind": "geodesic_path", **(meta or {})}
    with Path(path).open("w", newline="") as fh:
        fh.write("# " + json.dumps(head, sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(["s", "x0", "x1", "x2", "x3", "mdot0", "mdot1", "mdot2", "mdot3", "shell_error"])
        for s, phi, err in records:
            w.writerow([repr(float(s))] + [repr(float(c)) for c in phi.m]
                       + [repr(float(c)) for c in phi.mdot] + [repr(float(err))])


def read_path_csv(path):
    with Path(path).open() as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    out = []
    for r in rows:
        m = np.array([float(r[f"x{i}"]) for i in range(4)])
        v = np.array([float(r[f"mdot{i}"]) for i in range(4)])
        out.append((float(r["s"]), PhasePoint(m, v), float(r["shell_error"])))
    return out
