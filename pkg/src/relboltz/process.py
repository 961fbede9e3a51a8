"""Forward and past-directed collision processes, the causal estimator and weak-form checks.

Paths are simulated in lockstep batches. Each path owns the RNG lane equal
to its index; every round of the batch loop draws from a fixed window of
blocks, so a path's random numbers depend only on its own history and the
results do not change with the chunking of paths over workers.

Jumps are produced by thinning against a constant majorant ``lambda_bar``:
candidate times form a Poisson stream of that rate along proper time, a
partner is drawn from the background field and a scattering angle
uniformly, and the candidate is accepted with probability
4 pi n_f W / lambda_bar.

The past-directed process uses the same jump mechanism with past-directed
flight. Each accepted jump multiplies the path weight by f(p') / f(mdot'),
which turns the generator into -H0 + C(f, .) exactly (see
``simulate_backward``).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .causal import Hypersurface, fly, hitting_time_bound
from .collision import FOUR_PI, CollisionKernel, collide, uniform_angles
from .errors import ConfigError, NoHit, SupportExit, ThinningViolation
from .geodesic import flow_to
from .geometry import Chart, inner
from .phase_space import DistributionField, PhasePoint, canonical_momentum, check_on_shell
from .rng import CounterRNG, exponential

__all__ = [
    "SimConfig",
    "PathEvent",
    "PathBatch",
    "Estimate",
    "majorant",
    "resolve_majorant",
    "simulate_forward",
    "simulate_backward",
    "estimate_f",
    "martingale_check",
    "weak_stationarity_check",
    "smooth_test_function",
    "mean_collision_rate",
    "write_events_csv",
]

BLOCKS_PER_ROUND = 16
_INIT_BLOCKS = 4


@dataclass
class SimConfig:
    """Simulation settings.

    ``lambda_bar`` None means: use the smallest valid majorant.
    ``chunk_size`` fixes how paths are batched; results are bit-identical
    for any ``workers`` at a fixed chunk size.
    """

    ds: float = 0.05
    s_max: float = 10.0
    lambda_bar: Optional[float] = None
    n_rate: int = 1000
    seed: int = 0
    workers: int = 1
    chunk_size: int = 8192
    nohit_factor: float = 4.0
    max_rounds: int = 10_000_000

    def __post_init__(self):
        if not self.ds > 0:
            raise ConfigError("sim.ds must be positive")
        if not self.s_max > 0:
            raise ConfigError("sim.s_max must be positive")
        if self.lambda_bar is not None and self.lambda_bar < 0:
            raise ConfigError("sim.lambda_bar must be nonnegative")
        if self.workers < 1 or self.chunk_size < 1:
            raise ConfigError("sim.workers and sim.chunk_size must be at least 1")
        if self.nohit_factor < 1:
            raise ConfigError("sim.nohit_factor must be at least 1")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class PathEvent:
    s: float
    kind: str  # flight-step | jump | hit | abort
    before: PhasePoint
    after: PhasePoint
    log_weight: float = 0.0


@dataclass
class PathBatch:
    """Final states and diagnostics of a batch of paths (one entry per path)."""

    m: np.ndarray
    mdot: np.ndarray
    s: np.ndarray
    log_weight: np.ndarray
    hit: np.ndarray
    aborted: np.ndarray
    n_jumps: np.ndarray
    n_candidates: np.ndarray
    lambda_bar: float
    max_shell_error: float
    grid: Optional[np.ndarray] = None
    snapshots: Optional[dict] = None
    events: Optional[List[List[PathEvent]]] = None

    @property
    def weight(self):
        return np.exp(self.log_weight)

    def __len__(self):
        return self.m.shape[0]


@dataclass
class Estimate:
    estimate: float
    stderr: float
    batch: PathBatch
    values: np.ndarray


def majorant(chart: Chart, field: DistributionField, kernel: CollisionKernel, probes=None) -> float:
    """4 pi * kernel bound * sup n_f.

    sup n_f comes from the field's own bound when it has one, otherwise
    from the largest local norm over the probe points.
    """
    sup_n = field.norm_bound(chart)
    if sup_n is None:
        if probes is None:
            raise ValueError("field has no norm bound; probe points are required")
        probes = np.atleast_2d(np.asarray(probes, dtype=float))
        sup_n = float(np.max(field.local_norm(chart, probes)))
    return FOUR_PI * kernel.rate_bound * float(sup_n)


def resolve_majorant(cfg: SimConfig, chart, field, kernel, probes=None) -> float:
    need = majorant(chart, field, kernel, probes)
    if cfg.lambda_bar is None:
        return need
    if cfg.lambda_bar < need * (1.0 - 1e-12):
        raise ConfigError(
            f"sim.lambda_bar = {cfg.lambda_bar:g} is below the required majorant {need:g} "
            f"(4 pi x kernel bound x sup n_f)")
    return float(cfg.lambda_bar)


def _pp(x, v):
    return PhasePoint(np.array(x, copy=True), np.array(v, copy=True))


def _engine(chart, field, kernel, lam, x, v, lanes, seed, stream, block0, sgn, s_end, V, grid,
            record, record_flights, ds, weighted, max_rounds):
    rng = CounterRNG(seed, stream, block=block0)
    n = lanes.size
    x = np.array(x, dtype=float, copy=True)
    v = np.array(v, dtype=float, copy=True)
    s = np.zeros(n)
    logw = np.zeros(n)
    hit = np.zeros(n, dtype=bool)
    aborted = np.zeros(n, dtype=bool)
    njump = np.zeros(n, dtype=np.int64)
    ncand = np.zeros(n, dtype=np.int64)
    maxcorr = 0.0
    if lam > 0:
        next_c = exponential(rng.uniform_at(lanes, block0, 1)[:, 0]) / lam
    else:
        next_c = np.full(n, np.inf)
    G = 0 if grid is None else grid.size
    gi = np.zeros(n, dtype=np.int64)
    snaps = None
    if G:
        snaps = {"m": np.full((G, n, 4), np.nan), "mdot": np.full((G, n, 4), np.nan),
                 "log_weight": np.full((G, n), np.nan), "hit": np.zeros((G, n), dtype=bool)}
    events = [[] for _ in range(n)] if record else None
    e_max = None
    if kernel.p_max is not None:
        e_max = math.sqrt(1.0 + kernel.p_max**2) * (1.0 + 1e-12)
    gridx = np.append(grid, np.inf) if G else np.array([np.inf])

    def snapshot(sel, upto=None):
        # fill snapshots for lanes `sel` whose next grid time is <= upto (all remaining if None)
        for j in sel:
            while gi[j] < G and (upto is None or gridx[gi[j]] <= upto[j]):
                snaps["m"][gi[j], j] = x[j]
                snaps["mdot"][gi[j], j] = v[j]
                snaps["log_weight"][gi[j], j] = logw[j]
                snaps["hit"][gi[j], j] = hit[j]
                gi[j] += 1

    # grid points at s = 0
    if G:
        snapshot(np.arange(n), upto=np.zeros(n))

    active = np.ones(n, dtype=bool)
    rounds = 0
    while np.any(active):
        if rounds >= max_rounds:
            raise RuntimeError("simulation exceeded sim.max_rounds")
        base = block0 + _INIT_BLOCKS + BLOCKS_PER_ROUND * rounds
        rounds += 1
        idx = np.nonzero(active)[0]
        ng = gridx[gi[idx]]
        target = np.minimum(np.minimum(next_c[idx], s_end[idx]), ng)
        before_x = x[idx].copy() if record else None
        before_v = v[idx].copy() if record else None
        x1, v1, trav, h, ab, corr = fly(chart, x[idx], v[idx], target - s[idx], sgn, ds, V)
        if corr.size:
            maxcorr = max(maxcorr, float(np.max(corr)))
        x[idx] = x1
        v[idx] = v1
        s[idx] = np.where(h | ab, s[idx] + trav, target)

        if np.any(ab):
            al = idx[ab]
            aborted[al] = True
            active[al] = False
            if record:
                for k, j in enumerate(al):
                    events[j].append(PathEvent(float(s[j]), "abort", _pp(before_x[ab][k], before_v[ab][k]),
                                               _pp(x[j], v[j]), float(logw[j])))
            if G:
                snapshot(al)
        if np.any(h):
            hl = idx[h]
            hit[hl] = True
            active[hl] = False
            if record:
                for j in hl:
                    events[j].append(PathEvent(float(s[j]), "hit", _pp(x[j], v[j]), _pp(x[j], v[j]), float(logw[j])))
            if G:
                snapshot(hl)

        go = ~(h | ab)
        li = idx[go]
        tgt = target[go]
        at_grid = tgt == ng[go]
        if np.any(at_grid):
            snapshot(li[at_grid], upto=s)
        at_end = (tgt == s_end[li]) & ~np.isinf(s_end[li])
        if np.any(at_end):
            ends = li[at_end]
            active[ends] = False
            if record:
                for j in ends:
                    events[j].append(PathEvent(float(s[j]), "flight-step", _pp(x[j], v[j]), _pp(x[j], v[j]), float(logw[j])))
            if G:
                snapshot(ends)
        at_c = (tgt == next_c[li]) & ~at_end
        if not np.any(at_c):
            continue
        ci = li[at_c]
        ncand[ci] += 1
        rng.block = base
        blk_exp = rng.reserve()
        blk_ang = rng.reserve()
        blk_acc = rng.reserve()
        blk_part = rng.reserve()
        lane_c = lanes[ci]
        xc = x[ci]
        vc = v[ci]
        nf = np.broadcast_to(field.local_norm(chart, xc), (ci.size,)).astype(float)
        pos = nf > 0
        accept = np.zeros(ci.size, dtype=bool)
        if np.any(pos):
            pi = np.nonzero(pos)[0]
            rng.block = blk_part
            partner = field.sample_partner(chart, xc[pi], rng, lane_c[pi], block=blk_part)
            ua = rng.uniform_at(lane_c[pi], blk_ang, 2)
            ang = uniform_angles(ua[:, 0], ua[:, 1])
            if e_max is not None:
                g = chart.metric(xc[pi])
                obs = chart.observer(xc[pi])
                e_self = inner(g, obs, vc[pi])
                e_part = inner(g, obs, partner)
                if np.any(e_self > e_max) or np.any(e_part > e_max):
                    bad = float(max(np.max(e_self), np.max(e_part)))
                    raise SupportExit(
                        f"momentum energy {bad:.4g} exceeds the kernel support sqrt(1 + p_max^2) = "
                        f"{e_max:.4g}; raise kernel p_max")
            rate = FOUR_PI * nf[pi] * kernel(chart, xc[pi], vc[pi], partner, ang)
            prob = rate / lam
            if np.any(prob > 1.0 + 1e-12):
                raise ThinningViolation(
                    f"acceptance probability {float(np.max(prob)):.6g} > 1: lambda_bar {lam:g} too small")
            u = rng.uniform_at(lane_c[pi], blk_acc, 1)[:, 0]
            acc = u < prob
            if np.any(acc):
                ai = pi[acc]
                lanes_a = ci[ai]
                p, p2 = collide(chart, xc[ai], vc[ai], partner[acc], ScatterSlice(ang, acc), strict=False)
                if weighted:
                    mm = xc[ai]
                    num = field.eval(chart, mm, p2)
                    den = field.eval(chart, mm, partner[acc])
                    with np.errstate(divide="ignore"):
                        logw[lanes_a] += np.log(num) - np.log(den)
                if record:
                    for k, j in enumerate(lanes_a):
                        events[j].append(PathEvent(float(s[j]), "jump", _pp(x[j], v[j]), _pp(x[j], p[k]),
                                                   float(logw[j])))
                v[lanes_a] = p
                njump[lanes_a] += 1
                accept[ai] = True
        if record and record_flights:
            for k, j in enumerate(ci):
                if not accept[k]:
                    events[j].append(PathEvent(float(s[j]), "flight-step", _pp(x[j], v[j]), _pp(x[j], v[j]),
                                               float(logw[j])))
        e = exponential(rng.uniform_at(lane_c, blk_exp, 1)[:, 0])
        next_c[ci] = next_c[ci] + e / lam
        if rng.block > base + BLOCKS_PER_ROUND:
            raise RuntimeError("RNG block window overflow")  # pragma: no cover
    return {
        "m": x, "mdot": v, "s": s, "log_weight": logw, "hit": hit, "aborted": aborted,
        "n_jumps": njump, "n_candidates": ncand, "max_shell_error": maxcorr, "rounds": rounds,
        "snapshots": snaps, "events": events,
    }


class ScatterSlice:
    """Row subset of a ScatterAngle without re-validation."""

    def __init__(self, ang, sel):
        self.theta = ang.theta[sel]
        self.phi_az = ang.phi_az[sel]


def _run(chart, field, kernel, lam, x, v, sgn, s_end, V, grid, cfg, rng, record, record_flights, weighted):
    n = x.shape[0]
    lanes_all = np.arange(n, dtype=np.int64)
    block0 = rng.block
    chunks = [slice(i, min(i + cfg.chunk_size, n)) for i in range(0, n, cfg.chunk_size)]

    def work(sl):
        return _engine(chart, field, kernel, lam, x[sl], v[sl], lanes_all[sl], rng.seed, rng.stream, block0,
                       sgn, s_end[sl], V, grid, record, record_flights, cfg.ds, weighted, cfg.max_rounds)

    if cfg.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
            parts = list(ex.map(work, chunks))
    else:
        parts = [work(sl) for sl in chunks]
    rounds = max(p["rounds"] for p in parts) if parts else 0
    rng.block = block0 + _INIT_BLOCKS + BLOCKS_PER_ROUND * (rounds + 1)

    def cat(key):
        return np.concatenate([p[key] for p in parts]) if parts else np.empty(0)

    snaps = None
    if grid is not None and grid.size:
        snaps = {k: np.concatenate([p["snapshots"][k] for p in parts], axis=1) for k in parts[0]["snapshots"]}
    events = None
    if record:
        events = [e for p in parts for e in p["events"]]
    return PathBatch(
        m=cat("m").reshape(-1, 4), mdot=cat("mdot").reshape(-1, 4), s=cat("s"), log_weight=cat("log_weight"),
        hit=cat("hit").astype(bool), aborted=cat("aborted").astype(bool), n_jumps=cat("n_jumps"),
        n_candidates=cat("n_candidates"), lambda_bar=lam,
        max_shell_error=max([p["max_shell_error"] for p in parts] + [0.0]),
        grid=grid, snapshots=snaps, events=events)


def _broadcast_start(chart, phi0, n):
    m = np.asarray(phi0.m, dtype=float)
    v = np.asarray(phi0.mdot, dtype=float)
    if m.ndim == 1:
        if n is None:
            n = 1
        m = np.broadcast_to(m, (n, 4)).copy()
        v = np.broadcast_to(v, (n, 4)).copy()
    elif n is not None and n != m.shape[0]:
        raise ValueError("n does not match the number of start points")
    check_on_shell(chart, m, v)
    return m, v


def _grid(s_grid):
    if s_grid is None:
        return None
    g = np.asarray(sorted(float(t) for t in s_grid))
    if np.any(g < 0):
        raise ValueError("s_grid must be nonnegative")
    return g


def simulate_forward(chart: Chart, phi0: PhasePoint, field: DistributionField, kernel: CollisionKernel,
                     cfg: SimConfig, rng: CounterRNG, n: Optional[int] = None, s_grid=None,
                     record: bool = False, record_flights: bool = False, V: Optional[Hypersurface] = None,
                     s_max: Optional[float] = None, probes=None) -> PathBatch:
    """Forward paths of the collision process up to proper time ``s_max`` (default cfg.s_max).

    With V given, paths also stop where they first meet V (``hit``).
    """
    m, v = _broadcast_start(chart, phi0, n)
    lam = resolve_majorant(cfg, chart, field, kernel, m if probes is None else probes)
    horizon = cfg.s_max if s_max is None else float(s_max)
    s_end = np.full(m.shape[0], horizon)
    return _run(chart, field, kernel, lam, m, v, 1, s_end, V, _grid(s_grid), cfg, rng, record,
                record_flights, weighted=False)


def _hit_bounds(V, m):
    out = np.empty(m.shape[0])
    for i, mi in enumerate(m):
        T = hitting_time_bound(V, mi)
        out[i] = np.nan if T is None else T
    return out


def simulate_backward(chart: Chart, phi0: PhasePoint, field: DistributionField, kernel: CollisionKernel,
                      V: Hypersurface, cfg: SimConfig, rng: CounterRNG, n: Optional[int] = None,
                      s_grid=None, record: bool = False, record_flights: bool = False,
                      hit_bound=None, probes=None) -> PathBatch:
    """Past-directed weighted paths from ``phi0`` until they meet V.

    Jumps mdot -> p happen at rate density W f(mdot') dtheta VOL^1(dmdot')
    and multiply the weight by f(p') / f(mdot'). The weighted generator is
    then h -> -H0 h + int int {f(p') h(p) - f(mdot') h(mdot)} W, that is
    -H0 + C(f, .). At a homogeneous equilibrium f(p) f(p') = f(mdot) f(mdot')
    so the weight telescopes to f(phi0) / f(psi_H).

    Paths that have not met V after ``cfg.nohit_factor`` times the hitting
    bound T(m) (or after cfg.s_max when no bound is available) raise NoHit.
    """
    m, v = _broadcast_start(chart, phi0, n)
    if np.any(V.level(m) < 0):
        raise ValueError("start points must lie to the future of the hypersurface")
    lam = resolve_majorant(cfg, chart, field, kernel, m if probes is None else probes)
    if hit_bound is None:
        T = _hit_bounds(V, m)
    else:
        T = np.broadcast_to(np.asarray(hit_bound, dtype=float), (m.shape[0],)).copy()
    s_end = np.where(np.isnan(T), cfg.s_max, cfg.nohit_factor * T + 1e-12)
    batch = _run(chart, field, kernel, lam, m, v, -1, s_end, V, _grid(s_grid), cfg, rng, record,
                 record_flights, weighted=True)
    missed = ~batch.hit & ~batch.aborted
    if np.any(missed):
        j = int(np.nonzero(missed)[0][0])
        raise NoHit(f"path {j} did not meet the hypersurface within s = {s_end[j]:.6g} "
                    f"(bound {T[j]:.6g} x factor {cfg.nohit_factor}); start {m[j].tolist()}")
    return batch


def estimate_f(chart: Chart, phi0: PhasePoint, field: DistributionField, kernel: CollisionKernel,
               V: Hypersurface, f_initial: DistributionField, n: int, cfg: SimConfig,
               rng: CounterRNG) -> Estimate:
    """Mean of weight * f_initial(psi_H) over n past-directed paths from phi0."""
    batch = simulate_backward(chart, phi0, field, kernel, V, cfg, rng, n=n)
    if np.any(batch.aborted):
        raise NoHit(f"{int(batch.aborted.sum())} paths left the chart before meeting V")
    vals = batch.weight * f_initial.eval(chart, batch.m, batch.mdot)
    se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return Estimate(float(vals.mean()), se, batch, vals)


def martingale_check(chart: Chart, phi0: PhasePoint, f_field: DistributionField, kernel: CollisionKernel,
                     V: Hypersurface, cfg: SimConfig, n: int, s_grid, rng: CounterRNG,
                     background: Optional[DistributionField] = None):
    """Means of weight_s * f_field(psi_{s ^ H}) over s_grid.

    The process is driven by ``background`` (default ``f_field``); passing a
    different f_field tests a function that is not harmonic for the process.
    Returns a dict with the table and the largest deviation from the s = 0
    value in units of its standard error.
    """
    bg = f_field if background is None else background
    grid = _grid(s_grid)
    batch = simulate_backward(chart, phi0, bg, kernel, V, cfg, rng, n=n, s_grid=grid)
    sn = batch.snapshots
    rows = []
    ref = None
    for k, sv in enumerate(grid):
        vals = np.exp(sn["log_weight"][k]) * f_field.eval(chart, sn["m"][k], sn["mdot"][k])
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(n))
        if ref is None:
            ref = mean
        rows.append((float(sv), mean, se))
    dev = np.array([abs(r[1] - ref) for r in rows])
    se = np.array([r[2] for r in rows])
    floor = 1e-12 * abs(ref)
    excess = np.maximum(dev - floor, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, excess / se, np.where(excess > 0, np.inf, 0.0))
    return {"table": rows, "reference": ref, "max_z": float(np.max(z)),
            "constant": bool(np.all(dev <= 3.0 * se + floor)), "batch": batch}


# --- weak form of stationarity ----------------------------------------------------


def _bump1(u):
    b = np.clip(1.0 - u * u, 0.0, None)
    return b**3


def smooth_test_function(chart: Chart, center, radius, kind: str = "energy", p_cut: float = 6.0):
    """Smooth compactly supported h(m, mdot) = B(m) psi(p).

    B is a product of (1 - u^2)^3 bumps in every coordinate around
    ``center`` with half-width ``radius``; psi depends on the canonical-frame
    momentum p and is cut off smoothly at energy 1 + p_cut. ``kind`` selects
    psi: "energy" (cut-off only), "px2" (p1^2 times cut-off) or "mixed"
    ((p1 + p2 / 2) p3 times cut-off). None of these is a collision invariant.
    """
    center = np.asarray(center, dtype=float)
    radius = np.broadcast_to(np.asarray(radius, dtype=float), (4,))
    if kind not in ("energy", "px2", "mixed", "zero"):
        raise ValueError(f"unknown test function kind {kind!r}")

    def h(x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if kind == "zero":
            return np.zeros(x.shape[:-1])
        B = np.prod(_bump1((x - center) / radius), axis=-1)
        p4 = canonical_momentum(chart, x, v)
        cut = _bump1((p4[..., 0] - 1.0) / p_cut)
        if kind == "energy":
            psi = cut
        elif kind == "px2":
            psi = p4[..., 1] ** 2 * cut
        else:
            psi = (p4[..., 1] + 0.5 * p4[..., 2]) * p4[..., 3] * cut
        return B * psi

    h.kind = kind
    return h


def weak_stationarity_check(chart: Chart, field: DistributionField, kernel: CollisionKernel, h: Callable,
                            region, n: int, rng: CounterRNG, fd_step: float = 1e-3, ds: float = 1e-2,
                            antithetic: bool = True):
    """Monte Carlo of int f (G h) dVOL_{T^1 M} over a coordinate box.

    G h = H0 h + int int {h(p) - h(mdot)} W dtheta f(mdot') VOL^1(dmdot'). Positions are
    uniform in the box (weighted by sqrt|det g|), mdot is drawn from
    f(m, .)/n_f, and the collision part uses one partner and one angle per
    sample. H0 h is a central difference of step ``fd_step`` along the
    geodesic flow.

    With ``antithetic`` each position x is paired with its mirror image
    through the box centre, which has the same uniform law. The mirror
    point reuses the frame components of mdot, the partner and the angle,
    reweighted by the likelihood ratio of f at the two points, so the pair
    average stays unbiased for any field. For test functions whose
    position profile is even about the centre the transport term H0 h
    flips sign between the two, which removes most of its variance.
    Returns (mean, stderr) over the n // 2 pairs (n samples otherwise).
    """
    lower = np.asarray(region[0], dtype=float)
    upper = np.asarray(region[1], dtype=float)
    vol = float(np.prod(upper - lower))
    if getattr(h, "kind", None) == "zero":
        return 0.0, 0.0
    m_draws = n // 2 if antithetic else n
    lanes = np.arange(m_draws)
    u = rng.uniform(lanes, 4)
    x = lower + (upper - lower) * u
    nf = np.broadcast_to(field.local_norm(chart, x), (m_draws,)).astype(float)
    if np.all(nf == 0):
        return 0.0, 0.0
    mdot = field.sample_partner(chart, x, rng, lanes)
    partner = field.sample_partner(chart, x, rng, lanes)
    ua = rng.uniform(lanes, 2)
    ang = uniform_angles(ua[:, 0], ua[:, 1])

    def terms(xx, vv, pp, scale, scale_partner):
        xp, vp, _, _ = flow_to(chart, xx, vv, fd_step, ds=ds, direction=1)
        xm, vm, _, _ = flow_to(chart, xx, vv, fd_step, ds=ds, direction=-1)
        H0h = (h(xp, vp) - h(xm, vm)) / (2.0 * fd_step)
        out, _ = collide(chart, xx, vv, pp, ang, strict=False)
        jump = FOUR_PI * nf * scale_partner * kernel(chart, xx, vv, pp, ang) * (h(xx, out) - h(xx, vv))
        sqrt_g = np.sqrt(np.abs(np.linalg.det(chart.metric(xx))))
        return vol * sqrt_g * nf * scale * (H0h + jump)

    ones = np.ones(m_draws)
    vals = terms(x, mdot, partner, ones, ones)
    if antithetic:
        xr = lower + upper - x
        fr, frr = chart.frame(x), chart.frame(xr)
        vr = frr.to_coordinates(fr.to_frame(chart, mdot))
        pr = frr.to_coordinates(fr.to_frame(chart, partner))
        f0, f0p = field.eval(chart, x, mdot), field.eval(chart, x, partner)
        f1, f1p = field.eval(chart, xr, vr), field.eval(chart, xr, pr)
        if np.any((f0 == 0) & (f1 > 0)) or np.any((f0p == 0) & (f1p > 0)):
            raise ValueError("antithetic weak-form sampling needs f(x, .) > 0 wherever f(mirror x, .) > 0")
        r = np.where(f0 > 0, f1 / np.where(f0 > 0, f0, 1.0), 0.0)
        rp = np.where(f0p > 0, f1p / np.where(f0p > 0, f0p, 1.0), 0.0)
        vals = 0.5 * (vals + terms(xr, vr, pr, r, rp))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))


def mean_collision_rate(chart: Chart, field: DistributionField, kernel: CollisionKernel, n: int,
                        rng: CounterRNG, m=None):
    """Average total collision rate of particles drawn from the field at m (Monte Carlo)."""
    m = np.zeros(4) if m is None else np.asarray(m, dtype=float)
    lanes = np.arange(n)
    nf = float(field.local_norm(chart, m))
    a = field.sample_partner(chart, m, rng, lanes)
    b = field.sample_partner(chart, m, rng, lanes)
    ua = rng.uniform(lanes, 2)
    w = kernel(chart, m, a, b, uniform_angles(ua[:, 0], ua[:, 1]))
    vals = FOUR_PI * nf * w
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


EVENTS_SCHEMA_VERSION = 1


def write_events_csv(path, events: Sequence[Sequence[PathEvent]], meta=None):
    """Event log: one row per event with the path index and the state after the event."""
    import csv
    import json
    from pathlib import Path

    head = {"schema_version": EVENTS_SCHEMA_VERSION, "kind": "event_log", **(meta or {})}
    with Path(path).open("w", newline="") as fh:
        fh.write("# " + json.dumps(head, sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(["path", "s", "kind", "x0", "x1", "x2", "x3", "mdot0", "mdot1", "mdot2", "mdot3", "log_weight"])
        for i, evs in enumerate(events):
            for e in evs:
                w.writerow([i, repr(e.s), e.kind] + [repr(float(c)) for c in e.after.m]
                           + [repr(float(c)) for c in e.after.mdot] + [repr(e.log_weight)])
