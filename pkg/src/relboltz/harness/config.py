"""Scenario configuration: TOML files with spacetime, field, kernel, hypersurface, sim and checks."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ImportError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from ..causal import Hypersurface, make_hypersurface
from ..collision import CollisionKernel, make_kernel
from ..errors import ConfigError, RelBoltzError
from ..geometry import Chart, make_chart
from ..phase_space import DistributionField, JuttnerField, SumField, TabulatedField, ZeroField
from ..process import SimConfig, majorant

__all__ = ["Scenario", "load_config", "parse_config", "build_scenario", "shipped_scenarios",
           "scenario_path", "bump_modulation"]

_RUN_KEYS = {
    "simulate": {"n", "s_max", "record", "stop_at_hypersurface", "m", "p", "sample_from_field", "dump_every"},
    "estimate": {"n", "m", "p", "f_initial"},
}

_SECTIONS = {"name", "description", "seed", "spacetime", "field", "kernel", "hypersurface", "sim",
             "checks", "estimate", "simulate", "runtime_note"}


def shipped_scenarios():
    root = resources.files("relboltz").joinpath("scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def scenario_path(name_or_path) -> Path:
    """A file path, or the name of a shipped scenario."""
    p = Path(name_or_path)
    if p.exists():
        return p
    name = str(name_or_path)
    if name.endswith(".toml"):
        name = name[:-5]
    res = resources.files("relboltz").joinpath("scenarios", name + ".toml")
    if res.is_file():
        return Path(str(res))
    raise ConfigError(f"no config file or shipped scenario named {name_or_path!r} "
                      f"(shipped: {', '.join(shipped_scenarios())})")


def load_config(path) -> dict:
    path = scenario_path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    raw.setdefault("name", path.stem)
    raw["_base_dir"] = str(path.parent)
    return raw


def parse_config(text: str, base_dir: str = ".") -> dict:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(exc)) from exc
    raw["_base_dir"] = base_dir
    return raw


def _num(sec: dict, key: str, where: str, default=None, positive=False, nonneg=False):
    if key not in sec:
        if default is None:
            raise ConfigError(f"{where}.{key}: missing required number")
        return default
    val = sec[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {val!r}")
    val = float(val)
    if not math.isfinite(val) or (positive and val <= 0) or (nonneg and val < 0):
        kind = "positive" if positive else "nonnegative" if nonneg else "finite"
        raise ConfigError(f"{where}.{key}: expected a {kind} number, got {val!r}")
    return val


def _vec(sec, key, where, n=3, default=None):
    val = sec.get(key, default)
    if val is None:
        raise ConfigError(f"{where}.{key}: missing")
    try:
        arr = np.asarray(val, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: expected a list of {n} numbers") from None
    if arr.shape != (n,):
        raise ConfigError(f"{where}.{key}: expected {n} numbers, got {val!r}")
    return arr


def bump_modulation(center, width, floor: float = 0.0):
    """Position modulation floor + (1 - |x - c|^2 / w^2)^3 over the spatial coordinates."""
    center = np.asarray(center, dtype=float)

    def mod(x):
        d = (np.asarray(x, dtype=float)[..., 1:] - center) / width
        return floor + np.clip(1.0 - np.sum(d * d, axis=-1), 0.0, None) ** 3

    mod.bound = floor + 1.0
    return mod


def build_field(sec: dict, where: str = "field", base_dir: str = ".") -> DistributionField:
    if not isinstance(sec, dict):
        raise ConfigError(f"{where}: expected a table")
    kind = sec.get("kind", "juttner")
    if kind == "juttner":
        mod = None
        if "modulation" in sec:
            m = sec["modulation"]
            mod = bump_modulation(_vec(m, "center", where + ".modulation"),
                                  _num(m, "width", where + ".modulation", positive=True),
                                  _num(m, "floor", where + ".modulation", default=0.0, nonneg=True))
        return JuttnerField(_num(sec, "beta", where, positive=True),
                            _num(sec, "density", where, default=1.0, nonneg=True),
                            _vec(sec, "drift", where, default=[0.0, 0.0, 0.0]), mod)
    if kind == "zero":
        return ZeroField()
    if kind == "sum":
        terms = sec.get("terms")
        if not isinstance(terms, list) or not terms:
            raise ConfigError(f"{where}.terms: expected a non-empty list of tables")
        out = []
        for i, t in enumerate(terms):
            w = f"{where}.terms[{i}]"
            coef = _num(t, "coef", w, default=1.0, nonneg=True)
            sub = {k: v for k, v in t.items() if k != "coef"}
            out.append((coef, build_field(sub, w, base_dir)))
        return SumField(out)
    if kind == "tabulated":
        if "path" not in sec:
            raise ConfigError(f"{where}.path: missing")
        p = Path(sec["path"])
        if not p.is_absolute():
            p = Path(base_dir) / p
        try:
            return TabulatedField.from_csv(p)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"{where}.path: cannot load {p}: {exc}") from exc
    raise ConfigError(f"{where}.kind: unknown field kind {kind!r}")


@dataclass
class Scenario:
    name: str
    seed: int
    chart: Chart
    field: DistributionField
    kernel: CollisionKernel
    hypersurface: Optional[Hypersurface]
    sim: SimConfig
    checks: list
    raw: dict = field(repr=False, default_factory=dict)

    def echo(self) -> dict:
        """Config as parsed (JSON-safe), for run summaries."""
        return {k: v for k, v in self.raw.items() if not k.startswith("_")}


def build_scenario(raw: dict, seed: Optional[int] = None, workers: Optional[int] = None) -> Scenario:
    raw = copy.deepcopy(raw)
    unknown = set(raw) - _SECTIONS - {"_base_dir"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    base_dir = raw.get("_base_dir", ".")
    name = str(raw.get("name", "scenario"))
    if seed is not None:
        raw["seed"] = int(seed)
    sd = raw.get("seed", 0)
    if isinstance(sd, bool) or not isinstance(sd, int) or sd < 0:
        raise ConfigError(f"seed: expected a nonnegative integer, got {sd!r}")

    st = raw.get("spacetime", {"chart": "minkowski"})
    try:
        chart = make_chart(st.get("chart", "minkowski"), st.get("params", {}))
    except (KeyError, ValueError, TypeError, RelBoltzError) as exc:
        raise ConfigError(f"spacetime: {exc}") from exc

    fld = build_field(raw.get("field", {"kind": "zero"}), "field", base_dir)

    ks = dict(raw.get("kernel", {"name": "constant", "c": 0.0}))
    kname = ks.pop("name", None)
    if kname is None:
        raise ConfigError("kernel.name: missing")
    for k, v in ks.items():
        _num(ks, k, "kernel")
    try:
        kernel = make_kernel(kname, ks)
    except ValueError as exc:
        raise ConfigError(f"kernel: {exc}") from exc

    V = None
    if "hypersurface" in raw:
        hs = dict(raw["hypersurface"])
        kind = hs.pop("kind", "flat")
        try:
            V = make_hypersurface(chart, kind, hs)
        except (ValueError, TypeError, RelBoltzError) as exc:
            raise ConfigError(f"hypersurface: {exc}") from exc

    ss = dict(raw.get("sim", {}))
    if workers is not None:
        ss["workers"] = int(workers)
    ss.setdefault("seed", sd)
    known = set(SimConfig.__dataclass_fields__)
    bad = set(ss) - known
    if bad:
        raise ConfigError(f"sim: unknown keys {sorted(bad)}")
    try:
        sim = SimConfig(**ss)
    except TypeError as exc:
        raise ConfigError(f"sim: {exc}") from exc
    if sim.lambda_bar is not None:
        try:
            need = majorant(chart, fld, kernel, _field_probes())
        except ValueError as exc:
            raise ConfigError(f"field: {exc}") from exc
        if sim.lambda_bar < need * (1 - 1e-12):
            raise ConfigError(f"sim.lambda_bar = {sim.lambda_bar:g} is below the validated majorant {need:g}")

    for sec, allowed in _RUN_KEYS.items():
        if sec in raw:
            if not isinstance(raw[sec], dict):
                raise ConfigError(f"{sec}: expected a table")
            extra = set(raw[sec]) - allowed
            if extra:
                raise ConfigError(f"{sec}: unknown keys {sorted(extra)}")

    checks = raw.get("checks", [])
    if not isinstance(checks, list):
        raise ConfigError("checks: expected an array of tables ([[checks]])")
    for i, c in enumerate(checks):
        if not isinstance(c, dict) or "name" not in c:
            raise ConfigError(f"checks[{i}]: every check needs a name")
    return Scenario(name, int(sd), chart, fld, kernel, V, sim, checks, raw)


def _field_probes():
    grid = np.linspace(-2.0, 2.0, 9)
    xs = np.stack(np.meshgrid(grid, grid, grid, indexing="ij"), -1).reshape(-1, 3)
    return np.concatenate([np.zeros((xs.shape[0], 1)), xs], axis=1)
