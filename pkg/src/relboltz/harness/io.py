"""JSON and CSV output for run summaries and artifacts."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

SUMMARY_SCHEMA_VERSION = 1
STATES_SCHEMA_VERSION = 1


def to_jsonable(obj):
    """Plain Python types only; non-finite floats become strings so the output stays strict JSON."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if obj is None or isinstance(obj, str):
        return obj
    return repr(obj)


def dumps(summary) -> str:
    return json.dumps(to_jsonable(summary), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, summary):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(summary))
    return path


def strip_timings(summary: dict) -> dict:
    """Copy of a summary without wall-clock fields, for reproducibility comparisons."""
    return {k: v for k, v in summary.items() if k != "timings"}


def write_states_csv(path, batch, meta=None):
    """Final state of every path in a batch."""
    head = {"schema_version": STATES_SCHEMA_VERSION, "kind": "final_states", **(meta or {})}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write("# " + json.dumps(to_jsonable(head), sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(["path", "s", "x0", "x1", "x2", "x3", "mdot0", "mdot1", "mdot2", "mdot3",
                    "log_weight", "hit", "aborted", "n_jumps"])
        for i in range(len(batch)):
            w.writerow([i, repr(float(batch.s[i]))] + [repr(float(c)) for c in batch.m[i]]
                       + [repr(float(c)) for c in batch.mdot[i]]
                       + [repr(float(batch.log_weight[i])), int(batch.hit[i]), int(batch.aborted[i]),
                          int(batch.n_jumps[i])])
    return path
