"""Result emission: summary.json, trajectories.csv, spectrum.json.

Outputs are byte-deterministic for a given (config, seed): keys are sorted,
floats use full repr precision in JSON and 17 significant digits in CSV, and
no timestamps are written.
"""
from __future__ import annotations

import json
import os
from typing import Optional, Sequence

import numpy as np

from .engine import RunRecord


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_summary(report: dict, path: str):
    with open(path, "w") as fh:
        json.dump(_jsonable(report), fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_summary(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


_EXIT_CODE = {None: 0, "tube_l2": 1, "tube_l4": 2, "domain": 3}


def write_trajectories(records: Sequence[RunRecord], path: str,
                       position_label: str = "h"):
    """CSV with columns replica, t, positions, v-norms and the exit flag."""
    if not records:
        with open(path, "w") as fh:
            fh.write("replica,t\n")
        return
    dim = records[0].positions.shape[1]
    cols = [f"{position_label}_{i + 1}" for i in range(dim)]
    header = ",".join(["replica", "t"] + cols + ["norm_v_l2", "norm_v_l4", "exit_flag"])
    fmt = "%.17g"
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for rec in records:
            exited = _EXIT_CODE.get(rec.exit_reason, 0)
            for j, t in enumerate(rec.times):
                flag = exited if (rec.exit_time is not None and t >= rec.exit_time) else 0
                row = [str(rec.replica), fmt % t]
                row += [fmt % v for v in rec.positions[j]]
                row += [fmt % rec.norm_v_l2[j], fmt % rec.norm_v_l4[j], str(flag)]
                fh.write(",".join(row) + "\n")


def write_outputs(report: dict, records: Sequence[RunRecord], outdir: str,
                  spectrum: Optional[dict] = None) -> dict:
    """Write the standard artifact set into ``outdir``; returns the paths."""
    os.makedirs(outdir, exist_ok=True)
    paths = {"summary": os.path.join(outdir, "summary.json")}
    write_summary(report, paths["summary"])
    label = "xi" if report.get("scenario", "").endswith(
        ("mac", "mac_l2", "mac_l4")) else "h"
    paths["trajectories"] = os.path.join(outdir, "trajectories.csv")
    write_trajectories(records, paths["trajectories"], position_label=label)
    if spectrum is not None:
        paths["spectrum"] = os.path.join(outdir, "spectrum.json")
        write_summary(spectrum, paths["spectrum"])
    return paths
