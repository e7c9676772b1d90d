"""Score vital-sign reports against simulator ground truth."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import DataError
from .tracking import hungarian

REPORT_PATTERN = re.compile(r"vitals_(?P<source>[a-z]+)_(?P<id>\d+)\.json$")


@dataclass(frozen=True)
class AssociationGate:
    """Largest position errors for which a report may stand for a truth target."""

    range_m: float = 0.3
    angle_deg: float = 10.0


def load_reports(reports_dir: str | Path) -> dict[str, list[dict]]:
    """Report dicts found in ``reports_dir`` grouped by source (energy/phase)."""
    out: dict[str, list[dict]] = {}
    paths = sorted(Path(reports_dir).glob("vitals_*.json"))
    for p in paths:
        m = REPORT_PATTERN.search(p.name)
        if not m:
            continue
        data = json.loads(p.read_text())
        out.setdefault(data.get("source", m["source"]), []).append(data)
    return out


def _mae_rmse(errors: list[float]) -> dict[str, float | None]:
    if not errors:
        return {"mae": None, "rmse": None, "count": 0}
    e = np.abs(np.asarray(errors, dtype=float))
    return {"mae": float(e.mean()), "rmse": float(np.sqrt(np.mean(e**2))), "count": len(errors)}


def associate(reports: list[dict], truth: list[dict], gate: AssociationGate) -> list[tuple[int, int]]:
    """Optimal report-to-truth pairing by normalised (range, angle) distance within ``gate``."""
    usable = [i for i, r in enumerate(reports) if r.get("range_m") is not None]
    if not usable or not truth:
        return []
    cost = np.empty((len(usable), len(truth)))
    for a, i in enumerate(usable):
        r = reports[i]
        for j, t in enumerate(truth):
            cost[a, j] = math.hypot(
                (r["range_m"] - t["range_m"]) / gate.range_m,
                (r.get("angle_deg", 0.0) - t["angle_deg"]) / gate.angle_deg,
            )
    pairs, _ = hungarian(cost)
    out = []
    for a, j in pairs:
        r, t = reports[usable[a]], truth[j]
        if abs(r["range_m"] - t["range_m"]) <= gate.range_m and abs(r.get("angle_deg", 0.0) - t["angle_deg"]) <= gate.angle_deg:
            out.append((usable[a], j))
    return out


def score(reports: list[dict], truth: list[dict], gate: AssociationGate | None = None) -> dict:
    """MAE/RMSE of both rates, detection rate and localisation error for one source.

    A truth target without an associated report counts as a miss; an
    associated report whose band is invalid contributes no rate error and is
    counted under ``invalid``.
    """
    gate = gate or AssociationGate()
    pairs = associate(reports, truth, gate)
    rr, hr, dr, da = [], [], [], []
    per_target = []
    invalid = {"respiration": 0, "heart": 0}
    for i, j in pairs:
        r, t = reports[i], truth[j]
        entry = {
            "truth_index": t.get("index", j),
            "trajectory_id": r.get("trajectory_id"),
            "range_error_m": r["range_m"] - t["range_m"],
            "angle_error_deg": r.get("angle_deg", 0.0) - t["angle_deg"],
        }
        dr.append(entry["range_error_m"])
        da.append(entry["angle_error_deg"])
        for band, key, sink in (("respiration", "respiration_bpm", rr), ("heart", "heart_bpm", hr)):
            if r.get(key) is None:
                invalid[band] += 1
                entry[f"{band}_error_bpm"] = None
            else:
                err = r[key] - t[key]
                sink.append(err)
                entry[f"{band}_error_bpm"] = err
        per_target.append(entry)
    return {
        "respiration": _mae_rmse(rr),
        "heart": _mae_rmse(hr),
        "detection_rate": len(pairs) / len(truth) if truth else None,
        "num_truth": len(truth),
        "num_reports": len(reports),
        "num_matched": len(pairs),
        "unmatched_reports": len(reports) - len(pairs),
        "invalid": invalid,
        "range_error_m": _mae_rmse(dr),
        "angle_error_deg": _mae_rmse(da),
        "per_target": per_target,
    }


def evaluate(reports_dir: str | Path, truth_path: str | Path, gate: AssociationGate | None = None) -> dict:
    """Metrics per report source found in ``reports_dir``."""
    try:
        truth = json.loads(Path(truth_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{truth_path}: {exc}") from exc
    subjects = truth.get("subjects")
    if subjects is None:
        raise DataError(f"{truth_path}: missing 'subjects'")
    grouped = load_reports(reports_dir)
    if not grouped:
        grouped = {"energy": []}
    return {"methods": {src: score(reps, subjects, gate) for src, reps in sorted(grouped.items())}}
