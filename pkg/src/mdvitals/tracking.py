"""Hungarian assignment and frame-to-frame multi-target tracking."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .detection import Detection


def hungarian(cost) -> tuple[list[tuple[int, int]], float]:
    """Minimum-cost assignment for an ``n x m`` cost matrix.

    Returns the matched ``(row, col)`` pairs sorted by row and their total
    cost; ``min(n, m)`` pairs are always produced. Shortest augmenting path
    with dual potentials, O(n^2 m).
    """
    a = np.asarray(cost, dtype=float)
    if a.size == 0:
        return [], 0.0
    if a.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("cost matrix must be finite")
    transposed = a.shape[0] > a.shape[1]
    if transposed:
        a = a.T
    n, m = a.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    owner = np.zeros(m + 1, dtype=int)  # owner[j]: 1-based row matched to column j
    way = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            reduced = a[i0 - 1] - u[i0] - v[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    pairs = [(int(owner[j]) - 1, j - 1) for j in range(1, m + 1) if owner[j]]
    if transposed:
        pairs = [(c, r) for r, c in pairs]
    pairs.sort()
    total = float(sum(np.asarray(cost, dtype=float)[r, c] for r, c in pairs))
    return pairs, total


@dataclass
class Trajectory:
    id: int
    points: list[Detection] = field(default_factory=list)
    range_rate: float = 0.0  # m per frame
    angle_rate: float = 0.0  # deg per frame
    missed_count: int = 0

    def __len__(self) -> int:
        return len(self.points)

    @property
    def first_frame(self) -> int:
        return self.points[0].frame

    @property
    def last_frame(self) -> int:
        return self.points[-1].frame

    @property
    def state(self) -> tuple[float, float, float, float]:
        p = self.points[-1]
        return (p.range_m, p.angle_deg, self.range_rate, self.angle_rate)

    def predict(self, frame: int) -> tuple[float, float]:
        p = self.points[-1]
        dt = frame - p.frame
        return p.range_m + self.range_rate * dt, p.angle_deg + self.angle_rate * dt

    def append(self, det: Detection) -> None:
        if self.points:
            last = self.points[-1]
            if det.frame <= last.frame:
                raise ValueError("trajectory frames must increase")
            dt = det.frame - last.frame
            self.range_rate = (det.range_m - last.range_m) / dt
            self.angle_rate = (det.angle_deg - last.angle_deg) / dt
        self.points.append(det)
        self.missed_count = 0

    def cells(self, frames: Sequence[int]) -> np.ndarray:
        """``(range_bin, doppler_bin)`` per requested frame.

        Frames without an associated detection hold the most recent cell;
        frames before the first point take the first cell.
        """
        own = np.array([p.frame for p in self.points])
        bins = np.array([(p.range_bin, p.doppler_bin) for p in self.points])
        idx = np.searchsorted(own, np.asarray(frames), side="right") - 1
        return bins[np.clip(idx, 0, len(own) - 1)]

    def mean_position(self) -> tuple[float, float]:
        return (
            float(np.mean([p.range_m for p in self.points])),
            float(np.mean([p.angle_deg for p in self.points])),
        )


class Tracker:
    """Online form of Hungarian-association tracking.

    Each frame: predict every live trajectory with constant velocity, build
    the normalised (range, angle) distance matrix, solve the assignment, and
    accept pairs closer than ``gate_distance``. Rejected and unassigned
    measurements start new trajectories. ``finalize`` drops trajectories
    shorter than ``min_length``.

    Trajectories that go unassigned stop taking part in association after
    ``max_missed`` frames (``min_length`` frames while still shorter than
    ``min_length``); they are kept for the final result.
    """

    def __init__(
        self,
        range_scale_m: float,
        angle_scale_deg: float = 0.5,
        gate_distance: float = 5.0,
        min_length: int = 10,
        max_missed: int = 500,
    ):
        self.range_scale_m = range_scale_m
        self.angle_scale_deg = angle_scale_deg
        self.gate_distance = gate_distance
        self.min_length = min_length
        self.max_missed = max_missed
        self.trajectories: list[Trajectory] = []
        self.live: list[Trajectory] = []
        self._next_id = 0

    def _spawn(self, det: Detection) -> Trajectory:
        t = Trajectory(self._next_id)
        self._next_id += 1
        t.append(det)
        self.trajectories.append(t)
        self.live.append(t)
        return t

    def cost_matrix(self, frame: int, detections: Sequence[Detection]) -> np.ndarray:
        pred = np.array([t.predict(frame) for t in self.live]).reshape(-1, 2)
        meas = np.array([(d.range_m, d.angle_deg) for d in detections]).reshape(-1, 2)
        dr = (pred[:, None, 0] - meas[None, :, 0]) / self.range_scale_m
        da = (pred[:, None, 1] - meas[None, :, 1]) / self.angle_scale_deg
        return np.hypot(dr, da)

    def update(self, frame: int, detections: Sequence[Detection]) -> None:
        assigned: set[int] = set()
        matched: set[int] = set()
        if self.live and detections:
            cost = self.cost_matrix(frame, detections)
            pairs, _ = hungarian(cost)
            for i, j in pairs:
                if cost[i, j] < self.gate_distance:
                    self.live[i].append(detections[j])
                    assigned.add(i)
                    matched.add(j)
        survivors = []
        for i, t in enumerate(self.live):
            if i not in assigned:
                t.missed_count += 1
                limit = self.max_missed if len(t) >= self.min_length else self.min_length
                if t.missed_count > limit:
                    continue
            survivors.append(t)
        self.live = survivors
        for j, det in enumerate(detections):
            if j not in matched:
                self._spawn(det)

    def confirmed(self) -> list[Trajectory]:
        return [t for t in self.trajectories if len(t) >= self.min_length]

    def finalize(self) -> list[Trajectory]:
        return sorted(self.confirmed(), key=lambda t: t.id)


def track(
    frames_of_detections: Iterable[Sequence[Detection]],
    range_scale_m: float,
    angle_scale_deg: float = 0.5,
    gate_distance: float = 5.0,
    min_length: int = 10,
    max_missed: int = 500,
    first_frame: int = 0,
) -> list[Trajectory]:
    """Batch tracking over per-frame detection lists given in frame order."""
    tracker = Tracker(range_scale_m, angle_scale_deg, gate_distance, min_length, max_missed)
    for offset, dets in enumerate(frames_of_detections):
        frame = dets[0].frame if dets else first_frame + offset
        tracker.update(frame, list(dets))
    return tracker.finalize()


def write_trajectories_csv(trajectories: Iterable[Trajectory], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "id", "range_m", "angle_deg", "snr_db"])
        for t in trajectories:
            for p in t.points:
                w.writerow([p.frame, t.id, f"{p.range_m:.6f}", f"{p.angle_deg:.4f}", f"{p.snr_db:.3f}"])


def read_trajectories_csv(path: str | Path) -> dict[int, list[dict]]:
    out: dict[int, list[dict]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(int(row["id"]), []).append(
                {
                    "frame": int(row["frame"]),
                    "range_m": float(row["range_m"]),
                    "angle_deg": float(row["angle_deg"]),
                    "snr_db": float(row["snr_db"]),
                }
            )
    return out
