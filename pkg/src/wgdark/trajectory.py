"""Trajectory container and CSV/JSON-sidecar export."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__


@dataclass
class Trajectory:
    times: np.ndarray
    observables: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)
    final_state: object = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.observables = {k: np.asarray(v, dtype=float) for k, v in self.observables.items()}
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        for name, series in self.observables.items():
            if series.shape != self.times.shape:
                raise ValueError(f"series {name!r} has length {series.size}, expected {self.times.size}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.observables[name]

    @property
    def names(self) -> list[str]:
        return list(self.observables)


def format_float(x: float) -> str:
    return f"{float(x):.17g}"


def write_csv(path, columns: dict[str, np.ndarray]) -> Path:
    """Write equal-length columns with 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*data):
            w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_rows(path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_sidecar(csv_path, meta: dict) -> Path:
    """JSON file next to ``csv_path`` holding everything needed to re-run it."""
    csv_path = Path(csv_path)
    side = csv_path.with_suffix(".json")
    payload = {"artifact_version": __version__, **meta}
    side.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable))
    return side


def write_trajectory(path, traj: Trajectory, meta: dict | None = None) -> Path:
    cols = {"time": traj.times, **traj.observables}
    out = write_csv(path, cols)
    write_sidecar(out, {**traj.metadata, **(meta or {})})
    return out


def read_csv(path) -> dict[str, np.ndarray]:
    with Path(path).open() as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [list(map(float, row)) for row in r]
    arr = np.array(rows, dtype=float).reshape(-1, len(header))
    return {name: arr[:, i] for i, name in enumerate(header)}


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, tuple)):
        return list(obj)
    return str(obj)
