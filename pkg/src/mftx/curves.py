"""Sampled probability curves and their CSV form."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("pdf", "cdf")
SOURCES = ("analytic", "empirical")


@dataclass(frozen=True)
class CirCurve:
    """A density (1/s) or fraction curve sampled on a time grid."""

    times: np.ndarray
    values: np.ndarray
    kind: str
    source: str = "analytic"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape or times.ndim != 1:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.kind == "pdf" and np.any(values < 0):
            raise ValueError("pdf values must be >= 0")
        if self.kind == "cdf":
            if np.any((values < 0) | (values > 1)):
                raise ValueError("cdf values must lie in [0, 1]")
            if np.any(np.diff(values) < 0):
                raise ValueError("cdf values must be nondecreasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self):
        return len(self.times)

    def to_csv(self, path: str | Path) -> None:
        write_curves_csv(path, [self])


def log_grid(horizon: float, n: int = 500, start: float | None = None) -> np.ndarray:
    """Log-spaced grid ending at ``horizon``; starts three decades below by default."""
    start = horizon * 1e-3 if start is None else start
    return np.geomspace(start, horizon, n)


def write_curves_csv(path: str | Path, curves: list[CirCurve]) -> None:
    """Write one or more curves; meta keys become extra columns."""
    meta_keys: list[str] = []
    for c in curves:
        for k in c.meta:
            if k not in meta_keys:
                meta_keys.append(k)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "value", "kind", "source", *meta_keys])
        for c in curves:
            extra = [c.meta.get(k, "") for k in meta_keys]
            for t, v in zip(c.times, c.values):
                writer.writerow([repr(float(t)), repr(float(v)), c.kind, c.source, *extra])


def read_curves_csv(path: str | Path) -> list[CirCurve]:
    """Inverse of :func:`write_curves_csv`; rows with equal metadata form one curve."""
    groups: dict[tuple, list] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        meta_keys = [k for k in reader.fieldnames if k not in ("time_s", "value", "kind", "source")]
        for row in reader:
            key = (row["kind"], row["source"], *(row[k] for k in meta_keys))
            groups.setdefault(key, []).append((float(row["time_s"]), float(row["value"])))
    out = []
    for key, rows in groups.items():
        t, v = zip(*rows)
        meta = {k: val for k, val in zip(meta_keys, key[2:]) if val != ""}
        out.append(CirCurve(np.array(t), np.array(v), key[0], key[1], meta))
    return out
