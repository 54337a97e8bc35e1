"""Density profiles shared by the solvers and the particle estimators."""

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class DensityProfile:
    """A density sampled at points ``r`` of [-1, 1].

    Profiles measured on the lattice also carry the integer sites ``x`` and
    per-site standard errors.
    """

    r: np.ndarray
    values: np.ndarray
    stderr: Optional[np.ndarray] = None
    t: Optional[float] = None
    source: str = ""
    x: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.r.shape != self.values.shape:
            raise ValueError("r and values must have the same shape")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)

    def __len__(self):
        return self.values.shape[0]

    def sup_distance(self, other) -> float:
        """Sup-norm distance to another profile on the same points, or to a callable."""
        ref = other(self.r) if callable(other) else np.asarray(getattr(other, "values", other))
        return float(np.max(np.abs(self.values - ref)))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            if self.x is not None:
                writer.writerow(["x", "r", "mean", "stderr"])
                se = self.stderr if self.stderr is not None else np.zeros_like(self.values)
                for row in zip(self.x, self.r, self.values, se):
                    writer.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
            else:
                writer.writerow(["r", "value"])
                for r, v in zip(self.r, self.values):
                    writer.writerow([repr(float(r)), repr(float(v))])
