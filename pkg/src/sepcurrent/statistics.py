"""Estimators for profiles, k-point moments, chaos defects, currents and block averages.

Stationary estimates are built from time-weighted batch means: the
averaging window of each replica is cut into equal batches, and every batch
contributes the occupation integral divided by its length. Pooling replicas
concatenates their batches, so the pooled mean is exact and only the
standard error is re-estimated.
"""

import csv
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .process import Configuration
from .profile import DensityProfile


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float

    def within(self, target, n_se=3.0) -> bool:
        return abs(self.value - target) <= n_se * self.stderr


def batch_mean_stats(values, durations=None):
    """Weighted mean and batch-means standard error along axis 0.

    With equal weights the error reduces to ``std(values, ddof=1) / sqrt(B)``;
    a single batch gets a standard error of 0.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[0] == 0:
        raise ConfigError("no samples")
    w = np.ones(values.shape[0]) if durations is None else np.asarray(durations, dtype=float)
    total = w.sum()
    shape = (-1,) + (1,) * (values.ndim - 1)
    mean = (w.reshape(shape) * values).sum(0) / total
    b = values.shape[0]
    if b < 2:
        return mean, np.zeros_like(mean)
    dev = w.reshape(shape) * (values - mean)
    se = np.sqrt(b / (b - 1) * (dev * dev).sum(0)) / total
    return mean, se


# --- stationary estimates -----------------------------------------------------

@dataclass
class StationaryEstimate:
    """Batch means of per-site occupations, k-point products and bond crossings.

    ``tuples`` lists k-point site tuples in lattice coordinates x. Row b of
    each ``*_batches`` array belongs to a batch of length ``durations[b]``.
    """

    N: int
    occupation_batches: np.ndarray          # (B, 2N + 1)
    durations: np.ndarray                   # (B,)
    tuples: list = field(default_factory=list)
    tuple_batches: Optional[np.ndarray] = None   # (B, n_tuples)
    crossing_batches: Optional[np.ndarray] = None  # (B, 2N), signed counts
    replicas: int = 1
    l1_samples: dict = field(default_factory=dict)  # a -> list of snapshot distances

    @property
    def x(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    @property
    def n_batches(self) -> int:
        return int(self.durations.shape[0])

    @property
    def elapsed(self) -> float:
        return float(self.durations.sum())

    @property
    def effective_samples(self) -> int:
        return self.n_batches

    def profile_stats(self):
        return batch_mean_stats(self.occupation_batches, self.durations)

    def tuple_index(self, sites) -> int:
        key = tuple(int(s) for s in sites)
        try:
            return self.tuples.index(key)
        except ValueError:
            raise ConfigError(f"moment for sites {key} was not recorded; "
                              f"available: {self.tuples}") from None

    @classmethod
    def merge(cls, parts: Sequence["StationaryEstimate"]) -> "StationaryEstimate":
        parts = list(parts)
        if not parts:
            raise ConfigError("nothing to merge")
        first = parts[0]
        for p in parts[1:]:
            if p.N != first.N or p.tuples != first.tuples:
                raise ConfigError("can only merge estimates with the same N and tuples")

        def cat(name):
            arrays = [getattr(p, name) for p in parts]
            return None if arrays[0] is None else np.concatenate(arrays)

        l1 = {}
        for p in parts:
            for a, vals in p.l1_samples.items():
                l1.setdefault(a, []).extend(vals)
        return cls(N=first.N, occupation_batches=cat("occupation_batches"),
                   durations=cat("durations"), tuples=list(first.tuples),
                   tuple_batches=cat("tuple_batches"), crossing_batches=cat("crossing_batches"),
                   replicas=sum(p.replicas for p in parts), l1_samples=l1)


@dataclass
class CurrentTally:
    """Signed particle crossings of one bond over a stretch of macroscopic time."""

    crossings: int
    elapsed: float
    N: int
    bond: Optional[int] = None  # left end x of the bond (x, x + 1)


def empirical_profile(data, N: Optional[int] = None) -> DensityProfile:
    """Mean occupation per site with batch-means standard errors.

    ``data`` is a :class:`StationaryEstimate`, a :class:`Configuration`, a
    sequence of configurations, or an array of snapshots with one row per
    sample. Snapshot rows are treated as batches.
    """
    if isinstance(data, StationaryEstimate):
        mean, se = data.profile_stats()
        N = data.N
    else:
        snaps = _as_snapshots(data)
        mean, se = batch_mean_stats(snaps)
        N = (snaps.shape[1] - 1) // 2
    x = np.arange(-N, N + 1)
    return DensityProfile(r=x / N, values=mean, stderr=se, x=x, source="empirical")


def _as_snapshots(data) -> np.ndarray:
    if isinstance(data, Configuration):
        return data.occ[None, :].astype(float)
    if isinstance(data, np.ndarray):
        snaps = data
    else:
        data = list(data)
        if not data:
            raise ConfigError("no samples")
        snaps = np.array([d.occ if isinstance(d, Configuration) else d for d in data])
    if snaps.ndim == 1:
        snaps = snaps[None, :]
    if snaps.shape[0] == 0:
        raise ConfigError("no samples")
    if snaps.shape[1] % 2 == 0:
        raise ConfigError("snapshots must have 2N+1 sites")
    return snaps.astype(float)


def _check_distinct(sites):
    sites = [int(s) for s in sites]
    if not sites:
        raise ConfigError("need at least one site")
    if len(set(sites)) != len(sites):
        raise ConfigError(f"sites must be pairwise distinct, got {sites}")
    return sites


def k_point_moment(data, sites) -> Estimate:
    """Average of the product of occupations at distinct sites ``x_1..x_k``."""
    sites = _check_distinct(sites)
    if isinstance(data, StationaryEstimate):
        N = data.N
        _check_range(sites, N)
        if len(sites) == 1:
            mean, se = data.profile_stats()
            i = sites[0] + N
            return Estimate(float(mean[i]), float(se[i]))
        q = data.tuple_index(sites)
        mean, se = batch_mean_stats(data.tuple_batches[:, q], data.durations)
        return Estimate(float(mean), float(se))
    snaps = _as_snapshots(data)
    N = (snaps.shape[1] - 1) // 2
    _check_range(sites, N)
    prod = np.prod(snaps[:, [s + N for s in sites]], axis=1)
    mean, se = batch_mean_stats(prod)
    return Estimate(float(mean), float(se))


def _check_range(sites, N):
    for s in sites:
        if not -N <= s <= N:
            raise ConfigError(f"site {s} outside [-{N}, {N}]")


def chaos_defect(ensemble, sites, n_boot: int = 1000, rng=None) -> Estimate:
    """|E prod eta(x_i) - prod E eta(x_i)| over replicas, bootstrap stderr.

    ``ensemble`` holds one configuration (or occupancy row) per replica, all
    at the same time. Bootstrap resamples replicas with replacement.
    """
    sites = _check_distinct(sites)
    snaps = _as_snapshots(ensemble)
    R = snaps.shape[0]
    if R < 2:
        raise ConfigError("chaos_defect needs at least 2 replicas")
    N = (snaps.shape[1] - 1) // 2
    _check_range(sites, N)
    cols = snaps[:, [s + N for s in sites]]

    def defect(c):
        return abs(np.prod(c, axis=-1).mean(-1) - np.prod(c.mean(-2), axis=-1))

    value = float(defect(cols))
    rng = rng if rng is not None else np.random.default_rng(0)
    idx = rng.integers(0, R, size=(n_boot, R))
    boot = defect(cols[idx])
    return Estimate(value, float(boot.std(ddof=1)))


def bond_current(tally: CurrentTally) -> float:
    """Net rightward crossings per unit macroscopic time, divided by N."""
    if not tally.elapsed > 0:
        raise ConfigError("current tally has no elapsed time")
    return tally.crossings / (tally.elapsed * tally.N)


def current_profile(est: StationaryEstimate):
    """Per-bond current estimates and batch-means stderr (bond left ends x)."""
    if est.crossing_batches is None:
        raise ConfigError("estimate carries no crossing counts")
    rates = est.crossing_batches / (est.durations[:, None] * est.N)
    mean, se = batch_mean_stats(rates, est.durations)
    return np.arange(-est.N, est.N), mean, se


def current_at(est: StationaryEstimate, bond: int) -> Estimate:
    x, mean, se = current_profile(est)
    if not -est.N <= bond < est.N:
        raise ConfigError(f"bond {bond} outside [-{est.N}, {est.N - 1}]")
    return Estimate(float(mean[bond + est.N]), float(se[bond + est.N]))


def current_tally(est: StationaryEstimate, bond: int) -> CurrentTally:
    if est.crossing_batches is None:
        raise ConfigError("estimate carries no crossing counts")
    return CurrentTally(int(est.crossing_batches[:, bond + est.N].sum()), est.elapsed, est.N, bond)


# --- block averages ----------------------------------------------------------------

def block_window(N: int, a: float) -> int:
    if not 0 < a < 1:
        raise ConfigError("block exponent a must lie in (0, 1)")
    ell = int(np.floor(N ** a + 1e-12))
    if ell < 1:
        raise ConfigError(f"window floor(N^a) = {ell} < 1")
    return ell


def block_average(occ, a: float) -> np.ndarray:
    """Mean occupation over ``[x - l, x + l]`` clipped to the lattice, l = floor(N^a)."""
    occ = np.asarray(occ.occ if isinstance(occ, Configuration) else occ, dtype=float)
    n = occ.shape[0]
    N = (n - 1) // 2
    ell = block_window(N, a)
    csum = np.concatenate([[0.0], np.cumsum(occ)])
    i = np.arange(n)
    lo = np.maximum(i - ell, 0)
    hi = np.minimum(i + ell, n - 1)
    return (csum[hi + 1] - csum[lo]) / (hi - lo + 1)


def block_average_l1(config, a: float, reference) -> float:
    """Trapezoid sum over r = x/N of |block average - reference(r)|.

    ``reference`` is a callable profile or an object with a ``profile``
    method such as :class:`macro.StationarySolution`.
    """
    ref = reference.profile if hasattr(reference, "profile") else reference
    blocks = block_average(config, a)
    N = (blocks.shape[0] - 1) // 2
    r = np.arange(-N, N + 1) / N
    dev = np.abs(blocks - np.asarray(ref(r), dtype=float))
    return float((dev.sum() - 0.5 * (dev[0] + dev[-1])) / N)


# --- export ------------------------------------------------------------------------

def write_profile_csv(path, profile: DensityProfile):
    if profile.x is None:
        raise ConfigError("lattice profile needed (x column)")
    profile.to_csv(path)


def write_summary_json(path, summary: dict):
    with open(path, "w") as fh:
        json.dump(jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Estimate):
        return {"value": obj.value, "stderr": obj.stderr}
    return obj


def read_profile_csv(path) -> DensityProfile:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    x = np.array([int(r["x"]) for r in rows])
    return DensityProfile(r=np.array([float(r["r"]) for r in rows]),
                          values=np.array([float(r["mean"]) for r in rows]),
                          stderr=np.array([float(r["stderr"]) for r in rows]), x=x,
                          source="csv")
