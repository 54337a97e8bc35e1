"""Exact continuous-time simulation of the exclusion process with current reservoirs.

Sites are ``x in [-N, N]``. Each discrepant bond exchanges at rate ``N**2/2``;
a birth clock of rate ``N*j/2`` fills the rightmost empty site of
``I+ = [N-K+1, N]`` and a death clock of the same rate empties the leftmost
occupied site of ``I- = [-N, -N+K-1]``. A clock that finds its block full
(birth) or empty (death) fires an aborted event. Time is macroscopic.
"""

import csv
import enum
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels as kern
from .errors import ConfigError, InvariantViolation
from .rng import ClockStream


@dataclass(frozen=True)
class ModelParams:
    N: int
    K: int
    j: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError(f"N must be a positive integer, got {self.N!r}")
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError(f"K must be a positive integer, got {self.K!r}")
        if self.K > self.N:
            raise ConfigError(f"K={self.K} > N={self.N}: boundary blocks would overlap")
        if not self.j > 0:
            raise ConfigError(f"j must be positive, got {self.j!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "j", float(self.j))

    @property
    def n_sites(self) -> int:
        return 2 * self.N + 1

    @property
    def n_bonds(self) -> int:
        return 2 * self.N

    @property
    def hop_rate(self) -> float:
        return 0.5 * self.N ** 2

    @property
    def feed_rate(self) -> float:
        """Rate of each boundary channel."""
        return 0.5 * self.N * self.j

    @property
    def plus_block(self) -> tuple:
        return (self.N - self.K + 1, self.N)

    @property
    def minus_block(self) -> tuple:
        return (-self.N, -self.N + self.K - 1)

    def sites(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)


class EventKind(enum.IntEnum):
    EXCHANGE = kern.EXCHANGE
    BIRTH = kern.BIRTH
    DEATH = kern.DEATH
    BIRTH_ABORTED = kern.BIRTH_ABORTED
    DEATH_ABORTED = kern.DEATH_ABORTED


@dataclass(frozen=True)
class Event:
    kind: EventKind
    time_increment: float
    site: Optional[int] = None  # x of the changed site, or left end of the exchanged bond


# --- initial conditions -----------------------------------------------------


@dataclass(frozen=True)
class AllOnes:
    pass


@dataclass(frozen=True)
class AllZeros:
    pass


@dataclass(frozen=True)
class Deterministic:
    bits: Sequence[int]


@dataclass(frozen=True)
class ProductMeasure:
    """Independent sites, ``x`` occupied with probability ``profile(x / N)``."""

    profile: Callable
    rng: np.random.Generator


class Configuration:
    """Occupancy of the lattice plus the cached discrepant-bond index."""

    def __init__(self, occupancy, time=0.0):
        occ = np.asarray(occupancy)
        if occ.ndim != 1 or occ.shape[0] < 3 or occ.shape[0] % 2 == 0:
            raise ConfigError("occupancy must be a 1-d array of odd length 2N+1 >= 3")
        if not np.all((occ == 0) | (occ == 1)):
            raise ConfigError("occupancy values must be 0 or 1")
        self.occ = np.ascontiguousarray(occ, dtype=np.int8).copy()
        self.N = (self.occ.shape[0] - 1) // 2
        self.act = np.zeros(2 * self.N, dtype=np.int64)
        self.pos = np.full(2 * self.N, -1, dtype=np.int64)
        self.meta = np.zeros(2, dtype=np.int64)
        self.time = float(time)
        kern.rebuild_bonds(self.occ, self.act, self.pos, self.meta)

    @property
    def occupancy(self) -> np.ndarray:
        view = self.occ.view()
        view.flags.writeable = False
        return view

    @property
    def particle_count(self) -> int:
        return int(self.meta[1])

    @property
    def n_active(self) -> int:
        return int(self.meta[0])

    @property
    def active_bonds(self) -> np.ndarray:
        """Left ends x of the discrepant bonds (x, x+1), sorted."""
        return np.sort(self.act[: self.meta[0]]) - self.N

    def __getitem__(self, x):
        return int(self.occ[x + self.N])

    def __eq__(self, other):
        return isinstance(other, Configuration) and np.array_equal(self.occ, other.occ)

    def __repr__(self):
        return f"Configuration(N={self.N}, t={self.time:g}, {self.to_string()[:40]})"

    def copy(self) -> "Configuration":
        out = Configuration.__new__(Configuration)
        out.occ = self.occ.copy()
        out.N = self.N
        out.act = self.act.copy()
        out.pos = self.pos.copy()
        out.meta = self.meta.copy()
        out.time = self.time
        return out

    def check(self):
        """Rebuild the caches from scratch and compare (debug aid)."""
        expected = np.flatnonzero(self.occ[:-1] != self.occ[1:])
        listed = np.sort(self.act[: self.meta[0]])
        if not np.array_equal(expected, listed):
            raise InvariantViolation("active-bond cache out of sync with occupancy")
        if np.any(self.pos[listed] < 0) or np.count_nonzero(self.pos >= 0) != listed.size:
            raise InvariantViolation("active-bond position index corrupted")
        if int(self.occ.sum()) != self.meta[1]:
            raise InvariantViolation("particle count cache out of sync")

    def to_string(self) -> str:
        return "".join("1" if v else "0" for v in self.occ)

    @classmethod
    def from_string(cls, text: str, params: Optional[ModelParams] = None) -> "Configuration":
        text = text.strip()
        if set(text) - {"0", "1"}:
            raise ConfigError("configuration string may only contain 0 and 1")
        occ = np.frombuffer(text.encode(), dtype=np.uint8) - ord("0")
        if params is not None and occ.shape[0] != params.n_sites:
            raise ConfigError(f"expected {params.n_sites} sites, got {occ.shape[0]}")
        return cls(occ)


def new_configuration(params: ModelParams, init) -> Configuration:
    n = params.n_sites
    if isinstance(init, AllOnes):
        return Configuration(np.ones(n, dtype=np.int8))
    if isinstance(init, AllZeros):
        return Configuration(np.zeros(n, dtype=np.int8))
    if isinstance(init, Deterministic):
        bits = np.asarray(init.bits)
        if bits.shape != (n,):
            raise ConfigError(f"deterministic init needs {n} bits, got shape {bits.shape}")
        return Configuration(bits)
    if isinstance(init, ProductMeasure):
        r = params.sites() / params.N
        p = np.asarray(init.profile(r), dtype=float) * np.ones(n)
        if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
            raise ConfigError("initial profile must take values in [0, 1]")
        return Configuration((init.rng.random(n) < p).astype(np.int8))
    raise ConfigError(f"unknown init spec {init!r}")


def ph_mirror(config: Configuration, params: Optional[ModelParams] = None) -> Configuration:
    """Particle-hole mirror image: x -> 1 - occupancy(-x)."""
    return Configuration(1 - config.occ[::-1], time=config.time)


# --- tallies ----------------------------------------------------------------


class Tally:
    """Time-weighted occupation integrals, bond crossings and k-point products.

    Integrals are maintained lazily by the kernels (updated when a site
    flips); call :meth:`flush` before reading them.
    """

    def __init__(self, n_sites, tuples=(), t0=0.0):
        self.n_sites = n_sites
        self.integ = np.zeros(n_sites)
        self.last = np.full(n_sites, float(t0))
        self.crossings = np.zeros(n_sites - 1, dtype=np.int64)
        self.counts = np.zeros(5, dtype=np.int64)
        self.t0 = float(t0)
        tuples = [tuple(int(s) for s in tup) for tup in tuples]
        if tuples:
            kmax = max(len(tup) for tup in tuples)
            self.tup = np.full((len(tuples), kmax), -1, dtype=np.int64)
            for q, tup in enumerate(tuples):
                self.tup[q, : len(tup)] = tup
            self.tval = np.zeros(len(tuples), dtype=np.int64)
            self.tint = np.zeros(len(tuples))
            self.tlast = np.full(len(tuples), float(t0))
            self.tflag = np.zeros(n_sites, dtype=np.int8)
            self.tflag[self.tup[self.tup >= 0]] = 1
        else:
            self.tup, self.tval, self.tint, self.tlast, self.tflag = kern.empty_tuples(n_sites)
        self.tuples = tuples

    def start(self, config: Configuration):
        """Reset all accumulators to begin at the configuration's current time."""
        t = config.time
        self.integ[:] = 0.0
        self.last[:] = t
        self.crossings[:] = 0
        self.counts[:] = 0
        self.tint[:] = 0.0
        self.tlast[:] = t
        for q, tup in enumerate(self.tuples):
            self.tval[q] = int(np.prod(config.occ[list(tup)]))
        self.t0 = t

    def flush(self, config: Configuration):
        kern.flush_tally(config.occ, config.time, self.integ, self.last, self.tval,
                         self.tint, self.tlast)

    def elapsed(self, config: Configuration) -> float:
        return config.time - self.t0


def _run(config, params, t_end, stream, tally, max_events, info):
    while True:
        stream.ensure(2)
        status, t, ib = kern.run_until(
            config.occ, config.act, config.pos, config.meta,
            params.N, params.K, params.j,
            stream.buf, stream.pos, config.time, float(t_end), int(max_events),
            tally.integ, tally.last, tally.crossings,
            tally.tup, tally.tval, tally.tint, tally.tlast, tally.tflag,
            tally.counts, info,
        )
        config.time = t
        stream.pos = ib
        if status != kern.NEED_UNIFORMS:
            return status


def _event_from_info(info, N) -> Event:
    kind = EventKind(int(info[0]))
    site = None if kind in (EventKind.BIRTH_ABORTED, EventKind.DEATH_ABORTED) else int(info[1]) - N
    return Event(kind, float(info[2]), site)


def _check_params(config, params):
    if config.N != params.N:
        raise ConfigError(f"configuration has N={config.N}, params have N={params.N}")


def step(config: Configuration, params: ModelParams, stream: ClockStream,
         tally: Optional[Tally] = None) -> Event:
    """Apply one exact transition (no horizon)."""
    _check_params(config, params)
    tally = tally if tally is not None else Tally(params.n_sites, t0=config.time)
    info = np.zeros(3)
    _run(config, params, np.inf, stream, tally, 1, info)
    return _event_from_info(info, params.N)


def simulate_until(config: Configuration, params: ModelParams, t_end: float,
                   stream: ClockStream, observers=(), tally: Optional[Tally] = None) -> Configuration:
    """Run the chain in place up to absolute macroscopic time ``t_end``.

    The event that would overshoot ``t_end`` is discarded and the clock set
    to ``t_end`` exactly. Observers are called as ``obs(time, event, view)``
    after each applied event; they receive a read-only occupancy view.
    """
    _check_params(config, params)
    if t_end < config.time:
        raise ConfigError(f"t_end={t_end} is before the current time {config.time}")
    tally = tally if tally is not None else Tally(params.n_sites, t0=config.time)
    info = np.zeros(3)
    if not observers:
        _run(config, params, t_end, stream, tally, np.iinfo(np.int64).max, info)
        return config
    view = config.occupancy
    while _run(config, params, t_end, stream, tally, 1, info) == kern.EVENT_LIMIT:
        event = _event_from_info(info, params.N)
        for obs in observers:
            obs(config.time, event, view)
    return config


def apply_birth(config: Configuration, params: ModelParams) -> Event:
    _check_params(config, params)
    i = kern.birth(config.occ, config.act, config.pos, config.meta, params.K)
    if i < 0:
        return Event(EventKind.BIRTH_ABORTED, 0.0)
    return Event(EventKind.BIRTH, 0.0, i - params.N)


def apply_death(config: Configuration, params: ModelParams) -> Event:
    _check_params(config, params)
    i = kern.death(config.occ, config.act, config.pos, config.meta, params.K)
    if i < 0:
        return Event(EventKind.DEATH_ABORTED, 0.0)
    return Event(EventKind.DEATH, 0.0, i - params.N)


def apply_exchange(config: Configuration, x: int) -> int:
    """Swap sites x, x+1; returns the particle's displacement (+1, -1 or 0)."""
    return int(kern.exchange(config.occ, config.act, config.pos, config.meta, x + config.N))


class EventLog:
    """Observer recording ``time,kind,site`` rows."""

    def __init__(self):
        self.rows = []

    def __call__(self, time, event, view):
        self.rows.append((time, event.kind.name.lower(), "" if event.site is None else event.site))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "kind", "site"])
            for time, kind, site in self.rows:
                writer.writerow([repr(float(time)), kind, site])
