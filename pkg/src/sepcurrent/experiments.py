"""Replica-level experiment protocols.

Every replica draws from its own stream keyed by ``(master_seed, replica)``,
so results do not depend on the number of worker threads or on the order
in which replicas finish. The compiled kernels release the GIL, so a thread
pool gives real parallelism.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .coupling import CoupledPair, MirrorAudit, is_ordered, mirror_audit
from .errors import ConfigError
from .process import (AllOnes, AllZeros, ModelParams, Tally, new_configuration,
                      simulate_until)
from .rng import ClockStream
from .statistics import StationaryEstimate, block_average_l1


@dataclass(frozen=True)
class StationaryProtocol:
    """Burn in from ``init``, then average over ``t_avg`` in equal batches.

    ``init`` is an init spec, or a callable mapping the replica index to one
    (needed for random initial data, which must differ between replicas).
    """

    t_burn: float = 50.0
    t_avg: float = 200.0
    n_batches: int = 20
    snapshot_dt: float = 1.0
    init: object = AllZeros()
    block_exponents: tuple = (0.5,)

    def __post_init__(self):
        if self.t_burn < 0 or not self.t_avg > 0:
            raise ConfigError("need t_burn >= 0 and t_avg > 0")
        if self.n_batches < 1:
            raise ConfigError("n_batches must be >= 1")
        if not self.snapshot_dt > 0:
            raise ConfigError("snapshot_dt must be > 0")


def _init_for(init, replica):
    return init(replica) if callable(init) else init


def _map(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def stationary_replica(params: ModelParams, master_seed: int, replica: int,
                       protocol: StationaryProtocol, tuples=(), reference=None) -> StationaryEstimate:
    """One replica of the stationary protocol.

    ``tuples`` are k-point site tuples in lattice coordinates. Block-average
    L1 distances to ``reference`` are recorded at every snapshot time.
    """
    stream = ClockStream.for_replica(master_seed, replica)
    config = new_configuration(params, _init_for(protocol.init, replica))
    N = params.N
    idx_tuples = [tuple(s + N for s in tup) for tup in tuples]
    tally = Tally(params.n_sites, tuples=idx_tuples)
    simulate_until(config, params, protocol.t_burn, stream, tally=tally)

    B = protocol.n_batches
    batch_len = protocol.t_avg / B
    occ = np.empty((B, params.n_sites))
    tup = np.empty((B, len(idx_tuples)))
    cross = np.empty((B, params.n_bonds), dtype=np.int64)
    durations = np.empty(B)
    l1 = {a: [] for a in protocol.block_exponents}
    t0 = protocol.t_burn
    k = 1
    for b in range(B):
        t_start = t0 + b * batch_len
        t_stop = t0 + (b + 1) * batch_len
        tally.start(config)
        while True:
            snap = t0 + k * protocol.snapshot_dt
            target = min(snap, t_stop)
            simulate_until(config, params, target, stream, tally=tally)
            if snap <= t_stop:
                if reference is not None:
                    for a in protocol.block_exponents:
                        l1[a].append(block_average_l1(config, a, reference))
                k += 1
            if target >= t_stop:
                break
        tally.flush(config)
        durations[b] = t_stop - t_start
        occ[b] = tally.integ / durations[b]
        tup[b] = tally.tint / durations[b]
        cross[b] = tally.crossings
    return StationaryEstimate(N=N, occupation_batches=occ, durations=durations,
                              tuples=[tuple(int(s) for s in t) for t in tuples],
                              tuple_batches=tup, crossing_batches=cross, replicas=1,
                              l1_samples=l1 if reference is not None else {})


def run_stationary(params: ModelParams, replicas: int, master_seed: int,
                   protocol: StationaryProtocol = StationaryProtocol(), tuples=(),
                   reference=None, threads: int = 1) -> StationaryEstimate:
    if replicas < 1:
        raise ConfigError("replicas must be >= 1")
    parts = _map(lambda r: stationary_replica(params, master_seed, r, protocol, tuples, reference),
                 range(replicas), threads)
    return StationaryEstimate.merge(parts)


def run_ensemble(params: ModelParams, replicas: int, master_seed: int, t: float,
                 init=AllZeros(), threads: int = 1) -> np.ndarray:
    """Occupancies of independent replicas at time ``t``, one row each."""
    if replicas < 1:
        raise ConfigError("replicas must be >= 1")

    def one(r):
        config = new_configuration(params, _init_for(init, r))
        simulate_until(config, params, t, ClockStream.for_replica(master_seed, r))
        return config.occ.copy()

    return np.array(_map(one, range(replicas), threads))


@dataclass
class OrderAudit:
    seed: int
    t_end: float
    ordered: bool
    coalesced_at: Optional[float]


def order_audit(params: ModelParams, t_end: float, seed: int, lo_init=AllZeros(),
                hi_init=AllOnes(), check_every: float = 1.0) -> OrderAudit:
    """Coupled run from ``lo_init <= hi_init``; raises OrderViolation on a breach.

    The kernel checks the order at every changed site after every event.
    The first check time at which the two copies agree is reported.
    """
    lo = new_configuration(params, lo_init)
    hi = new_configuration(params, hi_init)
    pair = CoupledPair(lo, hi)
    stream = ClockStream(seed)
    coalesced = None
    t = 0.0
    while t < t_end:
        t = min(t + check_every, t_end)
        pair.run_until(params, t, stream)
        if coalesced is None and np.array_equal(pair.lo.occ, pair.hi.occ):
            coalesced = t
    return OrderAudit(seed, t_end, is_ordered(pair.lo, pair.hi), coalesced)


def mirror_audits(params: ModelParams, t_end: float, seeds: Sequence[int]) -> list:
    return [mirror_audit(params, t_end, ClockStream(s)) for s in seeds]


__all__ = ["StationaryProtocol", "stationary_replica", "run_stationary", "run_ensemble",
           "OrderAudit", "order_audit", "mirror_audits", "MirrorAudit"]
