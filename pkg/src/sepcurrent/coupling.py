"""Monotone coupling and the particle-hole mirror audit."""

from dataclasses import dataclass

import numpy as np

from . import _kernels as kern
from .errors import ConfigError, MirrorViolation, OrderViolation
from .process import (Configuration, Event, EventKind, ModelParams, apply_birth,
                      apply_death, apply_exchange, _check_params)
from .rng import ClockStream


def is_ordered(lo: Configuration, hi: Configuration) -> bool:
    return bool(np.all(lo.occ <= hi.occ))


def _stack(a: Configuration, b: Configuration):
    return (np.stack([a.occ, b.occ]), np.stack([a.act, b.act]),
            np.stack([a.pos, b.pos]), np.stack([a.meta, b.meta]))


def _unstack(arrays, a: Configuration, b: Configuration):
    occ2, act2, pos2, meta2 = arrays
    for row, cfg in enumerate((a, b)):
        cfg.occ[:] = occ2[row]
        cfg.act[:] = act2[row]
        cfg.pos[:] = pos2[row]
        cfg.meta[:] = meta2[row]


class CoupledPair:
    """Two configurations ``lo <= hi`` driven by shared clocks."""

    def __init__(self, lo: Configuration, hi: Configuration):
        if lo.N != hi.N:
            raise ConfigError("coupled configurations must have the same size")
        if not is_ordered(lo, hi):
            raise ConfigError("coupling requires lo <= hi sitewise")
        self.lo = lo
        self.hi = hi
        n_bonds = 2 * lo.N
        self.act = np.zeros(n_bonds, dtype=np.int64)
        self.pos = np.full(n_bonds, -1, dtype=np.int64)
        self.meta = np.zeros(2, dtype=np.int64)
        for b in np.flatnonzero((lo.pos >= 0) | (hi.pos >= 0)):
            kern.bond_insert(self.act, self.pos, self.meta, b)
        self.time = max(lo.time, hi.time)

    @property
    def n_union(self) -> int:
        return int(self.meta[0])

    def _advance(self, params, t_end, stream, max_events, info):
        lo, hi = self.lo, self.hi
        arrays = _stack(lo, hi)
        try:
            while True:
                stream.ensure(2)
                status, t, ib = kern.coupled_run(
                    *arrays, self.act, self.pos, self.meta, params.N, params.K, params.j,
                    stream.buf, stream.pos, self.time, float(t_end), int(max_events), info)
                stream.pos = ib
                self.time = lo.time = hi.time = t
                if status == kern.ORDER_VIOLATION:
                    raise OrderViolation(f"lo <= hi broken at t={t:.6g}")
                if status != kern.NEED_UNIFORMS:
                    return status
        finally:
            _unstack(arrays, lo, hi)

    def run_until(self, params: ModelParams, t_end: float, stream: ClockStream):
        _check_params(self.lo, params)
        self._advance(params, t_end, stream, np.iinfo(np.int64).max, np.zeros(5))
        if not is_ordered(self.lo, self.hi):
            raise OrderViolation("final configurations are not ordered")
        return self


def coupled_step(lo: Configuration, hi: Configuration, params: ModelParams,
                 stream: ClockStream, pair: CoupledPair = None):
    """One jointly clocked transition of an ordered pair; returns both events.

    Building the union bond index costs O(N); pass a persistent
    :class:`CoupledPair` to avoid that when stepping repeatedly.
    """
    pair = pair if pair is not None else CoupledPair(lo, hi)
    _check_params(lo, params)
    info = np.zeros(5)
    pair._advance(params, np.inf, stream, 1, info)
    if not is_ordered(pair.lo, pair.hi):
        raise OrderViolation("lo <= hi broken after coupled step")
    events = []
    for kind, site in ((info[0], info[1]), (info[2], info[3])):
        kind = EventKind(int(kind))
        aborted = kind in (EventKind.BIRTH_ABORTED, EventKind.DEATH_ABORTED)
        events.append(Event(kind, float(info[4]), None if aborted else int(site) - params.N))
    return tuple(events)


# --- particle-hole mirror ---------------------------------------------------

# Harris-construction labels: ("birth",), ("death",) or ("bond", x)


def mirror_label(label, N):
    if label[0] == "birth":
        return ("death",)
    if label[0] == "death":
        return ("birth",)
    x = label[1]
    return ("bond", -x - 1)


def harris_labels(params: ModelParams, t_end: float, stream: ClockStream):
    """Clock stream where every bond carries its own rate-N^2/2 clock.

    Yields ``(time, label)``; same law as :func:`process.step` (exchange
    clocks on non-discrepant bonds are null events).
    """
    hop, feed = params.hop_rate, params.feed_rate
    rate = params.n_bonds * hop + 2 * feed
    t = 0.0
    while True:
        u_time, u_pick = stream.uniforms(2)
        t += -np.log(1.0 - u_time) / rate
        if t > t_end:
            return
        v = u_pick * rate
        if v < feed:
            yield t, ("birth",)
        elif v < 2 * feed:
            yield t, ("death",)
        else:
            k = min(int((v - 2 * feed) / hop), params.n_bonds - 1)
            yield t, ("bond", k - params.N)


def apply_label(config: Configuration, label, params: ModelParams):
    if label[0] == "birth":
        return apply_birth(config, params)
    if label[0] == "death":
        return apply_death(config, params)
    return apply_exchange(config, label[1])


@dataclass
class MirrorAudit:
    events: int
    site_checks: int
    ok: bool


def mirror_audit(params: ModelParams, t_end: float, stream: ClockStream,
                 start: Configuration = None) -> MirrorAudit:
    """Run ``start`` (default all ones) and its mirror under mirrored clocks.

    Checks ``eta(x, t) = 1 - zeta(-x, t)`` at every event; raises
    :class:`MirrorViolation` on the first failure.
    """
    a = start.copy() if start is not None else Configuration(np.ones(params.n_sites, dtype=np.int8))
    b = Configuration(1 - a.occ[::-1])
    arrays = _stack(a, b)
    checks = np.zeros(2, dtype=np.int64)
    t = 0.0
    while True:
        stream.ensure(2)
        status, t, ib = kern.mirror_run(*arrays, params.N, params.K, params.j,
                                        stream.buf, stream.pos, t, float(t_end), checks)
        stream.pos = ib
        if status == kern.MIRROR_VIOLATION:
            raise MirrorViolation(f"particle-hole identity broken at t={t:.6g}")
        if status == kern.DONE:
            break
    _unstack(arrays, a, b)
    a.check()
    b.check()
    if not np.array_equal(a.occ, 1 - b.occ[::-1]):
        raise MirrorViolation("final configurations are not mirror images")
    return MirrorAudit(int(checks[0]), int(checks[1]), True)
