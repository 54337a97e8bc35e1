"""Buffered uniform streams shared by the Python and compiled event loops."""

import numpy as np

DEFAULT_CHUNK = 1 << 18


def replica_generator(master_seed, replica_index):
    """Independent PCG64 generator for one replica.

    The stream depends only on ``(master_seed, replica_index)``, so replicas
    can run in any order or in parallel and still reproduce bit for bit.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(replica_index),))
    return np.random.Generator(np.random.PCG64(seq))


def init_generator(master_seed, replica_index):
    """Generator for random initial conditions, independent of the clock stream."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(replica_index), 1))
    return np.random.Generator(np.random.PCG64(seq))


class ClockStream:
    """Uniforms in [0, 1) handed out from a refillable buffer.

    Kernels read ``buf`` starting at ``pos``; whatever they leave unread is
    kept at the front on the next refill, so the sequence of uniforms seen by
    the simulation never depends on the chunk size.
    """

    def __init__(self, source=0, chunk=DEFAULT_CHUNK):
        if isinstance(source, np.random.Generator):
            self.generator = source
        else:
            self.generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(source)))
        self.chunk = int(chunk)
        self.buf = np.empty(0, dtype=np.float64)
        self.pos = 0

    @classmethod
    def for_replica(cls, master_seed, replica_index, chunk=DEFAULT_CHUNK):
        return cls(replica_generator(master_seed, replica_index), chunk=chunk)

    def refill(self, minimum=2):
        rest = self.buf.shape[0] - self.pos
        size = max(self.chunk, minimum + rest)
        if size != self.buf.shape[0]:
            fresh = np.empty(size)
            fresh[:rest] = self.buf[self.pos:]
            self.buf = fresh
        else:
            self.buf[:rest] = self.buf[self.pos:]
        self.generator.random(out=self.buf[rest:])
        self.pos = 0

    def ensure(self, n):
        if self.buf.shape[0] - self.pos < n:
            self.refill(n)

    def uniforms(self, n):
        self.ensure(n)
        out = self.buf[self.pos:self.pos + n].copy()
        self.pos += n
        return out
