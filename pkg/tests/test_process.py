import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sepcurrent.errors import ConfigError
from sepcurrent.process import (AllOnes, AllZeros, Configuration, Deterministic, EventKind,
                                EventLog, ModelParams, ProductMeasure, Tally, apply_birth,
                                apply_death, apply_exchange, new_configuration, ph_mirror,
                                simulate_until, step)
from sepcurrent.rng import ClockStream


def config_from_blocks(N, minus=None, plus=None, K=2):
    occ = np.zeros(2 * N + 1, dtype=np.int8)
    if minus is not None:
        occ[:K] = minus
    if plus is not None:
        occ[-K:] = plus
    return Configuration(occ)


class TestModelParams:
    def test_derived(self):
        p = ModelParams(10, 3, 2.0)
        assert p.n_sites == 21 and p.n_bonds == 20
        assert p.hop_rate == 50.0 and p.feed_rate == 10.0
        assert p.plus_block == (8, 10) and p.minus_block == (-10, -8)

    @pytest.mark.parametrize("args", [(0, 1, 1.0), (3, 0, 1.0), (3, 4, 1.0), (3, 1, 0.0),
                                      (3, 1, -1.0), (2.5, 1, 1.0)])
    def test_rejects(self, args):
        with pytest.raises(ConfigError):
            ModelParams(*args)


class TestNewConfiguration:
    def test_all_ones(self):
        c = new_configuration(ModelParams(2, 1, 1.0), AllOnes())
        assert c.occupancy.tolist() == [1, 1, 1, 1, 1]
        assert c.n_active == 0 and c.particle_count == 5

    def test_alternating(self):
        c = new_configuration(ModelParams(2, 1, 1.0), Deterministic([1, 0, 1, 0, 1]))
        assert c.n_active == 4
        assert c.active_bonds.tolist() == [-2, -1, 0, 1]

    def test_product_measure_concentration(self):
        p = ModelParams(1000, 1, 1.0)
        c = new_configuration(p, ProductMeasure(lambda r: 0.5, np.random.default_rng(7)))
        assert abs(c.particle_count - 1000.5) <= 4 * np.sqrt(2001 * 0.25)
        c.check()

    def test_product_measure_profile_range(self):
        p = ModelParams(5, 1, 1.0)
        with pytest.raises(ConfigError):
            new_configuration(p, ProductMeasure(lambda r: r + 1.0, np.random.default_rng(0)))

    def test_length_mismatch(self):
        with pytest.raises(ConfigError):
            new_configuration(ModelParams(2, 1, 1.0), Deterministic([1, 0, 1]))

    def test_string_roundtrip(self):
        c = new_configuration(ModelParams(3, 1, 1.0), Deterministic([0, 1, 1, 0, 1, 0, 0]))
        assert c.to_string() == "0110100"
        assert Configuration.from_string(c.to_string()) == c
        with pytest.raises(ConfigError):
            Configuration.from_string("0120100")


class TestBoundaryMoves:
    p = ModelParams(3, 2, 1.0)

    def test_birth_fills_only_empty(self):
        c = config_from_blocks(3, plus=[0, 1])
        ev = apply_birth(c, self.p)
        assert ev.kind == EventKind.BIRTH and ev.site == 2
        assert c[2] == 1 and c[3] == 1
        c.check()

    def test_birth_rightmost(self):
        c = config_from_blocks(3, plus=[0, 0])
        ev = apply_birth(c, self.p)
        assert ev.site == 3 and c[3] == 1 and c[2] == 0

    def test_birth_aborts_when_full(self):
        c = config_from_blocks(3, plus=[1, 1])
        before = c.to_string()
        ev = apply_birth(c, self.p)
        assert ev.kind == EventKind.BIRTH_ABORTED and c.to_string() == before

    def test_death_only_occupied(self):
        c = config_from_blocks(3, minus=[0, 1])
        ev = apply_death(c, self.p)
        assert ev.kind == EventKind.DEATH and ev.site == -2 and c[-2] == 0

    def test_death_leftmost(self):
        c = config_from_blocks(3, minus=[1, 1])
        ev = apply_death(c, self.p)
        assert ev.site == -3 and c[-3] == 0 and c[-2] == 1
        c.check()

    def test_death_aborts_when_empty(self):
        c = config_from_blocks(3, minus=[0, 0])
        ev = apply_death(c, self.p)
        assert ev.kind == EventKind.DEATH_ABORTED
        assert c.particle_count == 0

    def test_exchange(self):
        c = Configuration([1, 0, 0, 1, 1])
        assert apply_exchange(c, -2) == 1
        assert c.to_string() == "01011"
        assert apply_exchange(c, 1) == 0
        assert apply_exchange(c, 0) == -1
        c.check()


class TestStep:
    def test_all_ones_channels(self):
        p = ModelParams(5, 2, 1.0)
        stream = ClockStream(3)
        kinds = []
        for _ in range(4000):
            c = new_configuration(p, AllOnes())
            kinds.append(step(c, p, stream).kind)
        kinds = np.array([int(k) for k in kinds])
        assert set(kinds) <= {EventKind.BIRTH_ABORTED, EventKind.DEATH}
        frac = np.mean(kinds == EventKind.DEATH)
        assert abs(frac - 0.5) < 4 * np.sqrt(0.25 / 4000)

    def test_mean_holding_time(self):
        p = ModelParams(1, 1, 1.0)
        stream = ClockStream(11)
        dts = [step(Configuration([0, 0, 0]), p, stream).time_increment for _ in range(20000)]
        assert abs(np.mean(dts) - 1.0) < 4 / np.sqrt(20000)

    def test_conservation_per_event(self):
        p = ModelParams(8, 3, 1.5)
        c = new_configuration(p, Deterministic(np.arange(17) % 3 == 0))
        stream = ClockStream(5)
        for _ in range(3000):
            n0 = c.particle_count
            ev = step(c, p, stream)
            delta = {EventKind.EXCHANGE: 0, EventKind.BIRTH: 1, EventKind.DEATH: -1,
                     EventKind.BIRTH_ABORTED: 0, EventKind.DEATH_ABORTED: 0}[ev.kind]
            assert c.particle_count == n0 + delta
            assert ev.time_increment > 0
        c.check()

    def test_exchange_only_on_discrepant_bond(self):
        p = ModelParams(6, 2, 1.0)
        c = new_configuration(p, AllZeros())
        stream = ClockStream(9)
        for _ in range(2000):
            before = c.occ.copy()
            ev = step(c, p, stream)
            if ev.kind == EventKind.EXCHANGE:
                i = ev.site + p.N
                assert before[i] != before[i + 1]


class TestSimulateUntil:
    def test_zero_horizon(self):
        p = ModelParams(4, 1, 1.0)
        c = new_configuration(p, AllZeros())
        calls = []
        simulate_until(c, p, 0.0, ClockStream(1), observers=[lambda *a: calls.append(a)])
        assert calls == [] and c.particle_count == 0 and c.time == 0.0

    def test_relaxes_to_half_filling(self):
        p = ModelParams(50, 1, 1.0)
        for seed in range(12):
            c = new_configuration(p, AllZeros())
            simulate_until(c, p, 100.0, ClockStream(seed))
            assert 0.35 <= c.particle_count / 101 <= 0.65

    def test_reproducible(self):
        p = ModelParams(20, 2, 1.0)
        out = []
        for _ in range(2):
            c = new_configuration(p, AllZeros())
            simulate_until(c, p, 3.0, ClockStream(123))
            out.append(c.to_string())
        assert out[0] == out[1]

    def test_clock_lands_on_horizon(self):
        p = ModelParams(10, 1, 1.0)
        c = new_configuration(p, AllZeros())
        simulate_until(c, p, 0.37, ClockStream(2))
        assert c.time == 0.37
        with pytest.raises(ConfigError):
            simulate_until(c, p, 0.1, ClockStream(2))

    def test_observer_path_matches_fast_path(self):
        p = ModelParams(12, 2, 1.0)
        fast = new_configuration(p, AllZeros())
        ta = Tally(p.n_sites)
        simulate_until(fast, p, 1.5, ClockStream(77), tally=ta)
        slow = new_configuration(p, AllZeros())
        tb = Tally(p.n_sites)
        log = EventLog()
        simulate_until(slow, p, 1.5, ClockStream(77), observers=[log], tally=tb)
        assert fast == slow
        assert np.array_equal(ta.crossings, tb.crossings)
        assert np.array_equal(ta.counts, tb.counts) and len(log.rows) == ta.counts.sum()
        ta.flush(fast)
        tb.flush(slow)
        np.testing.assert_allclose(ta.integ, tb.integ, rtol=1e-12)

    def test_observer_sees_read_only_view(self):
        p = ModelParams(5, 1, 1.0)
        c = new_configuration(p, AllZeros())

        def meddle(t, ev, view):
            with pytest.raises(ValueError):
                view[0] = 1

        simulate_until(c, p, 0.2, ClockStream(4), observers=[meddle])

    def test_event_log_csv(self, tmp_path):
        p = ModelParams(5, 1, 1.0)
        c = new_configuration(p, AllZeros())
        log = EventLog()
        simulate_until(c, p, 0.1, ClockStream(4), observers=[log])
        log.write_csv(tmp_path / "ev.csv")
        lines = (tmp_path / "ev.csv").read_text().splitlines()
        assert lines[0] == "time,kind,site" and len(lines) == len(log.rows) + 1

    def test_event_mix(self):
        """Exchanges dominate; the boundary share matches the rate ratio."""
        p = ModelParams(100, 1, 1.0)
        c = new_configuration(p, AllZeros())
        stream = ClockStream(8)
        simulate_until(c, p, 20.0, stream)
        tally = Tally(p.n_sites, t0=c.time)
        active = []
        for k in range(50):
            simulate_until(c, p, 20.0 + 0.2 * (k + 1), stream, tally=tally)
            active.append(c.n_active)
        frac_exchange = tally.counts[0] / tally.counts.sum()
        exchange_rate = np.mean(active) * p.hop_rate
        expected = exchange_rate / (exchange_rate + 2 * p.feed_rate)
        assert 1 - frac_exchange < 1e-3
        assert abs(frac_exchange - expected) < 5e-5


class TestMirror:
    def test_all_ones(self):
        assert ph_mirror(Configuration(np.ones(7, dtype=np.int8))) == Configuration(np.zeros(7))

    @given(st.lists(st.integers(0, 1), min_size=1, max_size=20))
    def test_involution(self, half):
        bits = np.array(half + [1] + half[::-1][: len(half)])
        c = Configuration(bits)
        assert ph_mirror(ph_mirror(c)) == c


@settings(max_examples=40, deadline=None)
@given(N=st.integers(1, 12), K=st.integers(1, 12), j=st.floats(0.1, 5.0),
       seed=st.integers(0, 2**32 - 1), t=st.floats(0.0, 0.5))
def test_caches_survive_random_runs(N, K, j, seed, t):
    K = min(K, N)
    p = ModelParams(N, K, j)
    rng = np.random.default_rng(seed)
    c = new_configuration(p, ProductMeasure(lambda r: rng.random(), rng))
    simulate_until(c, p, t, ClockStream(seed))
    c.check()
    assert set(np.unique(c.occ)) <= {0, 1}
