"""Cache model tests, including oracle equivalence against a naive
ordered-list reference implementation."""

import random

import pytest

from reference_models import ListTlb

from iotlbsim.errors import ConfigError, UnknownDevice
from iotlbsim.tlb import (MAX_PAGE, IndexFn, Outcome, Replacement, Tlb,
                          TlbConfig)


def fa_config(ways, replacement=Replacement.LRU, **kw):
    kw.setdefault("device_domains", {0: 0})
    return TlbConfig(num_sets=1, ways=ways, index_fn=IndexFn.FULLY_ASSOCIATIVE,
                     replacement=replacement, **kw)


# -- spec examples -----------------------------------------------------------


def test_cold_miss_inserts():
    tlb = Tlb(fa_config(4))
    assert tlb.access(0, 7) is Outcome.MISS
    assert tlb.occupancy()[1] == 1


def test_residency_hit():
    tlb = Tlb(fa_config(4))
    tlb.access(0, 7)
    assert tlb.access(0, 7) is Outcome.HIT


def test_lru_hand_trace():
    # ways=2: a, b, c evicts a; a misses again
    tlb = Tlb(fa_config(2))
    assert tlb.access(0, 1) is Outcome.MISS
    assert tlb.access(0, 2) is Outcome.MISS
    assert tlb.access(0, 3) is Outcome.MISS
    assert tlb.access(0, 1) is Outcome.MISS


def test_unknown_device():
    tlb = Tlb(fa_config(2))
    with pytest.raises(UnknownDevice):
        tlb.access(9, 1)
    with pytest.raises(UnknownDevice):
        tlb.probe(9, 1)


def test_page_bound():
    tlb = Tlb(fa_config(2))
    tlb.access(0, MAX_PAGE - 1)
    with pytest.raises(ValueError):
        tlb.access(0, MAX_PAGE)
    with pytest.raises(ValueError):
        tlb.access(0, -1)


def test_flush_all():
    tlb = Tlb(fa_config(4))
    for p in range(3):
        tlb.access(0, p)
    tlb.flush_all()
    assert tlb.occupancy() == ([0], 0)
    assert tlb.access(0, 0) is Outcome.MISS
    tlb.flush_all()
    tlb.flush_all()  # idempotent
    assert tlb.occupancy() == ([0], 0)


def test_flush_device():
    cfg = fa_config(8, device_domains={0: 0, 1: 1})
    tlb = Tlb(cfg)
    tlb.access(0, 1)
    tlb.access(0, 2)
    tlb.access(1, 3)
    tlb.flush_device(0)
    assert not tlb.is_resident(0, 1)
    assert not tlb.is_resident(0, 2)
    assert tlb.is_resident(1, 3)
    with pytest.raises(UnknownDevice):
        tlb.flush_device(5)


def test_flush_device_empty_noop():
    tlb = Tlb(fa_config(4))
    tlb.flush_device(0)
    assert tlb.occupancy()[1] == 0


def test_flush_device_shared_domain():
    # two devices in one domain: flushing either clears the shared entries
    cfg = fa_config(8, device_domains={0: 7, 1: 7})
    tlb = Tlb(cfg)
    tlb.access(0, 1)
    tlb.access(1, 2)
    tlb.flush_device(1)
    assert tlb.occupancy()[1] == 0


def test_shared_domain_shares_entries():
    cfg = fa_config(8, device_domains={0: 7, 1: 7})
    tlb = Tlb(cfg)
    assert tlb.access(0, 42) is Outcome.MISS
    assert tlb.access(1, 42) is Outcome.HIT


def test_occupancy_counts():
    tlb = Tlb(fa_config(4))
    assert tlb.occupancy() == ([0], 0)
    for p in range(3):
        tlb.access(0, p)
    assert tlb.occupancy() == ([3], 3)


@pytest.mark.parametrize("replacement", list(Replacement))
def test_occupancy_capped_at_capacity(replacement):
    tlb = Tlb(fa_config(4, replacement=replacement))
    for p in range(5):
        tlb.access(0, p)
    assert tlb.occupancy()[1] == 4


# -- oracle equivalence -------------------------------------------------------


@pytest.mark.parametrize("policy,replacement", [("lru", Replacement.LRU),
                                                ("fifo", Replacement.FIFO)])
@pytest.mark.parametrize("ways", [1, 3, 16])
def test_oracle_equivalence_sampled(policy, replacement, ways):
    for seed in range(10):
        rng = random.Random(seed)
        tlb = Tlb(fa_config(ways, replacement=replacement))
        ref = ListTlb(ways, policy)
        for _ in range(2000):
            page = rng.randrange(4 * ways)
            got = tlb.access(0, page)
            want = ref.access((0, page))
            assert got.value == want


def test_invariants_random_traces():
    # occupancy bound and key uniqueness hold under every policy and shape
    for replacement in Replacement:
        for num_sets, ways in ((1, 6), (4, 2), (8, 1)):
            index = IndexFn.FULLY_ASSOCIATIVE if num_sets == 1 else IndexFn.MODULO_LOW_BITS
            cfg = TlbConfig(num_sets=num_sets, ways=ways, index_fn=index,
                            replacement=replacement,
                            device_domains={0: 0, 1: 1}, rng_seed=3)
            tlb = Tlb(cfg)
            rng = random.Random(replacement.value + str(num_sets))
            for step in range(3000):
                dev = rng.choice((0, 1))
                verb = rng.random()
                if verb < 0.9:
                    tlb.access(dev, rng.randrange(64))
                elif verb < 0.95:
                    tlb.probe(dev, rng.randrange(64))
                else:
                    tlb.flush_device(dev)
                per_set, total = tlb.occupancy()
                assert total <= cfg.capacity
                assert all(c <= cfg.ways for c in per_set)
                keys = list(tlb.resident_keys())
                assert len(keys) == len(set(keys)) == total


# -- countermeasures -----------------------------------------------------------


def test_uncacheable_never_hits_never_fills():
    cfg = fa_config(4, uncacheable_pages=frozenset({(0, 5)}))
    tlb = Tlb(cfg)
    for _ in range(3):
        assert tlb.access(0, 5) is Outcome.MISS
    assert tlb.occupancy()[1] == 0
    assert tlb.probe(0, 5) is Outcome.MISS


def test_ats_bypass_leaves_no_trace():
    cfg = fa_config(4, device_domains={0: 0, 1: 1},
                    ats_bypass_devices=frozenset({1}))
    tlb = Tlb(cfg)
    tlb.access(0, 1)
    before = (tlb.occupancy(), sorted(tlb.resident_keys()))
    for p in range(10):
        assert tlb.access(1, p) is Outcome.MISS
    assert (tlb.occupancy(), sorted(tlb.resident_keys())) == before


def _outcomes(tlb, dev, pages):
    return [tlb.access(dev, p) for p in pages]


def test_way_partition_isolation():
    # B's hit/miss sequence is identical with and without A's activity
    base = dict(num_sets=1, ways=8, index_fn=IndexFn.FULLY_ASSOCIATIVE,
                device_domains={0: 0, 1: 1},
                way_partition={0: frozenset(range(0, 4)),
                               1: frozenset(range(4, 8))})
    for replacement in Replacement:
        cfg = TlbConfig(replacement=replacement, rng_seed=11, **base)
        rng = random.Random(17)
        b_trace = [rng.randrange(16) for _ in range(400)]
        a_trace = [rng.randrange(16) for _ in range(400)]

        solo = Tlb(cfg)
        expected = _outcomes(solo, 1, b_trace)

        mixed = Tlb(cfg)
        got = []
        for i, page in enumerate(b_trace):
            mixed.access(0, a_trace[i])
            got.append(mixed.access(1, page))
        assert got == expected, replacement


def test_set_partition_isolation():
    cfg = TlbConfig(num_sets=8, ways=2, index_fn=IndexFn.MODULO_LOW_BITS,
                    replacement=Replacement.LRU,
                    device_domains={0: 0, 1: 1},
                    set_partition={0: frozenset(range(0, 4)),
                                   1: frozenset(range(4, 8))})
    rng = random.Random(23)
    b_trace = [rng.randrange(64) for _ in range(500)]
    a_trace = [rng.randrange(64) for _ in range(500)]
    solo = Tlb(cfg)
    expected = _outcomes(solo, 1, b_trace)
    mixed = Tlb(cfg)
    got = []
    for i, page in enumerate(b_trace):
        mixed.access(0, a_trace[i])
        got.append(mixed.access(1, page))
    assert got == expected


def test_determinism_same_seed_same_outcomes():
    cfg = fa_config(6, replacement=Replacement.RANDOM_SEEDED, rng_seed=99)
    rng = random.Random(5)
    trace = [rng.randrange(30) for _ in range(2000)]
    a = [Tlb(cfg).access(0, p) for p in trace]  # noqa: F841 (fresh instance each)
    t1, t2 = Tlb(cfg), Tlb(cfg)
    assert [t1.access(0, p) for p in trace] == [t2.access(0, p) for p in trace]


# -- PLRU cross-check against an independent tree -------------------------------


class RefPlru:
    """Recursive pseudo-LRU over a power-of-two way count."""

    def __init__(self, ways):
        self.ways = ways
        self.bits = {}

    def _victim(self, lo, hi):
        if hi - lo == 1:
            return lo
        mid = (lo + hi) // 2
        if self.bits.get((lo, hi), 0) == 0:
            return self._victim(lo, mid)
        return self._victim(mid, hi)

    def victim(self):
        return self._victim(0, self.ways)

    def touch(self, way):
        lo, hi = 0, self.ways
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if way < mid:
                self.bits[(lo, hi)] = 1  # point away, to the right half
                hi = mid
            else:
                self.bits[(lo, hi)] = 0
                lo = mid


@pytest.mark.parametrize("ways", [2, 4, 8])
def test_plru_matches_reference(ways):
    cfg = fa_config(ways, replacement=Replacement.TREE_PLRU)
    tlb = Tlb(cfg)
    ref = RefPlru(ways)
    ref_slots = {}
    rng = random.Random(ways)
    for step in range(2000):
        page = rng.randrange(3 * ways)
        expected = "hit" if page in ref_slots.values() else "miss"
        if expected == "hit":
            way = next(w for w, p in ref_slots.items() if p == page)
        elif len(ref_slots) < ways:
            way = len(ref_slots)
        else:
            way = ref.victim()
        ref_slots[way] = page
        ref.touch(way)
        assert tlb.access(0, page).value == expected, step


# -- construction validation -----------------------------------------------------


def test_degenerate_configs_rejected():
    with pytest.raises(ConfigError):
        TlbConfig(num_sets=0, ways=4)
    with pytest.raises(ConfigError):
        TlbConfig(num_sets=1, ways=0)
    with pytest.raises(ConfigError):
        TlbConfig(num_sets=4, ways=1)  # fully associative needs num_sets=1
    with pytest.raises(ConfigError):
        TlbConfig(num_sets=3, ways=1, index_fn=IndexFn.XOR_FOLD)


def test_partition_validation():
    with pytest.raises(ConfigError):
        fa_config(4, way_partition={0: frozenset({4})})
    with pytest.raises(ConfigError):
        fa_config(4, way_partition={0: frozenset()})
    with pytest.raises(ConfigError):
        fa_config(4, way_partition={9: frozenset({0})})
    # cross-domain overlap is rejected, same-domain overlap is fine
    with pytest.raises(ConfigError):
        fa_config(4, device_domains={0: 0, 1: 1},
                  way_partition={0: frozenset({0, 1}), 1: frozenset({1, 2})})
    fa_config(4, device_domains={0: 7, 1: 7},
              way_partition={0: frozenset({0, 1}), 1: frozenset({1, 2})})


def test_xor_fold_indexing():
    cfg = TlbConfig(num_sets=4, ways=1, index_fn=IndexFn.XOR_FOLD,
                    replacement=Replacement.LRU)
    tlb = Tlb(cfg)
    # pages 0b0101 and 0b0000: low bits 01^01=00 vs 00^00=00 share a set
    tlb.access(0, 0b0101)
    assert tlb.access(0, 0b0000) is Outcome.MISS
    assert not tlb.is_resident(0, 0b0101)  # evicted, 1 way per set
