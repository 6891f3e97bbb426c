"""Deterministic model of a shared I/O translation cache.

Entries are keyed by (domain, page): every device mapped to the same
domain shares entries, devices in different domains never produce hits
for each other even when accessing equal page numbers.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .errors import ConfigError, UnknownDevice

MAX_PAGE = 1 << 52  # 4 KB pages, 12 offset bits already stripped


class IndexFn(enum.Enum):
    FULLY_ASSOCIATIVE = "fully_associative"
    MODULO_LOW_BITS = "modulo_low_bits"
    XOR_FOLD = "xor_fold"


class Replacement(enum.Enum):
    LRU = "lru"
    FIFO = "fifo"
    TREE_PLRU = "tree_plru"
    RANDOM_SEEDED = "random_seeded"


class Outcome(enum.Enum):
    HIT = "hit"
    MISS = "miss"


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TlbConfig:
    """Organization, replacement policy, and countermeasure knobs.

    Way/set partitions restrict which slots a device may allocate into.
    Partitioned devices that live in different domains must not overlap,
    since overlapping partitions cannot isolate them. Under tree-PLRU
    the shared tree bits only isolate partitions aligned to subtrees
    (e.g. ways 0-3 vs 4-7); the other policies isolate any disjoint
    partition.
    """

    num_sets: int = 1
    ways: int = 118
    index_fn: IndexFn = IndexFn.FULLY_ASSOCIATIVE
    replacement: Replacement = Replacement.LRU
    device_domains: dict[int, int] = field(default_factory=lambda: {0: 0})
    way_partition: Optional[dict[int, frozenset[int]]] = None
    set_partition: Optional[dict[int, frozenset[int]]] = None
    uncacheable_pages: frozenset[tuple[int, int]] = frozenset()
    ats_bypass_devices: frozenset[int] = frozenset()
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_sets < 1:
            raise ConfigError("tlb.num_sets", "must be >= 1")
        if self.ways < 1:
            raise ConfigError("tlb.ways", "must be >= 1")
        if self.index_fn is IndexFn.FULLY_ASSOCIATIVE and self.num_sets != 1:
            raise ConfigError("tlb.num_sets", "fully associative requires num_sets = 1")
        if self.index_fn is IndexFn.XOR_FOLD and not _is_pow2(self.num_sets):
            raise ConfigError("tlb.num_sets", "xor_fold requires a power-of-two set count")
        if not self.device_domains:
            raise ConfigError("tlb.device_domains", "at least one device must be registered")
        self._check_partition("tlb.way_partition", self.way_partition, self.ways)
        self._check_partition("tlb.set_partition", self.set_partition, self.num_sets)
        for dev in self.ats_bypass_devices:
            if dev not in self.device_domains:
                raise ConfigError("tlb.ats_bypass_devices", f"device {dev} is not registered")

    def _check_partition(self, key, partition, bound):
        if partition is None:
            return
        for dev, slots in partition.items():
            if dev not in self.device_domains:
                raise ConfigError(key, f"device {dev} is not registered")
            if not slots:
                raise ConfigError(key, f"device {dev} has an empty partition")
            if any(s < 0 or s >= bound for s in slots):
                raise ConfigError(key, f"device {dev} partition exceeds [0, {bound})")
        devices = sorted(partition)
        for i, a in enumerate(devices):
            for b in devices[i + 1:]:
                if self.device_domains[a] == self.device_domains[b]:
                    continue
                if partition[a] & partition[b]:
                    raise ConfigError(
                        key, f"devices {a} and {b} are in different domains "
                        "but their partitions overlap")

    @property
    def capacity(self) -> int:
        return self.num_sets * self.ways

    def domain_of(self, device: int) -> int:
        try:
            return self.device_domains[device]
        except KeyError:
            raise UnknownDevice(f"device {device} is not registered") from None


class _PlruTree:
    """Binary-tree pseudo-LRU bits for one set.

    The tree is built over the next power of two >= ways; leaves past
    `ways` are never valid victims.
    """

    def __init__(self, ways: int):
        self.ways = ways
        self.leaves = 1
        while self.leaves < ways:
            self.leaves *= 2
        self.bits = [0] * self.leaves  # heap nodes 1..leaves-1 used

    def touch(self, way: int) -> None:
        idx = way + self.leaves
        while idx > 1:
            parent = idx // 2
            # point the bit away from the touched child
            self.bits[parent] = 0 if idx % 2 == 1 else 1
            idx = parent

    def victim(self, allowed) -> int:
        def side_ok(node: int) -> bool:
            lo, hi = self._leaf_range(node)
            return any(w in allowed for w in range(lo, min(hi, self.ways)))

        idx = 1
        while idx < self.leaves:
            left, right = 2 * idx, 2 * idx + 1
            prefer = right if self.bits[idx] else left
            other = left if self.bits[idx] else right
            idx = prefer if side_ok(prefer) else other
        return idx - self.leaves

    def _leaf_range(self, node: int) -> tuple[int, int]:
        lo, hi = node, node + 1
        while lo < self.leaves:
            lo, hi = 2 * lo, 2 * hi
        return lo - self.leaves, hi - self.leaves


class Tlb:
    """Mutable translation-cache state for one TlbConfig.

    Not thread-safe; create one instance per thread of control.
    """

    def __init__(self, config: TlbConfig):
        self.config = config
        self.reset()

    def reset(self) -> None:
        c = self.config
        self._slots: list[list[Optional[tuple[int, int]]]] = [
            [None] * c.ways for _ in range(c.num_sets)]
        self._stamps = [[0] * c.ways for _ in range(c.num_sets)]
        self._where: dict[tuple[int, int], tuple[int, int]] = {}
        self._counter = 0
        self._plru = None
        # victim streams are keyed per (set, device): one device's draws
        # must never perturb another's, or partition isolation breaks
        self._victim_rngs: dict[tuple[int, int], random.Random] = {}
        if c.replacement is Replacement.TREE_PLRU:
            self._plru = [_PlruTree(c.ways) for _ in range(c.num_sets)]

    # -- lookup helpers -------------------------------------------------

    def _index(self, page: int) -> int:
        c = self.config
        if c.index_fn is IndexFn.FULLY_ASSOCIATIVE:
            return 0
        if c.index_fn is IndexFn.MODULO_LOW_BITS:
            return page % c.num_sets
        bits = c.num_sets.bit_length() - 1
        mask = c.num_sets - 1
        return (page & mask) ^ ((page >> bits) & mask)

    def _target_set(self, device: int, page: int) -> int:
        c = self.config
        raw = self._index(page)
        if c.set_partition and device in c.set_partition:
            allowed = sorted(c.set_partition[device])
            return allowed[raw % len(allowed)]
        return raw

    def _allowed_ways(self, device: int):
        c = self.config
        if c.way_partition and device in c.way_partition:
            return sorted(c.way_partition[device])
        return range(c.ways)

    @staticmethod
    def _check_page(page: int) -> None:
        if page < 0 or page >= MAX_PAGE:
            raise ValueError(f"page number {page} outside [0, 2^52)")

    # -- operations ------------------------------------------------------

    def access(self, device: int, page: int) -> Outcome:
        """Translate one page for a device, filling the cache on a miss."""
        c = self.config
        self._check_page(page)
        domain = c.domain_of(device)
        key = (domain, page)
        if key in c.uncacheable_pages:
            return Outcome.MISS
        if device in c.ats_bypass_devices:
            # locally translated requests leave no trace here
            return Outcome.MISS
        loc = self._where.get(key)
        if loc is not None:
            si, wi = loc
            self._counter += 1
            if c.replacement is Replacement.LRU:
                self._stamps[si][wi] = self._counter
            elif c.replacement is Replacement.TREE_PLRU:
                self._plru[si].touch(wi)
            return Outcome.HIT
        self._insert(device, key)
        return Outcome.MISS

    def probe(self, device: int, page: int) -> Outcome:
        """Residency check with no side effects on cache state."""
        c = self.config
        self._check_page(page)
        domain = c.domain_of(device)
        key = (domain, page)
        if key in c.uncacheable_pages or device in c.ats_bypass_devices:
            return Outcome.MISS
        return Outcome.HIT if key in self._where else Outcome.MISS

    def _insert(self, device: int, key: tuple[int, int]) -> None:
        c = self.config
        si = self._target_set(device, key[1])
        slots = self._slots[si]
        allowed = self._allowed_ways(device)
        wi = None
        for w in allowed:
            if slots[w] is None:
                wi = w
                break
        if wi is None:
            wi = self._pick_victim(si, allowed, device)
            del self._where[slots[wi]]
        slots[wi] = key
        self._where[key] = (si, wi)
        self._counter += 1
        self._stamps[si][wi] = self._counter
        if c.replacement is Replacement.TREE_PLRU:
            self._plru[si].touch(wi)

    def _pick_victim(self, si: int, allowed, device: int) -> int:
        c = self.config
        if c.replacement in (Replacement.LRU, Replacement.FIFO):
            stamps = self._stamps[si]
            return min(allowed, key=lambda w: stamps[w])
        if c.replacement is Replacement.TREE_PLRU:
            return self._plru[si].victim(frozenset(allowed))
        rng = self._victim_rngs.get((si, device))
        if rng is None:
            rng = random.Random(f"tlb:{c.rng_seed}:set{si}:dev{device}")
            self._victim_rngs[(si, device)] = rng
        choices = list(allowed)
        return choices[rng.randrange(len(choices))]

    def flush_all(self) -> None:
        """Drop every entry; replacement metadata is cleared with them."""
        for si in range(self.config.num_sets):
            slots = self._slots[si]
            for wi in range(self.config.ways):
                slots[wi] = None
                self._stamps[si][wi] = 0
        self._where.clear()

    def flush_device(self, device: int) -> None:
        """Drop all entries belonging to the device's domain."""
        domain = self.config.domain_of(device)
        doomed = [key for key in self._where if key[0] == domain]
        for key in doomed:
            si, wi = self._where.pop(key)
            self._slots[si][wi] = None
            self._stamps[si][wi] = 0

    def occupancy(self) -> tuple[list[int], int]:
        per_set = [sum(1 for s in slots if s is not None) for slots in self._slots]
        return per_set, sum(per_set)

    def resident_keys(self) -> Iterator[tuple[int, int]]:
        return iter(self._where)

    def is_resident(self, domain: int, page: int) -> bool:
        return (domain, page) in self._where
