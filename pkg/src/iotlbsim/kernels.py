"""Compiled fast path for high-volume eviction testing.

Eviction-set construction on the 118-entry profiles runs hundreds of
millions of simulated accesses; this module keeps that workload in a
numba kernel over dense page ids. It only covers fully associative
configurations with LRU, FIFO, or seeded-random replacement and no
countermeasure features; everything else goes through the general
`Tlb` model. Cross-checked against `Tlb` in the test suite.
"""

from __future__ import annotations

import numpy as np
from numba import njit

POLICY_LRU = 0
POLICY_FIFO = 1
POLICY_RANDOM = 2

_U64 = np.uint64
_ADD = _U64(0x9E3779B97F4A7C15)
_M1 = _U64(0xBF58476D1CE4E5B9)
_M2 = _U64(0x94D049BB133111EB)


@njit(cache=True, inline="always")
def _mix(state):
    """splitmix64 step; state stays in a register at the call site."""
    state = state + _ADD
    z = state
    z = (z ^ (z >> _U64(30))) * _M1
    z = (z ^ (z >> _U64(27))) * _M2
    return state, z ^ (z >> _U64(31))


@njit(cache=True, nogil=True)
def _run_trials(slot_page, page_slot, stamps, meta, policy, capacity, rng,
                target, evset, order, trials, flush, shuffle, require_all):
    """Prime-contend-probe trials; returns (contentions, trials run).

    With require_all set, stops at the first trial whose probe still
    finds the target resident. Replacement metadata is carried in
    locals across the loop and written back on exit.
    """
    n = evset.shape[0]
    cap64 = _U64(capacity)
    is_lru = policy == POLICY_LRU
    is_fifo = policy == POLICY_FIFO
    counter = meta[0]
    fill = meta[1]
    ptr = meta[2]
    rstate = rng[0]
    contentions = 0
    trials_run = trials
    for t in range(trials):
        if flush:
            for i in range(fill):
                p = slot_page[i]
                if p >= 0:
                    page_slot[p] = -1
                    slot_page[i] = -1
                if is_lru:
                    stamps[i] = 0
            counter = 0
            fill = 0
            ptr = 0
        if shuffle:
            for i in range(n - 1, 0, -1):
                rstate, r = _mix(rstate)
                j = np.int64(r % _U64(i + 1))
                tmp = order[i]
                order[i] = order[j]
                order[j] = tmp
        for k in range(-1, n):
            if k < 0:
                page = target
            elif shuffle:
                page = evset[order[k]]
            else:
                page = evset[k]
            slot = page_slot[page]
            if slot >= 0:
                if is_lru:
                    counter += 1
                    stamps[slot] = counter
                continue
            if fill < capacity:
                slot = fill
                fill += 1
            else:
                if is_lru:
                    slot = 0
                    best = stamps[0]
                    for i in range(1, capacity):
                        if stamps[i] < best:
                            best = stamps[i]
                            slot = i
                elif is_fifo:
                    slot = ptr
                    ptr += 1
                    if ptr == capacity:
                        ptr = 0
                else:
                    rstate, r = _mix(rstate)
                    slot = np.int64(r % cap64)
                page_slot[slot_page[slot]] = -1
            slot_page[slot] = page
            page_slot[page] = slot
            if is_lru:
                counter += 1
                stamps[slot] = counter
        if page_slot[target] < 0:
            contentions += 1
        elif require_all:
            trials_run = t + 1
            break
    meta[0] = counter
    meta[1] = fill
    meta[2] = ptr
    rng[0] = rstate
    return contentions, trials_run


@njit(cache=True, nogil=True)
def _fill_pages(pages, slot_page, page_slot, stamps, meta, policy, capacity, rng):
    """Allocating accesses outside the trial loop; returns the hit count."""
    hits = 0
    cap64 = _U64(capacity)
    is_lru = policy == POLICY_LRU
    is_fifo = policy == POLICY_FIFO
    for i in range(pages.shape[0]):
        page = pages[i]
        slot = page_slot[page]
        if slot >= 0:
            hits += 1
            if is_lru:
                meta[0] += 1
                stamps[slot] = meta[0]
            continue
        if meta[1] < capacity:
            slot = meta[1]
            meta[1] += 1
        else:
            if is_lru:
                slot = 0
                best = stamps[0]
                for k in range(1, capacity):
                    if stamps[k] < best:
                        best = stamps[k]
                        slot = k
            elif is_fifo:
                slot = meta[2]
                meta[2] = (meta[2] + 1) % capacity
            else:
                rng[0], r = _mix(rng[0])
                slot = np.int64(r % cap64)
            page_slot[slot_page[slot]] = -1
        slot_page[slot] = page
        page_slot[page] = slot
        if is_lru:
            meta[0] += 1
            stamps[slot] = meta[0]
    return hits


class FastTlb:
    """Dense-id, fully associative cache state driven by the kernels above."""

    def __init__(self, capacity: int, policy: int, n_pages: int, seed: int):
        if capacity < 1 or n_pages < 1:
            raise ValueError("capacity and n_pages must be >= 1")
        self.capacity = capacity
        self.policy = policy
        self.n_pages = n_pages
        self.slot_page = np.full(capacity, -1, dtype=np.int64)
        self.page_slot = np.full(n_pages, -1, dtype=np.int32)
        self.stamps = np.zeros(capacity, dtype=np.int64)
        self.meta = np.zeros(3, dtype=np.int64)  # counter, fill, fifo pointer
        self.rng = np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)

    def flush(self) -> None:
        for i in range(int(self.meta[1])):
            p = self.slot_page[i]
            if p >= 0:
                self.page_slot[p] = -1
                self.slot_page[i] = -1
            self.stamps[i] = 0
        self.meta[:] = 0

    def access_many(self, pages: np.ndarray) -> int:
        return int(_fill_pages(np.asarray(pages, dtype=np.int64), self.slot_page,
                               self.page_slot, self.stamps, self.meta, self.policy,
                               self.capacity, self.rng))

    def access_one(self, page: int) -> bool:
        return self.access_many(np.array([page], dtype=np.int64)) == 1

    def is_resident(self, page: int) -> bool:
        return self.page_slot[page] >= 0

    def occupancy(self) -> int:
        return int((self.page_slot >= 0).sum())

    def run_trials(self, target: int, evset: np.ndarray, trials: int,
                   flush: bool, shuffle: bool, require_all: bool) -> tuple[int, int]:
        order = np.arange(evset.shape[0], dtype=np.int64)
        contentions, run = _run_trials(
            self.slot_page, self.page_slot, self.stamps, self.meta,
            self.policy, self.capacity, self.rng, target, evset,
            order, trials, flush, shuffle, require_all)
        return int(contentions), int(run)
