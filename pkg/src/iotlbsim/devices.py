"""Simulated agents that drive the translation cache.

The monitor is the programmable measurement device: its prime accesses
fill the cache normally, while its probe accesses are timed residency
checks that do not refill missing entries. Senders model the three
traffic sources used in the experiments: a query-serving accelerator, a
network card, and a host-side flusher.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field

from .clock import Clock
from .errors import MissingOperand, ProgramTooLong
from .timing import LatencyModel
from .tlb import Outcome, Tlb

MAX_PROGRAM_LENGTH = 7


class MonitorOp(enum.Enum):
    EVSET_PRIME = "evset_prime"
    EVSET_PROBE = "evset_probe"
    TARGET_PRIME = "target_prime"
    TARGET_PROBE = "target_probe"
    WAIT = "wait"


class ProbeMode(enum.Enum):
    AGGREGATE = "aggregate"
    PER_ADDRESS = "per_address"


@dataclass(frozen=True)
class Instruction:
    op: MonitorOp
    wait_cycles: int = 0


@dataclass(frozen=True)
class MonitorProgram:
    instructions: tuple[Instruction, ...]
    probe_mode: ProbeMode = ProbeMode.PER_ADDRESS

    def __post_init__(self):
        if len(self.instructions) > MAX_PROGRAM_LENGTH:
            raise ProgramTooLong(
                f"{len(self.instructions)} instructions, limit is {MAX_PROGRAM_LENGTH}")


class Monitor:
    """Measurement device: timed accesses against one translation cache."""

    def __init__(self, device_id: int, timing: LatencyModel, clock: Clock,
                 target: int | None = None,
                 eviction_set=None,
                 evset_prime_addrs: tuple[int, ...] = (),
                 evset_probe_addrs: tuple[int, ...] | None = None,
                 shuffle_probe_order: bool = False,
                 rng_seed: int = 0):
        self.device_id = device_id
        self.timing = timing
        self.clock = clock
        self.target = target
        self.eviction_set = eviction_set
        if eviction_set is not None and not evset_prime_addrs:
            evset_prime_addrs = tuple(eviction_set.addresses)
        self.evset_prime_addrs = tuple(evset_prime_addrs)
        self.evset_probe_addrs = (tuple(evset_probe_addrs)
                                  if evset_probe_addrs is not None
                                  else tuple(evset_prime_addrs))
        self.shuffle_probe_order = shuffle_probe_order
        self._rng = random.Random(f"monitor:{rng_seed}")

    # -- primitive accesses ---------------------------------------------

    def _timed(self, outcome: Outcome) -> int:
        latency = self.timing.sample_latency(outcome)
        self.clock.advance_cycles(latency)
        return latency

    def prime_page(self, tlb: Tlb, page: int) -> None:
        self._timed(tlb.access(self.device_id, page))

    def probe_page(self, tlb: Tlb, page: int) -> int:
        return self._timed(tlb.probe(self.device_id, page))

    def _ordered(self, addrs: tuple[int, ...]) -> list[int]:
        order = list(addrs)
        if self.shuffle_probe_order:
            self._rng.shuffle(order)
        return order

    def prime_evset(self, tlb: Tlb, addrs: tuple[int, ...] | None = None) -> None:
        for page in self._ordered(addrs if addrs is not None else self.evset_prime_addrs):
            self.prime_page(tlb, page)

    def probe_evset(self, tlb: Tlb, addrs: tuple[int, ...] | None = None) -> list[int]:
        return [self.probe_page(tlb, page)
                for page in self._ordered(addrs if addrs is not None else self.evset_probe_addrs)]

    # -- programmed execution --------------------------------------------

    def run_program(self, program: MonitorProgram, tlb: Tlb):
        """Execute up to 7 instructions, returning probe records.

        Each record is (instruction index, latency) for target probes or
        (instruction index, latencies) for eviction-set probes; aggregate
        mode folds the per-address latencies into their sum.
        """
        self._validate(program)
        records = []
        for i, instr in enumerate(program.instructions):
            if instr.op is MonitorOp.WAIT:
                self.clock.advance_cycles(instr.wait_cycles)
            elif instr.op is MonitorOp.TARGET_PRIME:
                self.prime_page(tlb, self.target)
            elif instr.op is MonitorOp.TARGET_PROBE:
                records.append((i, self.probe_page(tlb, self.target)))
            elif instr.op is MonitorOp.EVSET_PRIME:
                self.prime_evset(tlb)
            else:
                latencies = self.probe_evset(tlb)
                if program.probe_mode is ProbeMode.AGGREGATE:
                    records.append((i, sum(latencies)))
                else:
                    records.append((i, latencies))
        return records

    def _validate(self, program: MonitorProgram) -> None:
        for instr in program.instructions:
            if instr.op in (MonitorOp.TARGET_PRIME, MonitorOp.TARGET_PROBE) \
                    and self.target is None:
                raise MissingOperand("program uses target instructions but no target is set")
            if instr.op is MonitorOp.EVSET_PRIME and not self.evset_prime_addrs:
                raise MissingOperand("evset_prime requires a non-empty eviction set")
            if instr.op is MonitorOp.EVSET_PROBE and not self.evset_probe_addrs:
                raise MissingOperand("evset_probe requires a non-empty eviction set")


@dataclass(frozen=True)
class QuerySenderConfig:
    footprint_pages: int = 19
    query_duration: float = 0.3
    rng_seed: int = 0
    page_base: int = 1 << 24
    page_span: int = 1 << 16

    def __post_init__(self):
        if self.footprint_pages < 0:
            raise ValueError("footprint_pages must be >= 0")
        if self.query_duration <= 0:
            raise ValueError("query_duration must be positive")


class QuerySender:
    """Accelerator-side database worker leaving a fixed DMA footprint.

    The footprint is drawn once per instantiation; the result size of a
    query does not change it because results travel back over MMIO.
    """

    def __init__(self, device_id: int, config: QuerySenderConfig | None = None):
        self.device_id = device_id
        self.config = config or QuerySenderConfig()
        rng = random.Random(f"query:{self.config.rng_seed}")
        self.footprint = tuple(sorted(rng.sample(
            range(self.config.page_base, self.config.page_base + self.config.page_span),
            self.config.footprint_pages)))

    def run_query(self, tlb: Tlb, clock: Clock, rows: int = 0) -> None:
        for page in self.footprint:
            tlb.access(self.device_id, page)
        clock.advance_seconds(self.config.query_duration)


@dataclass(frozen=True)
class NicSenderConfig:
    pinned_page: int = 1 << 30
    buffer_pages_min: int = 1
    buffer_pages_max: int = 15
    reboot_seed: int = 0
    realloc_span: int = 0  # page-number stride between reboots; 0 reuses pages
    packet_touch_prob: float = 0.5

    def __post_init__(self):
        if not 1 <= self.buffer_pages_min <= self.buffer_pages_max:
            raise ValueError("buffer page count range is invalid")
        if not 0.0 <= self.packet_touch_prob <= 1.0:
            raise ValueError("packet_touch_prob must be in [0, 1]")


class NicSender:
    """Network card whose DMA buffers are re-allocated on every boot.

    The pinned page models the driver's startup dma mapping: it is part
    of every buffer and touched by every packet. The remaining buffer
    pages follow it contiguously so they occupy consecutive cache
    indices, with a per-reboot page-number offset when realloc_span > 0.
    """

    def __init__(self, device_id: int, config: NicSenderConfig | None = None):
        self.device_id = device_id
        self.config = config or NicSenderConfig()
        self._rng = random.Random(f"nic:{self.config.reboot_seed}")
        self._boots = 0
        self.buffer_pages: tuple[int, ...] = ()
        self.reboot()

    def reboot(self) -> None:
        cfg = self.config
        self._boots += 1
        count = self._rng.randint(cfg.buffer_pages_min, cfg.buffer_pages_max)
        offset = 0
        if cfg.realloc_span:
            offset = cfg.realloc_span * self._rng.randint(1, 1 << 16)
        pages = [cfg.pinned_page]
        pages += [cfg.pinned_page + offset + j for j in range(1, count)]
        self.buffer_pages = tuple(pages)

    def on_packet(self, tlb: Tlb) -> None:
        tlb.access(self.device_id, self.config.pinned_page)
        for page in self.buffer_pages[1:]:
            if self._rng.random() < self.config.packet_touch_prob:
                tlb.access(self.device_id, page)


@dataclass(frozen=True)
class FlushSenderConfig:
    flush_duration_us: float = 17.0

    def __post_init__(self):
        if self.flush_duration_us <= 0:
            raise ValueError("flush_duration_us must be positive")


class FlushSender:
    """Host-side sender: a global flush encodes 1, an equal sleep encodes 0."""

    def __init__(self, config: FlushSenderConfig | None = None):
        self.config = config or FlushSenderConfig()

    def send_bit(self, bit: int, tlb: Tlb, clock: Clock) -> None:
        if bit:
            tlb.flush_all()
        clock.advance_microseconds(self.config.flush_duration_us)
