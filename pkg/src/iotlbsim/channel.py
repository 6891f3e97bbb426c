"""Covert-channel framing, transmission, decoding, and measurement.

Two channels are modeled. The peripheral-to-peripheral channel encodes a
one as a query on the sending accelerator and a zero as silence, with
the monitor running Prime+Probe around each slot and counting per-set
misses. The host-to-peripheral channel encodes a one as a global flush
and a zero as an equally long sleep, with the monitor repeatedly probing
and re-priming a single target address.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass

from .clock import CLOCK_HZ
from .devices import FlushSender, Monitor, QuerySender
from .errors import ChannelSetupError, LengthMismatch
from .timing import Threshold, classify
from .tlb import Outcome, Tlb


class Endianness(enum.Enum):
    BIG = "big"
    LITTLE = "little"


class ChannelKind(enum.Enum):
    PRIME_PROBE = "prime_probe"
    FLUSH_RELOAD = "flush_reload"


@dataclass(frozen=True)
class BitMessage:
    bits: tuple[int, ...]
    endianness: Endianness = Endianness.BIG

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("bits must be 0 or 1")

    def __len__(self) -> int:
        return len(self.bits)

    @classmethod
    def from_text(cls, text: str, endianness: Endianness = Endianness.BIG) -> "BitMessage":
        bits = []
        for byte in text.encode("ascii"):
            byte_bits = [(byte >> i) & 1 for i in range(7, -1, -1)]
            if endianness is Endianness.LITTLE:
                byte_bits.reverse()
            bits.extend(byte_bits)
        return cls(tuple(bits), endianness)

    @classmethod
    def from_string(cls, bitstring: str) -> "BitMessage":
        return cls(tuple(int(c) for c in bitstring))


def lfsr_bits(length: int, state: int = 0xACE1) -> BitMessage:
    """Maximal 16-bit linear feedback shift register stream (taps 16,15,13,4)."""
    if state == 0:
        raise ValueError("LFSR state must be non-zero")
    bits = []
    for _ in range(length):
        bits.append(state & 1)
        feedback = ((state >> 0) ^ (state >> 2) ^ (state >> 3) ^ (state >> 5)) & 1
        state = (state >> 1) | (feedback << 15)
    return BitMessage(tuple(bits))


@dataclass(frozen=True)
class ChannelConfig:
    """Slot timing and decode rule; durations in simulated seconds.

    A slot duration of None defers to the driving device: the 1-slot of
    the Prime+Probe channel lasts exactly one query, its 0-slot is just
    the monitor's own prime and probe time, and both Flush+Reload slots
    last one flush.
    """

    channel: ChannelKind = ChannelKind.PRIME_PROBE
    slot_1_duration: float | None = None
    slot_0_duration: float | None = None
    decode_threshold_misses: int = 9
    sync_jitter_stddev: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("slot_1_duration", "slot_0_duration"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be positive")
        if self.decode_threshold_misses < 1:
            raise ValueError("decode_threshold_misses must be >= 1")
        if self.sync_jitter_stddev < 0:
            raise ValueError("sync_jitter_stddev must be >= 0")


@dataclass(frozen=True)
class TransmissionReport:
    decoded: BitMessage
    per_bit_miss_counts: tuple[int, ...]
    throughput_bps: float
    bit_error_rate: float
    duration_seconds: float


def _bit_error_rate(decoded: BitMessage, sent: BitMessage) -> float:
    if len(decoded) != len(sent):
        raise LengthMismatch(
            f"decoded {len(decoded)} bits but {len(sent)} were sent")
    if not sent.bits:
        return 0.0
    errors = sum(1 for a, b in zip(decoded.bits, sent.bits) if a != b)
    return errors / len(sent)


def measure(report: TransmissionReport, sent: BitMessage) -> tuple[float, float]:
    """Throughput and bit error rate of a finished transmission."""
    return report.throughput_bps, _bit_error_rate(report.decoded, sent)


def pp_transmit(message: BitMessage, query_sender: QuerySender, monitor: Monitor,
                tlb: Tlb, threshold: Threshold,
                config: ChannelConfig | None = None) -> TransmissionReport:
    """Peripheral-to-peripheral transmission over cache contention.

    Per bit the monitor primes its eviction set, the sender runs one
    query for a one or stays idle for a zero, then the monitor probes
    each address and decodes a one when at least
    `decode_threshold_misses` probes classify as misses.
    """
    config = config or ChannelConfig()
    if monitor.eviction_set is None or not monitor.eviction_set.verified:
        raise ChannelSetupError("monitor needs a verified eviction set")
    clock = monitor.clock
    start_cycles = clock.cycles
    decoded = []
    miss_counts = []
    for bit in message.bits:
        monitor.prime_evset(tlb)
        if bit:
            query_sender.run_query(tlb, clock)
            if config.slot_1_duration is not None:
                clock.advance_seconds(
                    max(0.0, config.slot_1_duration - query_sender.config.query_duration))
        elif config.slot_0_duration is not None:
            clock.advance_seconds(config.slot_0_duration)
        latencies = monitor.probe_evset(tlb)
        misses = sum(1 for lat in latencies
                     if classify(lat, threshold) is Outcome.MISS)
        miss_counts.append(misses)
        decoded.append(1 if misses >= config.decode_threshold_misses else 0)
    duration = (clock.cycles - start_cycles) / CLOCK_HZ
    decoded_msg = BitMessage(tuple(decoded), message.endianness)
    throughput = len(message) / duration if duration > 0 else 0.0
    return TransmissionReport(
        decoded=decoded_msg,
        per_bit_miss_counts=tuple(miss_counts),
        throughput_bps=throughput,
        bit_error_rate=_bit_error_rate(decoded_msg, message),
        duration_seconds=duration,
    )


def fr_transmit(message: BitMessage, flush_sender: FlushSender, monitor: Monitor,
                tlb: Tlb, threshold: Threshold,
                config: ChannelConfig | None = None) -> TransmissionReport:
    """Host-to-peripheral transmission over flush-induced misses.

    The sender occupies each slot with either a global flush or a sleep;
    the monitor probes its target inside every slot and re-primes it for
    the next one. Slot-boundary jitter displaces the monitor's probe
    instants to model imperfect synchronization; with zero jitter the
    probe always lands between its slot's flush and the next.
    """
    config = config or ChannelConfig(channel=ChannelKind.FLUSH_RELOAD)
    if monitor.target is None:
        raise ChannelSetupError("monitor needs a target address")
    clock = monitor.clock
    slot_seconds = (config.slot_1_duration
                    if config.slot_1_duration is not None
                    else flush_sender.config.flush_duration_us * 1e-6)
    slot_cycles = max(1, round(slot_seconds * CLOCK_HZ))
    n = len(message.bits)
    jitter_rng = random.Random(f"fr-jitter:{config.rng_seed}")

    # the sender's action lands mid-slot; the monitor nominally samples
    # at three quarters of the slot, then re-primes for the next slot
    events: list[tuple[int, int, str, int]] = []
    seq = 0
    for j, bit in enumerate(message.bits):
        if bit:
            events.append((j * slot_cycles + slot_cycles // 2, seq, "flush", j))
            seq += 1
    for j in range(n):
        t = j * slot_cycles + (3 * slot_cycles) // 4
        if config.sync_jitter_stddev > 0:
            t += round(jitter_rng.gauss(0.0, config.sync_jitter_stddev * CLOCK_HZ))
        events.append((t, seq, "probe", j))
        seq += 1
        events.append((t, seq, "reprime", j))
        seq += 1
    events.sort()

    monitor.prime_page(tlb, monitor.target)
    probe_outcome = [0] * n
    for _, _, kind, j in events:
        if kind == "flush":
            tlb.flush_all()
        elif kind == "probe":
            latency = monitor.timing.sample_latency(tlb.probe(monitor.device_id,
                                                              monitor.target))
            probe_outcome[j] = 1 if classify(latency, threshold) is Outcome.MISS else 0
        else:
            tlb.access(monitor.device_id, monitor.target)

    clock.advance_cycles(n * slot_cycles)
    duration = n * slot_cycles / CLOCK_HZ
    decoded_msg = BitMessage(tuple(probe_outcome), message.endianness)
    throughput = n / duration if duration > 0 else 0.0
    return TransmissionReport(
        decoded=decoded_msg,
        per_bit_miss_counts=tuple(probe_outcome),
        throughput_bps=throughput,
        bit_error_rate=_bit_error_rate(decoded_msg, message),
        duration_seconds=duration,
    )
