"""Experiment configuration: INI-style text with one section per module.

A config file parses into an `ExperimentConfig` whose parts are the
constructor inputs of the corresponding modules. Unknown sections or
keys are rejected, constraint violations are reported with their
`section.key` path, and `serialize` emits a canonical text that parses
back to an equal config.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields

from .channel import ChannelConfig, ChannelKind
from .devices import (FlushSenderConfig, NicSenderConfig, ProbeMode,
                      QuerySenderConfig)
from .errors import ConfigError, ConfigSyntaxError, UnknownKeyError
from .evset import DEFAULT_POOL_SIZE
from .timing import (DEFAULT_HIT_PEAKS, DEFAULT_JITTER_STDDEV,
                     DEFAULT_MISS_PEAKS, LatencyModel)
from .tlb import IndexFn, Replacement, TlbConfig


@dataclass(frozen=True)
class TimingSpec:
    hit_peaks: tuple[tuple[float, float], ...] = DEFAULT_HIT_PEAKS
    miss_peaks: tuple[tuple[float, float], ...] = DEFAULT_MISS_PEAKS
    jitter_stddev: float = DEFAULT_JITTER_STDDEV
    rng_seed: int = 0
    threshold_override: int | None = None

    def build(self) -> LatencyModel:
        return LatencyModel(hit_peaks=self.hit_peaks, miss_peaks=self.miss_peaks,
                            jitter_stddev=self.jitter_stddev, rng_seed=self.rng_seed)


@dataclass(frozen=True)
class MonitorSpec:
    device_id: int = 0
    probe_mode: ProbeMode = ProbeMode.PER_ADDRESS
    shuffle_probe_order: bool = False
    rng_seed: int = 0


@dataclass(frozen=True)
class EvsetSpec:
    pool_size: int = DEFAULT_POOL_SIZE
    flush_enabled: bool = True
    inter_test_delay: bool = False

    def __post_init__(self):
        if self.pool_size < 1:
            raise ConfigError("evset.pool_size", "must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    output_format: str = "csv"
    tlb: TlbConfig = field(default_factory=TlbConfig)
    timing: TimingSpec = field(default_factory=TimingSpec)
    monitor: MonitorSpec = field(default_factory=MonitorSpec)
    query_sender: QuerySenderConfig = field(default_factory=QuerySenderConfig)
    nic_sender: NicSenderConfig = field(default_factory=NicSenderConfig)
    flush_sender: FlushSenderConfig = field(default_factory=FlushSenderConfig)
    evset: EvsetSpec = field(default_factory=EvsetSpec)
    channel: ChannelConfig = field(default_factory=ChannelConfig)


# -- value parsers ------------------------------------------------------------


def _parse_int(text: str) -> int:
    return int(text, 0)


def _parse_float(text: str) -> float:
    return float(text)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_opt_float(text: str) -> float | None:
    return None if text.strip().lower() == "none" else float(text)


def _parse_opt_int(text: str) -> int | None:
    return None if text.strip().lower() == "none" else int(text, 0)


def _parse_enum(enum_cls):
    def parse(text: str):
        try:
            return enum_cls(text.strip().lower())
        except ValueError:
            values = ", ".join(e.value for e in enum_cls)
            raise ValueError(f"expected one of: {values}") from None
    return parse


def _parse_int_map(text: str) -> dict[int, int]:
    result = {}
    if not text.strip():
        return result
    for item in text.split(","):
        left, right = item.split(":")
        result[int(left.strip(), 0)] = int(right.strip(), 0)
    return result


def _parse_slots(text: str) -> frozenset[int]:
    slots = set()
    for piece in text.split(","):
        piece = piece.strip()
        if "-" in piece:
            lo, hi = piece.split("-")
            slots.update(range(int(lo), int(hi) + 1))
        else:
            slots.add(int(piece))
    return frozenset(slots)


def _parse_partition(text: str) -> dict[int, frozenset[int]] | None:
    if text.strip().lower() == "none" or not text.strip():
        return None
    result = {}
    for item in text.split(";"):
        dev, slots = item.split(":")
        result[int(dev.strip(), 0)] = _parse_slots(slots)
    return result


def _parse_pairs(text: str) -> frozenset[tuple[int, int]]:
    if not text.strip():
        return frozenset()
    pairs = set()
    for item in text.split(","):
        left, right = item.split(":")
        pairs.add((int(left.strip(), 0), int(right.strip(), 0)))
    return frozenset(pairs)


def _parse_int_set(text: str) -> frozenset[int]:
    if not text.strip():
        return frozenset()
    return frozenset(int(x.strip(), 0) for x in text.split(","))


def _parse_peaks(text: str) -> tuple[tuple[float, float], ...]:
    peaks = []
    for item in text.split(","):
        mean, weight = item.split(":")
        peaks.append((float(mean.strip()), float(weight.strip())))
    return tuple(peaks)


# -- serializers --------------------------------------------------------------


def _fmt_int_map(value: dict[int, int]) -> str:
    return ", ".join(f"{k}:{v}" for k, v in sorted(value.items()))


def _fmt_partition(value) -> str:
    if value is None:
        return "none"
    return "; ".join(f"{dev}:" + ",".join(str(s) for s in sorted(slots))
                     for dev, slots in sorted(value.items()))


def _fmt_pairs(value) -> str:
    return ", ".join(f"{a}:{b}" for a, b in sorted(value))


def _fmt_int_set(value) -> str:
    return ", ".join(str(v) for v in sorted(value))


def _fmt_peaks(value) -> str:
    return ", ".join(f"{m:g}:{w:g}" for m, w in value)


def _fmt_plain(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


# each entry: key -> (field name, parser, formatter)
_SCHEMA = {
    "run": {
        "seed": ("seed", _parse_int, _fmt_plain),
        "output": ("output_format", str.strip, _fmt_plain),
    },
    "tlb": {
        "num_sets": ("num_sets", _parse_int, _fmt_plain),
        "ways": ("ways", _parse_int, _fmt_plain),
        "index_fn": ("index_fn", _parse_enum(IndexFn), _fmt_plain),
        "replacement": ("replacement", _parse_enum(Replacement), _fmt_plain),
        "device_domains": ("device_domains", _parse_int_map, _fmt_int_map),
        "way_partition": ("way_partition", _parse_partition, _fmt_partition),
        "set_partition": ("set_partition", _parse_partition, _fmt_partition),
        "uncacheable_pages": ("uncacheable_pages", _parse_pairs, _fmt_pairs),
        "ats_bypass_devices": ("ats_bypass_devices", _parse_int_set, _fmt_int_set),
        "rng_seed": ("rng_seed", _parse_int, _fmt_plain),
    },
    "timing": {
        "hit_peaks": ("hit_peaks", _parse_peaks, _fmt_peaks),
        "miss_peaks": ("miss_peaks", _parse_peaks, _fmt_peaks),
        "jitter_stddev": ("jitter_stddev", _parse_float, _fmt_plain),
        "rng_seed": ("rng_seed", _parse_int, _fmt_plain),
        "threshold": ("threshold_override", _parse_opt_int, _fmt_plain),
    },
    "monitor": {
        "device_id": ("device_id", _parse_int, _fmt_plain),
        "probe_mode": ("probe_mode", _parse_enum(ProbeMode), _fmt_plain),
        "shuffle_probe_order": ("shuffle_probe_order", _parse_bool, _fmt_plain),
        "rng_seed": ("rng_seed", _parse_int, _fmt_plain),
    },
    "sender.query": {
        "footprint_pages": ("footprint_pages", _parse_int, _fmt_plain),
        "query_duration": ("query_duration", _parse_float, _fmt_plain),
        "rng_seed": ("rng_seed", _parse_int, _fmt_plain),
        "page_base": ("page_base", _parse_int, _fmt_plain),
        "page_span": ("page_span", _parse_int, _fmt_plain),
    },
    "sender.nic": {
        "pinned_page": ("pinned_page", _parse_int, _fmt_plain),
        "buffer_pages_min": ("buffer_pages_min", _parse_int, _fmt_plain),
        "buffer_pages_max": ("buffer_pages_max", _parse_int, _fmt_plain),
        "reboot_seed": ("reboot_seed", _parse_int, _fmt_plain),
        "realloc_span": ("realloc_span", _parse_int, _fmt_plain),
        "packet_touch_prob": ("packet_touch_prob", _parse_float, _fmt_plain),
    },
    "sender.flush": {
        "flush_duration_us": ("flush_duration_us", _parse_float, _fmt_plain),
    },
    "evset": {
        "pool_size": ("pool_size", _parse_int, _fmt_plain),
        "flush_enabled": ("flush_enabled", _parse_bool, _fmt_plain),
        "inter_test_delay": ("inter_test_delay", _parse_bool, _fmt_plain),
    },
    "channel": {
        "channel": ("channel", _parse_enum(ChannelKind), _fmt_plain),
        "slot_1_duration": ("slot_1_duration", _parse_opt_float, _fmt_plain),
        "slot_0_duration": ("slot_0_duration", _parse_opt_float, _fmt_plain),
        "decode_threshold_misses": ("decode_threshold_misses", _parse_int, _fmt_plain),
        "sync_jitter_stddev": ("sync_jitter_stddev", _parse_float, _fmt_plain),
        "rng_seed": ("rng_seed", _parse_int, _fmt_plain),
    },
}

_BUILDERS = {
    "tlb": ("tlb", TlbConfig),
    "timing": ("timing", TimingSpec),
    "monitor": ("monitor", MonitorSpec),
    "sender.query": ("query_sender", QuerySenderConfig),
    "sender.nic": ("nic_sender", NicSenderConfig),
    "sender.flush": ("flush_sender", FlushSenderConfig),
    "evset": ("evset", EvsetSpec),
    "channel": ("channel", ChannelConfig),
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate experiment configuration text."""
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigSyntaxError(str(exc)) from None

    top_kwargs: dict = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise UnknownKeyError(f"unknown section [{section}]")
        schema = _SCHEMA[section]
        section_kwargs = {}
        for key, raw in parser.items(section):
            if key not in schema:
                raise UnknownKeyError(f"unknown key {section}.{key}")
            field_name, parse, _fmt = schema[key]
            try:
                section_kwargs[field_name] = parse(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{section}.{key}", str(exc)) from None
        if section == "run":
            if "output_format" in section_kwargs and \
                    section_kwargs["output_format"] not in ("csv", "jsonl"):
                raise ConfigError("run.output", "must be csv or jsonl")
            top_kwargs.update(section_kwargs)
        else:
            attr, builder = _BUILDERS[section]
            try:
                top_kwargs[attr] = builder(**section_kwargs)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(section, str(exc)) from None
    return ExperimentConfig(**top_kwargs)


def serialize(config: ExperimentConfig) -> str:
    """Canonical INI text for a config; parses back to an equal value."""
    parser = configparser.ConfigParser(interpolation=None)
    parser["run"] = {
        "seed": str(config.seed),
        "output": config.output_format,
    }
    for section, (attr, _builder) in _BUILDERS.items():
        obj = getattr(config, attr)
        out = {}
        for key, (field_name, _parse, fmt) in _SCHEMA[section].items():
            out[key] = fmt(getattr(obj, field_name))
        parser[section] = out
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


# -- built-in profiles ---------------------------------------------------------


def _profile_reference(seed: int) -> ExperimentConfig:
    return ExperimentConfig(
        seed=seed,
        tlb=TlbConfig(num_sets=1, ways=118, index_fn=IndexFn.FULLY_ASSOCIATIVE,
                      replacement=Replacement.LRU,
                      device_domains={0: 0, 1: 1}, rng_seed=seed),
        evset=EvsetSpec(flush_enabled=True),
    )


def _profile_noflush(seed: int) -> ExperimentConfig:
    return ExperimentConfig(
        seed=seed,
        tlb=TlbConfig(num_sets=1, ways=118, index_fn=IndexFn.FULLY_ASSOCIATIVE,
                      replacement=Replacement.RANDOM_SEEDED,
                      device_domains={0: 0, 1: 1}, rng_seed=seed),
        evset=EvsetSpec(flush_enabled=False),
    )


def _profile_nic(seed: int) -> ExperimentConfig:
    return ExperimentConfig(
        seed=seed,
        tlb=TlbConfig(num_sets=128, ways=1, index_fn=IndexFn.MODULO_LOW_BITS,
                      replacement=Replacement.LRU,
                      device_domains={0: 0, 2: 2}, rng_seed=seed),
        evset=EvsetSpec(flush_enabled=False),
    )


PROFILES = {
    "reference-118-lru": _profile_reference,
    "noflush-118-random": _profile_noflush,
    "nic-128x1": _profile_nic,
}


def load_profile(name_or_path: str, seed: int = 0) -> ExperimentConfig:
    """Resolve a built-in profile name or read a config file."""
    if name_or_path in PROFILES:
        return PROFILES[name_or_path](seed)
    with open(name_or_path) as f:
        return parse_config(f.read())
