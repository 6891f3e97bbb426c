"""Command-line front end.

Subcommands: find-evsets, channel-pp, channel-fr, scenario, and
validate-config. Every run writes CSV (or JSONL) series with a header
row plus a manifest recording the seed and a digest of the effective
configuration, so identical invocations reproduce identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .channel import (BitMessage, ChannelConfig, fr_transmit, lfsr_bits,
                      pp_transmit)
from .clock import Clock
from .config import PROFILES, load_profile, parse_config, serialize
from .devices import FlushSender, Monitor, QuerySender
from .errors import SimError
from .evset import EvictionHarness, find_all_evsets
from .scenarios import (ScenarioName, ScenarioSpec, derive_seed,
                        run_comparison_cell, run_scenario, write_csv,
                        write_manifest)
from .timing import Threshold, calibrate
from .tlb import Tlb

FR_TARGET_PAGE = 1 << 19

SCENARIO_DEFAULT_REPS = {
    ScenarioName.SQL_TRACE: 1,
    ScenarioName.HELLO_CHANNEL: 1,
    ScenarioName.EVSET_HISTOGRAMS: 10,
    ScenarioName.TABLE2: 40,
    ScenarioName.NIC_APPENDIX: 120,
}


def _write_rows(path: Path, header: list[str], rows, output_format: str) -> None:
    if output_format == "jsonl":
        path = path.with_suffix(".jsonl")
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            for row in rows:
                json.dump(dict(zip(header, row)), f, sort_keys=True)
                f.write("\n")
    else:
        write_csv(path, header, rows)


def _threshold_for(config, args=None) -> Threshold:
    if args is not None and getattr(args, "threshold", None) is not None:
        return Threshold(args.threshold)
    if config.timing.threshold_override is not None:
        return Threshold(config.timing.threshold_override)
    return calibrate(config.timing.build())


def _resolve_flush(args, config) -> bool:
    if args.flush is None:
        return config.evset.flush_enabled
    return args.flush


def cmd_find_evsets(args) -> int:
    config = load_profile(args.profile, seed=args.seed)
    flush = _resolve_flush(args, config)
    pool_size = args.pool_size or config.evset.pool_size
    custom = args.profile not in PROFILES or args.threshold is not None
    threshold = _threshold_for(config, args)
    algorithms = ["grow-reduce", "grow-split"] if args.algorithm == "both" \
        else [args.algorithm]
    rows = []
    size_hist: dict[int, int] = {}
    for algorithm in algorithms:
        for r in range(args.reps):
            run_seed = derive_seed(args.seed, algorithm, flush, r)
            stats, sizes = run_comparison_cell(
                algorithm, flush, run_seed, pool_size,
                tlb_config=config.tlb if custom else None,
                timing=config.timing.build() if custom else None,
                threshold=threshold if custom else None,
                shuffle_probe_order=config.monitor.shuffle_probe_order,
                inter_test_delay=config.evset.inter_test_delay)
            rows.append([algorithm, int(flush), run_seed, stats.number_of_sets,
                         stats.mean_set_size, stats.useful_sets_per_target,
                         stats.average_best_eviction_rate])
            for size in sizes:
                size_hist[size] = size_hist.get(size, 0) + 1
    out = Path(args.out)
    header = ["algorithm", "flush", "seed", "number_of_sets", "mean_set_size",
              "useful_sets_per_target", "average_best_eviction_rate"]
    _write_rows(out / "evsets.csv", header, rows, config.output_format)
    write_csv(out / "evset_size_hist.csv", ["size", "count"],
              sorted(size_hist.items()))
    write_manifest(out, "find-evsets", args.seed,
                   {"profile": args.profile, "flush": flush,
                    "pool_size": pool_size, "reps": args.reps,
                    "algorithm": args.algorithm, "config": serialize(config)},
                   ["evsets.csv", "evset_size_hist.csv"])
    for row in rows:
        print(",".join(str(v) for v in row))
    return 0


def _channel_message(args) -> BitMessage:
    if args.bits:
        return BitMessage.from_string(args.bits)
    if getattr(args, "lfsr", None):
        return lfsr_bits(args.lfsr)
    return BitMessage.from_text(args.message)


def _write_channel_outputs(out: Path, name: str, seed: int, sent: BitMessage,
                           report, params: dict, output_format: str) -> None:
    trace = [[i, s, m, d] for i, (s, m, d) in enumerate(
        zip(sent.bits, report.per_bit_miss_counts, report.decoded.bits))]
    _write_rows(out / f"{name}_trace.csv",
                ["bit_index", "sent_bit", "miss_count", "decoded_bit"],
                trace, output_format)
    record = {
        "decoded": "".join(str(b) for b in report.decoded.bits),
        "per_bit_miss_counts": list(report.per_bit_miss_counts),
        "throughput_bps": report.throughput_bps,
        "bit_error_rate": report.bit_error_rate,
        "duration_seconds": report.duration_seconds,
    }
    with open(out / f"{name}_report.json", "w") as f:
        json.dump(record, f, sort_keys=True, indent=2)
        f.write("\n")
    write_manifest(out, name, seed, params,
                   [f"{name}_trace.csv", f"{name}_report.json"])


def cmd_channel_pp(args) -> int:
    config = load_profile(args.profile, seed=args.seed)
    threshold = _threshold_for(config, args)
    sent = _channel_message(args)
    harness = EvictionHarness(
        replace(config.tlb, rng_seed=derive_seed(args.seed, "tlb")),
        config.timing.build(), threshold,
        monitor_device=config.monitor.device_id,
        flush_enabled=config.evset.flush_enabled,
        rng_seed=derive_seed(args.seed, "harness"))
    found = find_all_evsets(harness, pool_size=config.evset.pool_size)
    clock = Clock()
    monitor = Monitor(config.monitor.device_id,
                      replace(config.timing, rng_seed=derive_seed(args.seed, "mon-timing")).build(),
                      clock, eviction_set=found.evsets[0],
                      shuffle_probe_order=config.monitor.shuffle_probe_order,
                      rng_seed=config.monitor.rng_seed)
    tlb = Tlb(replace(config.tlb, rng_seed=derive_seed(args.seed, "tlb")))
    sender = QuerySender(1, replace(config.query_sender,
                                    rng_seed=derive_seed(args.seed, "query")))
    report = pp_transmit(sent, sender, monitor, tlb, threshold, config.channel)
    out = Path(args.out)
    _write_channel_outputs(out, "channel_pp", args.seed, sent, report,
                           {"profile": args.profile, "bits": len(sent),
                            "config": serialize(config)}, config.output_format)
    print(f"bits={len(sent)} ber={report.bit_error_rate:.4f} "
          f"throughput={report.throughput_bps:.2f}bps")
    return 0


def cmd_channel_fr(args) -> int:
    config = load_profile(args.profile, seed=args.seed)
    threshold = _threshold_for(config, args)
    sent = _channel_message(args)
    channel_cfg = config.channel
    if args.jitter_stddev is not None:
        channel_cfg = replace(channel_cfg, sync_jitter_stddev=args.jitter_stddev,
                              rng_seed=derive_seed(args.seed, "jitter"))
    clock = Clock()
    monitor = Monitor(config.monitor.device_id,
                      replace(config.timing, rng_seed=derive_seed(args.seed, "mon-timing")).build(),
                      clock, target=FR_TARGET_PAGE,
                      rng_seed=config.monitor.rng_seed)
    tlb = Tlb(replace(config.tlb, rng_seed=derive_seed(args.seed, "tlb")))
    report = fr_transmit(sent, FlushSender(config.flush_sender), monitor, tlb,
                         threshold, channel_cfg)
    out = Path(args.out)
    _write_channel_outputs(out, "channel_fr", args.seed, sent, report,
                           {"profile": args.profile, "bits": len(sent),
                            "jitter_stddev": channel_cfg.sync_jitter_stddev,
                            "config": serialize(config)}, config.output_format)
    print(f"bits={len(sent)} ber={report.bit_error_rate:.4f} "
          f"throughput={report.throughput_bps:.2f}bps")
    return 0


def cmd_scenario(args) -> int:
    name = ScenarioName(args.name)
    reps = args.reps if args.reps is not None else SCENARIO_DEFAULT_REPS[name]
    spec = ScenarioSpec(name=name, seed=args.seed, repetitions=reps,
                        out_dir=Path(args.out))
    run_scenario(spec)
    print(f"scenario {name.value} done; outputs in {args.out}")
    return 0


def cmd_validate_config(args) -> int:
    with open(args.path) as f:
        text = f.read()
    config = parse_config(text)
    roundtrip = parse_config(serialize(config))
    status = "ok" if roundtrip == config else "ok (non-canonical)"
    print(f"{args.path}: {status}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iotlbsim",
        description="Deterministic IOTLB contention simulator and toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="results")
        p.add_argument("--profile", default="reference-118-lru",
                       help="built-in profile name or config file path "
                            f"(built-ins: {', '.join(sorted(PROFILES))})")
        p.add_argument("--threshold", type=int, default=None,
                       help="override the calibrated hit/miss threshold (cycles)")

    p = sub.add_parser("find-evsets", help="construct and score eviction sets")
    common(p)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--algorithm", choices=["grow-reduce", "grow-split", "both"],
                   default="grow-reduce")
    p.add_argument("--pool-size", type=int, default=None)
    flush_group = p.add_mutually_exclusive_group()
    flush_group.add_argument("--flush", dest="flush", action="store_true",
                             default=None)
    flush_group.add_argument("--no-flush", dest="flush", action="store_false")
    p.set_defaults(func=cmd_find_evsets)

    p = sub.add_parser("channel-pp", help="peripheral-to-peripheral covert channel")
    common(p)
    p.add_argument("--message", default="Hello")
    p.add_argument("--bits", default=None, help="explicit bit string, e.g. 0101")
    p.set_defaults(func=cmd_channel_pp)

    p = sub.add_parser("channel-fr", help="host-to-peripheral covert channel")
    common(p)
    p.add_argument("--message", default="Hello")
    p.add_argument("--bits", default=None)
    p.add_argument("--lfsr", type=int, default=None,
                   help="send this many LFSR-generated bits")
    p.add_argument("--jitter-stddev", type=float, default=None,
                   help="slot synchronization jitter in seconds")
    p.set_defaults(func=cmd_channel_fr)

    p = sub.add_parser("scenario", help="run a canned experiment")
    p.add_argument("name", choices=[s.value for s in ScenarioName])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("validate-config", help="check a config file")
    p.add_argument("path")
    p.set_defaults(func=cmd_validate_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
