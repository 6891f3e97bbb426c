"""Deterministic IOTLB contention simulator and attack-analysis toolkit."""

from .clock import CLOCK_HZ, Clock
from .timing import LatencyModel, Threshold, calibrate, classify
from .tlb import IndexFn, Outcome, Replacement, Tlb, TlbConfig

__all__ = [
    "CLOCK_HZ",
    "Clock",
    "IndexFn",
    "LatencyModel",
    "Outcome",
    "Replacement",
    "Threshold",
    "Tlb",
    "TlbConfig",
    "calibrate",
    "classify",
]
