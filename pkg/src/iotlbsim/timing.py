"""Latency synthesis and threshold classification.

Access latencies are drawn in whole 200 MHz clock cycles from bimodal
mixtures: resident translations cluster around 160 and 185 cycles,
missing ones around 225 and 270. The calibrated threshold sits at the
floor of the midpoint of the gap between the slowest resident peak and
the fastest missing peak.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .errors import CalibrationError
from .tlb import Outcome

DEFAULT_HIT_PEAKS = ((160.0, 0.5), (185.0, 0.5))
DEFAULT_MISS_PEAKS = ((225.0, 0.5), (270.0, 0.5))
DEFAULT_JITTER_STDDEV = 3.0


@dataclass(frozen=True)
class Threshold:
    cycles: int

    def __post_init__(self):
        if self.cycles <= 0:
            raise CalibrationError("threshold must be positive")


@dataclass
class LatencyModel:
    """Mixture-of-peaks latency source with Gaussian jitter.

    Sampling mutates the internal PRNG; use one instance per thread of
    control.
    """

    hit_peaks: tuple[tuple[float, float], ...] = DEFAULT_HIT_PEAKS
    miss_peaks: tuple[tuple[float, float], ...] = DEFAULT_MISS_PEAKS
    jitter_stddev: float = DEFAULT_JITTER_STDDEV
    rng_seed: int = 0
    _rng: random.Random = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name, peaks in (("hit_peaks", self.hit_peaks), ("miss_peaks", self.miss_peaks)):
            if not peaks:
                raise CalibrationError(f"{name} must not be empty")
            if any(w < 0 for _, w in peaks):
                raise CalibrationError(f"{name} weights must be non-negative")
            if abs(sum(w for _, w in peaks) - 1.0) > 1e-9:
                raise CalibrationError(f"{name} weights must sum to 1")
        if self.jitter_stddev < 0:
            raise CalibrationError("jitter_stddev must be >= 0")
        self._rng = random.Random(f"latency:{self.rng_seed}")

    @property
    def max_hit_mean(self) -> float:
        return max(m for m, _ in self.hit_peaks)

    @property
    def min_miss_mean(self) -> float:
        return min(m for m, _ in self.miss_peaks)

    def is_separable(self) -> bool:
        margin = 3.0 * self.jitter_stddev
        return self.max_hit_mean + margin < self.min_miss_mean - margin

    def sample_latency(self, outcome: Outcome) -> int:
        peaks = self.hit_peaks if outcome is Outcome.HIT else self.miss_peaks
        r = self._rng.random()
        mean = peaks[-1][0]
        acc = 0.0
        for m, w in peaks:
            acc += w
            if r < acc:
                mean = m
                break
        if self.jitter_stddev > 0:
            mean += self._rng.gauss(0.0, self.jitter_stddev)
        return max(1, round(mean))

    def mixture_mean(self, outcome: Outcome) -> float:
        peaks = self.hit_peaks if outcome is Outcome.HIT else self.miss_peaks
        return sum(m * w for m, w in peaks)


def calibrate(model: LatencyModel) -> Threshold:
    """Place the threshold mid-gap; refuses overlapping distributions."""
    if not model.is_separable():
        raise CalibrationError(
            "hit and miss peaks are closer than 3 sigma of jitter apart")
    return Threshold(math.floor((model.max_hit_mean + model.min_miss_mean) / 2))


def classify(cycles: int, threshold: Threshold) -> Outcome:
    return Outcome.MISS if cycles > threshold.cycles else Outcome.HIT
