"""Simulated wall clock derived from the monitor device's 200 MHz core clock."""

from dataclasses import dataclass

CLOCK_HZ = 200_000_000
CYCLES_PER_MICROSECOND = CLOCK_HZ // 1_000_000


def seconds_to_cycles(seconds: float) -> int:
    return int(round(seconds * CLOCK_HZ))


def microseconds_to_cycles(us: float) -> int:
    return int(round(us * CYCLES_PER_MICROSECOND))


@dataclass
class Clock:
    """Monotonic cycle counter; all simulated time is counted in cycles."""

    cycles: int = 0

    def advance_cycles(self, n: int) -> None:
        if n < 0:
            raise ValueError("cannot advance the clock backwards")
        self.cycles += n

    def advance_seconds(self, seconds: float) -> None:
        self.advance_cycles(seconds_to_cycles(seconds))

    def advance_microseconds(self, us: float) -> None:
        self.advance_cycles(microseconds_to_cycles(us))

    @property
    def seconds(self) -> float:
        return self.cycles / CLOCK_HZ
