"""Partition a video timeline into contiguous slices of at least tau seconds."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class TimeSlice:
    start: float
    end: float
    short: bool = False

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class SegmentationPolicy:
    # Minimum slice duration in seconds; long enough for a human to judge.
    tau: float = 140.0
    # Fold a sub-tau trailing remainder into the final slice rather than
    # emitting an undersized one.
    merge_remainder: bool = True

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError("tau must be > 0")


def segment_timeline(duration: float, policy: SegmentationPolicy) -> list[TimeSlice]:
    """Cut [0, duration) into disjoint contiguous slices.

    With merge_remainder every slice length lands in [tau, 2*tau) whenever
    duration >= tau; a video shorter than tau becomes one slice marked short.
    Boundaries are built by repeated addition with a one-ulp correction so the
    computed float length of every slice is never below tau, and the last
    slice ends at exactly `duration` (no drift).
    """
    if duration <= 0:
        raise ValueError(f"duration must be > 0, got {duration!r}")
    tau = policy.tau
    if duration < tau:
        return [TimeSlice(0.0, duration, short=True)]

    cuts: list[float] = [0.0]
    here = 0.0
    while True:
        nxt = here + tau
        if nxt - here < tau:  # addition rounded down; bump one ulp
            nxt = math.nextafter(nxt, math.inf)
        rem = duration - nxt
        if policy.merge_remainder:
            if rem < tau:
                break
        else:
            if rem <= 0:
                break
        cuts.append(nxt)
        here = nxt

    # Rounding corner: the break test can leave a merged tail of exactly
    # 2*tau when `here + tau` is unrepresentable. Shift the last cut up an
    # ulp (lengthening the penultimate slice, still < 2*tau) until the tail
    # is strictly inside [tau, 2*tau).
    while len(cuts) >= 2 and duration - cuts[-1] >= 2 * tau:
        cuts[-1] = math.nextafter(cuts[-1], math.inf)
    here = cuts[-1]

    slices = [TimeSlice(cuts[i], cuts[i + 1]) for i in range(len(cuts) - 1)]
    slices.append(TimeSlice(here, duration, short=(duration - here) < tau))
    return slices
