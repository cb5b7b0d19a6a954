import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdgate.segmenter import SegmentationPolicy, segment_timeline


def intervals(slices):
    return [(s.start, s.end) for s in slices]


def test_exact_two_way_split():
    out = segment_timeline(280.0, SegmentationPolicy(tau=140.0))
    assert intervals(out) == [(0.0, 140.0), (140.0, 280.0)]
    assert not any(s.short for s in out)


def test_single_segment_at_exact_tau():
    out = segment_timeline(140.0, SegmentationPolicy(tau=140.0))
    assert intervals(out) == [(0.0, 140.0)]
    assert not out[0].short


def test_trailing_remainder_merges_into_last():
    out = segment_timeline(350.0, SegmentationPolicy(tau=140.0))
    assert intervals(out) == [(0.0, 140.0), (140.0, 350.0)]
    assert out[-1].length == 210.0


def test_short_video_is_single_flagged_slice():
    out = segment_timeline(100.0, SegmentationPolicy(tau=140.0))
    assert intervals(out) == [(0.0, 100.0)]
    assert out[0].short


def test_unmerged_remainder_becomes_short_tail():
    out = segment_timeline(350.0, SegmentationPolicy(tau=140.0, merge_remainder=False))
    assert intervals(out) == [(0.0, 140.0), (140.0, 280.0), (280.0, 350.0)]
    assert [s.short for s in out] == [False, False, True]


@pytest.mark.parametrize("duration", [0.0, -1.0, -140.0])
def test_non_positive_duration_rejected(duration):
    with pytest.raises(ValueError):
        segment_timeline(duration, SegmentationPolicy(tau=140.0))


def test_invalid_tau_rejected():
    with pytest.raises(ValueError):
        SegmentationPolicy(tau=0.0)


def check_partition(duration, tau, slices):
    assert slices[0].start == 0.0
    assert slices[-1].end == duration  # bit-exact: no drift at the tail
    for left, right in zip(slices, slices[1:]):
        assert left.end == right.start  # contiguous, shared boundaries
    if duration >= tau:
        for s in slices:
            assert tau <= s.length < 2 * tau
            assert not s.short
    else:
        assert len(slices) == 1 and slices[0].short


@given(
    tau=st.floats(min_value=0.1, max_value=1000.0, allow_nan=False),
    ratio=st.floats(min_value=0.01, max_value=40.0),
)
@settings(max_examples=300)
def test_partition_properties(tau, ratio):
    duration = tau * ratio
    if duration <= 0:
        return
    slices = segment_timeline(duration, SegmentationPolicy(tau=tau))
    check_partition(duration, tau, slices)


def test_exact_multiples_partition_cleanly():
    for k in (1, 2, 3, 7, 50):
        for tau in (140.0, 0.3, 977.5):
            duration = k * tau
            slices = segment_timeline(duration, SegmentationPolicy(tau=tau))
            check_partition(duration, tau, slices)


def test_deterministic_pure_function():
    policy = SegmentationPolicy(tau=137.2)
    assert segment_timeline(1234.5, policy) == segment_timeline(1234.5, policy)


def test_bulk_random_partitions():
    # Scaled-down version of the acceptance totality sweep.
    rng = random.Random(99)
    for _ in range(20_000):
        tau = math.exp(rng.uniform(math.log(0.1), math.log(1000.0)))
        ratio = math.exp(rng.uniform(math.log(0.01), math.log(30.0)))
        duration = tau * ratio
        if duration <= 0:
            continue
        check_partition(duration, tau, segment_timeline(duration, SegmentationPolicy(tau=tau)))
