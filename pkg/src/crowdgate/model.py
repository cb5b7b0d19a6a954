"""Domain types for the crowd moderation engine.

Everything here is data plus construction-time validation; behavior lives in
the segmenter/assigner/judgment/pipeline modules. Only the pipeline engine
mutates these objects after construction (single-writer discipline); readers
get snapshots.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

# Video review states.
VIDEO_PENDING = "pending"
VIDEO_IN_REVIEW = "in-review"
VIDEO_SAFE = "safe"
VIDEO_UNSAFE = "unsafe"
VIDEO_UNRESOLVED = "unresolved"
VIDEO_STATUSES = (VIDEO_PENDING, VIDEO_IN_REVIEW, VIDEO_SAFE, VIDEO_UNSAFE, VIDEO_UNRESOLVED)
# `unresolved` is reached when a segment exhausts retries with zero votes; it
# publishes as not-safe downstream but is recorded distinctly for audit.
TERMINAL_VIDEO_STATUSES = (VIDEO_SAFE, VIDEO_UNSAFE, VIDEO_UNRESOLVED)

# Segment verdicts.
VERDICT_OPEN = "open"
VERDICT_YES = "yes"
VERDICT_NO = "no"
VERDICT_UNRESOLVED = "unresolved"
SEGMENT_VERDICTS = (VERDICT_OPEN, VERDICT_YES, VERDICT_NO, VERDICT_UNRESOLVED)
TERMINAL_VERDICTS = (VERDICT_YES, VERDICT_NO, VERDICT_UNRESOLVED)

# Worker identity classes and opinions.
SIGNED = "signed"
UNSIGNED = "unsigned"
YES = "yes"
NO = "no"

# Ground-truth labels used by gold tasks and the simulator.
LABEL_SAFE = "safe"
LABEL_UNSAFE = "unsafe"

# Worker bias flags.
BIAS_NONE = "none"
BIAS_YES = "yes-biased"
BIAS_NO = "no-biased"


class ModelError(ValueError):
    """Invalid construction or use of a domain object."""


@dataclass
class Vote:
    """One worker's yes/no opinion on one segment task."""

    vote_id: str
    segment_id: str
    worker_id: str
    opinion: str
    submitted_at: float
    # Frozen when the parent segment verdict becomes terminal, None before.
    weight_at_finalization: float | None = None

    def __post_init__(self) -> None:
        if self.opinion not in (YES, NO):
            raise ModelError(f"opinion must be yes/no, got {self.opinion!r}")


@dataclass
class SegmentTask:
    """A judgeable slice of a video timeline plus its quorum state."""

    segment_id: str
    video_id: str
    start: float
    end: float
    quorum_target: int
    verdict: str = VERDICT_OPEN
    assigned_workers: set[str] = field(default_factory=set)
    votes: list[Vote] = field(default_factory=list)
    deadline: float | None = None
    retries_left: int = 0
    is_gold: bool = False
    gold_label: str | None = None
    is_short: bool = False  # sub-minimum slice allowed only for short videos
    shortfall: bool = False  # last dispatch round found fewer workers than quorum
    dispatch_round: int = 0
    provisional: str | None = None  # non-binding verdict over votes so far

    def __post_init__(self) -> None:
        if self.end <= self.start:
            raise ModelError(f"empty interval [{self.start}, {self.end})")
        if self.quorum_target < 1:
            raise ModelError("quorum_target must be >= 1")
        if self.is_gold and self.gold_label not in (LABEL_SAFE, LABEL_UNSAFE):
            raise ModelError("gold task requires a gold_label")
        if self.retries_left < 0:
            raise ModelError("retries_left must be >= 0")

    @property
    def length(self) -> float:
        return self.end - self.start

    @property
    def is_terminal(self) -> bool:
        return self.verdict in TERMINAL_VERDICTS

    def vote_by(self, worker_id: str) -> Vote | None:
        for v in self.votes:
            if v.worker_id == worker_id:
                return v
        return None


@dataclass
class WorkerProfile:
    """Identity, reliability history, and reward state for one crowd worker."""

    worker_id: str
    identity_class: str
    locale: str
    credits: int = 0
    last_task_at: float | None = None
    agreement_window: deque = field(default_factory=deque)  # maxlen set by engine
    accuracy: float = 0.5  # uninformative prior until the window fills
    gold_safe_seen: int = 0
    gold_safe_yes: int = 0
    gold_unsafe_seen: int = 0
    gold_unsafe_yes: int = 0
    bias_flag: str = BIAS_NONE

    def __post_init__(self) -> None:
        if self.identity_class not in (SIGNED, UNSIGNED):
            raise ModelError(f"identity_class must be signed/unsigned, got {self.identity_class!r}")
        if self.credits < 0:
            raise ModelError("credits must be >= 0")


@dataclass
class VideoCase:
    """A video under review: its segment ids and the rolled-up decision."""

    video_id: str
    total_duration: float
    locale: str = ""
    segments: list[str] = field(default_factory=list)
    status: str = VIDEO_PENDING
    created_at: float = 0.0
    finalized_at: float | None = None

    def __post_init__(self) -> None:
        if self.total_duration <= 0:
            raise ModelError("total_duration must be > 0")
        if self.status not in VIDEO_STATUSES:
            raise ModelError(f"unknown status {self.status!r}")


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    errors: tuple[str, ...] = ()


def validate_video_case(case: VideoCase, segments: list[SegmentTask], tau: float) -> ValidationReport:
    """Check that `segments` form a legal partition of the case's timeline.

    Legal means: all reference the case, pairwise disjoint, contiguous cover
    of [0, total_duration), and each slice at least `tau` long. A single slice
    shorter than tau is accepted only for a video that is itself shorter than
    tau (the `short` case); the segmenter marks those with is_short.
    """
    errors: list[str] = []
    for seg in segments:
        if seg.video_id != case.video_id:
            errors.append(f"{seg.segment_id}: references video {seg.video_id!r}, not {case.video_id!r}")
    if errors:
        return ValidationReport(False, tuple(errors))
    if not segments:
        return ValidationReport(False, ("coverage gap: no segments for [0, %g)" % case.total_duration,))

    ordered = sorted(segments, key=lambda s: s.start)
    cursor = 0.0
    for seg in ordered:
        if seg.start < cursor:
            errors.append(f"overlap at {seg.segment_id}: starts {seg.start:g} before {cursor:g}")
        elif seg.start > cursor:
            errors.append(f"coverage gap before {seg.segment_id}: [{cursor:g}, {seg.start:g}) uncovered")
        if seg.length < tau and not seg.is_short:
            errors.append(f"undersized segment {seg.segment_id}: {seg.length:g} < {tau:g}")
        cursor = max(cursor, seg.end)
    if cursor != case.total_duration:
        if cursor < case.total_duration:
            errors.append(f"coverage gap at tail: [{cursor:g}, {case.total_duration:g}) uncovered")
        else:
            errors.append(f"segments overrun video end: {cursor:g} > {case.total_duration:g}")
    return ValidationReport(not errors, tuple(errors))


def video_status_from_verdicts(verdicts: list[str]) -> str:
    """Roll segment verdicts up to a video status (the all-yes rule).

    Any `no` rejects the whole video, even with other segments still open
    (early exit). Safe requires every segment to be a terminal yes. A mix of
    yes and unresolved publishes as unresolved, treated downstream as unsafe.
    """
    if any(v == VERDICT_NO for v in verdicts):
        return VIDEO_UNSAFE
    if any(v == VERDICT_OPEN for v in verdicts):
        return VIDEO_IN_REVIEW
    if all(v == VERDICT_YES for v in verdicts):
        return VIDEO_SAFE
    return VIDEO_UNRESOLVED
