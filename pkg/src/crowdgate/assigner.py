"""Worker selection for segment tasks: cooldown gating, signed-first ranking,
quorum fill, gold interleaving, and credit awards."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Iterator

from .model import (
    BIAS_NONE,
    LABEL_SAFE,
    LABEL_UNSAFE,
    SIGNED,
    VERDICT_UNRESOLVED,
    Vote,
    WorkerProfile,
)


@dataclass(frozen=True)
class AssignmentPolicy:
    quorum_m: int = 5
    cooldown: float = 2220.0  # seconds between consecutive assignments, 37 min
    prefer_signed: bool = True
    locale_weight: float = 1.0
    max_retries: int = 2
    gold_injection_rate: float = 0.1

    def __post_init__(self) -> None:
        if self.quorum_m < 1:
            raise ValueError("quorum_m must be >= 1")
        if self.cooldown < 0:
            raise ValueError("cooldown must be >= 0")
        if self.locale_weight < 0:
            raise ValueError("locale_weight must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if not 0.0 <= self.gold_injection_rate <= 1.0:
            raise ValueError("gold_injection_rate must lie in [0, 1]")


@dataclass(frozen=True)
class GoldItem:
    """One bank entry with known ground truth, served covertly as a task."""

    gold_id: str
    label: str
    duration: float = 140.0

    def __post_init__(self) -> None:
        if self.label not in (LABEL_SAFE, LABEL_UNSAFE):
            raise ValueError(f"gold label must be safe/unsafe, got {self.label!r}")
        if self.duration <= 0:
            raise ValueError("duration must be > 0")


def eligible_workers(
    pool: Iterable[WorkerProfile], now: float, policy: AssignmentPolicy
) -> list[WorkerProfile]:
    """Workers off cooldown and not currently bias-flagged, in pool order."""
    out = []
    for w in pool:
        if w.bias_flag != BIAS_NONE:
            continue
        if w.last_task_at is not None and (now - w.last_task_at) < policy.cooldown:
            continue
        out.append(w)
    return out


def locale_match(worker_locale: str, video_locale: str) -> float:
    """1.0 on exact tag match, 0.5 on shared language, 0 otherwise."""
    if not worker_locale or not video_locale:
        return 0.0
    if worker_locale == video_locale:
        return 1.0
    w_lang = worker_locale.replace("_", "-").split("-")[0].lower()
    v_lang = video_locale.replace("_", "-").split("-")[0].lower()
    return 0.5 if w_lang == v_lang else 0.0


def rank_candidates(
    candidates: list[WorkerProfile], video_locale: str, policy: AssignmentPolicy
) -> list[WorkerProfile]:
    """Stable order: signed before unsigned (when preferred), then by
    accuracy + locale_weight * locale match, descending."""

    def key(w: WorkerProfile) -> tuple:
        score = w.accuracy + policy.locale_weight * locale_match(w.locale, video_locale)
        if policy.prefer_signed:
            return (0 if w.identity_class == SIGNED else 1, -score)
        return (-score,)

    return sorted(candidates, key=key)


def pick_assignees(
    pool: Iterable[WorkerProfile],
    video_locale: str,
    now: float,
    policy: AssignmentPolicy,
    quorum: int | None = None,
) -> list[WorkerProfile]:
    """Top-ranked eligible workers, at most the quorum size.

    A result shorter than the quorum is a shortfall; the caller decides how
    to retry. Workers may already hold assignments on other segments of the
    same video: nothing here de-duplicates across segments beyond cooldown.
    """
    m = policy.quorum_m if quorum is None else quorum
    ranked = rank_candidates(eligible_workers(pool, now, policy), video_locale, policy)
    return ranked[:m]


def draw_gold(
    gold_bank: list[GoldItem], policy: AssignmentPolicy, rng: random.Random
) -> GoldItem | None:
    """One Bernoulli(gold_injection_rate) draw; a hit picks uniformly from
    the bank. This is the single source of gold-injection randomness."""
    if policy.gold_injection_rate <= 0:
        return None
    if not gold_bank:
        raise ValueError("gold_injection_rate > 0 requires a non-empty gold bank")
    if rng.random() < policy.gold_injection_rate:
        return gold_bank[rng.randrange(len(gold_bank))]
    return None


def maybe_inject_gold(
    task_stream: Iterable,
    gold_bank: list[GoldItem],
    policy: AssignmentPolicy,
    rng: random.Random,
) -> Iterator[tuple]:
    """Interleave gold tasks into a stream of per-worker dispatches.

    Yields ("task", item) for every real dispatch and, with probability
    gold_injection_rate per dispatch, a following ("gold", item, gold_item)
    for the same worker. Gold verdicts never touch video status.
    """
    if policy.gold_injection_rate > 0 and not gold_bank:
        raise ValueError("gold_injection_rate > 0 requires a non-empty gold bank")
    for item in task_stream:
        yield ("task", item)
        gold = draw_gold(gold_bank, policy, rng)
        if gold is not None:
            yield ("gold", item, gold)


def award_credits(worker: WorkerProfile, verdict: str, vote: Vote | None) -> WorkerProfile:
    """+1 credit when the worker's vote agrees with the terminal verdict."""
    if vote is None or verdict == VERDICT_UNRESOLVED:
        return worker
    if vote.opinion == verdict:
        worker.credits += 1
    return worker
