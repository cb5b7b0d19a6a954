"""Vote aggregation: majority and reliability-weighted verdicts, rolling
accuracy, and gold-task bias estimation."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping

from .model import (
    BIAS_NO,
    BIAS_NONE,
    BIAS_YES,
    LABEL_SAFE,
    LABEL_UNSAFE,
    NO,
    VERDICT_NO,
    VERDICT_YES,
    Vote,
    WorkerProfile,
    YES,
)

WEIGHTING_UNIFORM = "uniform"
WEIGHTING_LOG_ODDS = "log_odds"


@dataclass(frozen=True)
class JudgmentPolicy:
    window: int = 50  # sliding window length for per-worker accuracy
    weighting: str = WEIGHTING_LOG_ODDS
    accuracy_clamp_eps: float = 0.01
    tie_break: str = NO  # fixed: a tie rejects, the safety-conservative side
    bias_threshold: float = 0.7
    min_gold_for_bias: int = 20
    quorum_timeout: float = 120.0

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.weighting not in (WEIGHTING_UNIFORM, WEIGHTING_LOG_ODDS):
            raise ValueError(f"unknown weighting {self.weighting!r}")
        if not 0.0 < self.accuracy_clamp_eps < 0.5:
            raise ValueError("accuracy_clamp_eps must lie in (0, 0.5)")
        if self.tie_break != NO:
            raise ValueError("tie_break is fixed to no")
        if not 0.5 < self.bias_threshold <= 1.0:
            raise ValueError("bias_threshold must lie in (0.5, 1]")
        if self.min_gold_for_bias < 1:
            raise ValueError("min_gold_for_bias must be >= 1")
        if self.quorum_timeout <= 0:
            raise ValueError("quorum_timeout must be > 0")


def majority_vote(votes: list[Vote]) -> str:
    """Strict majority of yes over no; a tie rejects."""
    if not votes:
        raise ValueError("majority_vote needs at least one vote")
    ups = sum(1 for v in votes if v.opinion == YES)
    return YES if ups > len(votes) - ups else NO


def log_odds_weight(accuracy: float, eps: float) -> float:
    a = min(max(accuracy, eps), 1.0 - eps)
    return math.log(a / (1.0 - a))


def verdict_from_weights(opinions: Iterable[str], weights: Iterable[float]) -> str:
    """Argmax over summed per-side weights; a tie rejects.

    Invariant under scaling all weights by any c > 0.
    """
    yes_sum = 0.0
    no_sum = 0.0
    for opinion, w in zip(opinions, weights):
        if opinion == YES:
            yes_sum += w
        else:
            no_sum += w
    return YES if yes_sum > no_sum else NO


def weighted_verdict(
    votes: list[Vote],
    accuracies: Mapping[str, float],
    policy: JudgmentPolicy,
) -> tuple[str, dict[str, float]]:
    """Aggregate votes with per-worker weights; returns (verdict, weights).

    Under log_odds each vote carries ln(a/(1-a)) with a clamped into
    [eps, 1-eps]; under uniform every vote weighs 1 and this reduces to
    majority_vote. Ties reject either way.
    """
    if not votes:
        raise ValueError("weighted_verdict needs at least one vote")
    weights: dict[str, float] = {}
    for v in votes:
        if v.worker_id not in accuracies:
            raise KeyError(f"no accuracy entry for voter {v.worker_id!r}")
        if policy.weighting == WEIGHTING_UNIFORM:
            weights[v.worker_id] = 1.0
        else:
            weights[v.worker_id] = log_odds_weight(accuracies[v.worker_id], policy.accuracy_clamp_eps)
    verdict = verdict_from_weights(
        (v.opinion for v in votes), (weights[v.worker_id] for v in votes)
    )
    return verdict, weights


def update_accuracy(worker: WorkerProfile, agreed: bool, policy: JudgmentPolicy) -> WorkerProfile:
    """Push one agree/disagree outcome into the worker's sliding window.

    Called once per finalized non-gold segment the worker voted on. The
    window holds the last `policy.window` outcomes; an empty window reads as
    the uninformative prior 0.5.
    """
    if worker.agreement_window.maxlen != policy.window:
        worker.agreement_window = deque(worker.agreement_window, maxlen=policy.window)
    worker.agreement_window.append(bool(agreed))
    worker.accuracy = sum(worker.agreement_window) / len(worker.agreement_window)
    return worker


def update_bias(worker: WorkerProfile, gold_label: str, opinion: str, policy: JudgmentPolicy) -> WorkerProfile:
    """Fold one gold-task response into the worker's bias estimate.

    Rates are only trusted once the worker has answered at least
    `min_gold_for_bias` gold tasks in total; below that the flag stays none.
    The flag is re-derived on every update, so it can clear again.
    """
    if gold_label not in (LABEL_SAFE, LABEL_UNSAFE):
        raise ValueError(f"gold task carries no usable label: {gold_label!r}")
    if gold_label == LABEL_SAFE:
        worker.gold_safe_seen += 1
        if opinion == YES:
            worker.gold_safe_yes += 1
    else:
        worker.gold_unsafe_seen += 1
        if opinion == YES:
            worker.gold_unsafe_yes += 1

    total = worker.gold_safe_seen + worker.gold_unsafe_seen
    flag = BIAS_NONE
    if total >= policy.min_gold_for_bias:
        yes_on_unsafe = (
            worker.gold_unsafe_yes / worker.gold_unsafe_seen if worker.gold_unsafe_seen else 0.0
        )
        no_on_safe = (
            (worker.gold_safe_seen - worker.gold_safe_yes) / worker.gold_safe_seen
            if worker.gold_safe_seen
            else 0.0
        )
        if yes_on_unsafe > policy.bias_threshold:
            flag = BIAS_YES
        elif no_on_safe > policy.bias_threshold:
            flag = BIAS_NO
    worker.bias_flag = flag
    return worker


def bias_rates(worker: WorkerProfile) -> tuple[float | None, float | None]:
    """(p_yes_given_unsafe, p_no_given_safe) estimates, None where unseen."""
    yes_unsafe = worker.gold_unsafe_yes / worker.gold_unsafe_seen if worker.gold_unsafe_seen else None
    no_safe = (
        (worker.gold_safe_seen - worker.gold_safe_yes) / worker.gold_safe_seen
        if worker.gold_safe_seen
        else None
    )
    return yes_unsafe, no_safe


def gold_truth_verdict(gold_label: str) -> str:
    return VERDICT_YES if gold_label == LABEL_SAFE else VERDICT_NO
