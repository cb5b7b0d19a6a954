"""End-to-end orchestration: ingest -> segment -> assign -> collect -> judge
-> decide, with every state change persisted to an append-only event log.

The engine is event-sourced: commands validate, compute decisions, and emit
events; the `_apply` methods are the only code that mutates state. Replaying
a log therefore rebuilds the exact live state, and a log prefix rebuilds the
exact intermediate state.

Concurrency: one re-entrant lock serializes all mutating commands (the
single-writer discipline); queries take the same lock just long enough to
copy a snapshot out.
"""

from __future__ import annotations

import heapq
import random
import threading
from collections import deque
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from . import eventlog
from .assigner import AssignmentPolicy, GoldItem, award_credits, draw_gold, pick_assignees
from .eventlog import Event, EventLogWriter, NullLogWriter
from .judgment import (
    JudgmentPolicy,
    WEIGHTING_UNIFORM,
    gold_truth_verdict,
    update_accuracy,
    update_bias,
    weighted_verdict,
)
from .model import (
    SegmentTask,
    TERMINAL_VIDEO_STATUSES,
    VERDICT_OPEN,
    VERDICT_UNRESOLVED,
    VIDEO_IN_REVIEW,
    VideoCase,
    Vote,
    WorkerProfile,
    video_status_from_verdicts,
)
from .segmenter import SegmentationPolicy, segment_timeline

MODE_SERVICE = "service"
MODE_SIMULATION = "simulation"


class RequestError(Exception):
    """A rejected command; `code` names the reason for API mapping."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class PipelineConfig:
    segmentation: SegmentationPolicy
    assignment: AssignmentPolicy
    judgment: JudgmentPolicy
    log_path: str = "events.log"
    mode: str = MODE_SIMULATION

    def __post_init__(self) -> None:
        if self.mode not in (MODE_SERVICE, MODE_SIMULATION):
            raise ValueError(f"mode must be service or simulation, got {self.mode!r}")

    def doc(self, gold_bank: Sequence[GoldItem] = ()) -> dict:
        """Behavior-defining parameters, canonicalized for the log header.

        log_path is deliberately excluded: where the log lives does not
        change what the pipeline does.
        """
        return {
            "mode": self.mode,
            "segmentation": asdict(self.segmentation),
            "assignment": asdict(self.assignment),
            "judgment": asdict(self.judgment),
            "gold_bank": [asdict(g) for g in gold_bank],
        }

    @classmethod
    def from_doc(cls, doc: dict, log_path: str = "events.log") -> tuple["PipelineConfig", list[GoldItem]]:
        config = cls(
            segmentation=SegmentationPolicy(**doc["segmentation"]),
            assignment=AssignmentPolicy(**doc["assignment"]),
            judgment=JudgmentPolicy(**doc["judgment"]),
            log_path=log_path,
            mode=doc["mode"],
        )
        bank = [GoldItem(**g) for g in doc.get("gold_bank", [])]
        return config, bank


def default_config(mode: str = MODE_SIMULATION, **overrides) -> PipelineConfig:
    return PipelineConfig(
        segmentation=SegmentationPolicy(),
        assignment=AssignmentPolicy(),
        judgment=JudgmentPolicy(),
        mode=mode,
        **overrides,
    )


class ModerationEngine:
    """Single-writer moderation state machine over an event log."""

    def __init__(
        self,
        config: PipelineConfig,
        log_writer,
        rng: random.Random | None = None,
        gold_bank: Sequence[GoldItem] = (),
    ):
        self.config = config
        self.log = log_writer
        self.rng = rng or random.Random(0)
        self.gold_bank = list(gold_bank)
        if config.assignment.gold_injection_rate > 0 and not self.gold_bank:
            raise ValueError("gold_injection_rate > 0 requires a non-empty gold bank")

        self._lock = threading.RLock()
        self.videos: dict[str, VideoCase] = {}
        self.segments: dict[str, SegmentTask] = {}
        self.workers: dict[str, WorkerProfile] = {}
        self._queues: dict[str, list[str]] = {}  # worker -> open task ids, oldest first
        self._schedule: list[tuple[float, int, str]] = []  # (due, tiebreak, segment)
        self._schedule_seq = 0
        self._last_tick = float("-inf")
        self._last_seq = 0
        # Log-derived counters (maintained in _apply, so replay rebuilds them).
        self.votes_accepted = 0
        self.worker_votes: dict[str, int] = {}
        self.worker_dispatches: dict[str, int] = {}
        # Command-side only: rejected submissions never reach the log.
        self.votes_rejected: dict[str, int] = {}

    # ------------------------------------------------------------------ io

    def _emit(self, kind: str, at: float, payload: dict) -> Event:
        ev = self.log.append(kind, at, payload)
        self._apply(ev)
        return ev

    def _push_schedule(self, due: float, segment_id: str) -> None:
        self._schedule_seq += 1
        heapq.heappush(self._schedule, (due, self._schedule_seq, segment_id))

    def next_due(self) -> float | None:
        with self._lock:
            return self._schedule[0][0] if self._schedule else None

    # ------------------------------------------------------------ commands

    def register_worker(self, worker_id: str, identity_class: str, locale: str, now: float) -> dict:
        with self._lock:
            if worker_id in self.workers:
                raise RequestError("duplicate", f"worker {worker_id!r} already registered")
            WorkerProfile(worker_id, identity_class, locale)  # validates
            self._emit(
                eventlog.KIND_WORKER_REGISTERED,
                now,
                {"worker_id": worker_id, "identity_class": identity_class, "locale": locale},
            )
            return {"worker_id": worker_id}

    def ingest_video(
        self, video_id: str, duration: float, locale: str, now: float, quorum: int | None = None
    ) -> dict:
        """Create the case, cut segments, and dispatch the first round each."""
        with self._lock:
            if video_id in self.videos:
                raise RequestError("duplicate", f"video {video_id!r} already ingested")
            if not video_id:
                raise RequestError("invalid", "video_id must be non-empty")
            if duration <= 0:
                raise RequestError("invalid", f"duration must be > 0, got {duration!r}")
            if quorum is not None and quorum < 1:
                raise RequestError("invalid", "quorum override must be >= 1")
            slices = segment_timeline(duration, self.config.segmentation)

            self._emit(
                eventlog.KIND_VIDEO_INGESTED,
                now,
                {"video_id": video_id, "duration": duration, "locale": locale},
            )
            segment_ids = []
            for k, sl in enumerate(slices):
                sid = f"{video_id}/s{k}"
                segment_ids.append(sid)
                self._emit(
                    eventlog.KIND_SEGMENT_CREATED,
                    now,
                    {
                        "segment_id": sid,
                        "video_id": video_id,
                        "start": sl.start,
                        "end": sl.end,
                        "short": sl.short,
                        "quorum": quorum or self.config.assignment.quorum_m,
                    },
                )
            actions = []
            for sid in segment_ids:
                actions.extend(self._dispatch_round(sid, now, retry=False))
            return {"video_id": video_id, "segments": segment_ids, "actions": actions}

    def submit_vote(self, segment_id: str, worker_id: str, opinion: str, now: float) -> dict:
        with self._lock:
            try:
                ack, actions = self._submit_vote_locked(segment_id, worker_id, opinion, now)
            except RequestError as exc:
                self.votes_rejected[exc.code] = self.votes_rejected.get(exc.code, 0) + 1
                raise
            ack["actions"] = actions
            return ack

    def _submit_vote_locked(self, segment_id: str, worker_id: str, opinion: str, now: float):
        seg = self.segments.get(segment_id)
        if seg is None:
            raise RequestError("unknown_segment", f"no such segment {segment_id!r}")
        if worker_id not in self.workers:
            raise RequestError("unknown_worker", f"no such worker {worker_id!r}")
        if opinion not in ("yes", "no"):
            raise RequestError("invalid", f"opinion must be yes or no, got {opinion!r}")
        if seg.is_terminal:
            raise RequestError("terminal", f"segment {segment_id!r} verdict is final")
        if worker_id not in seg.assigned_workers:
            raise RequestError("unassigned", f"worker {worker_id!r} not assigned to {segment_id!r}")
        if seg.vote_by(worker_id) is not None:
            raise RequestError("duplicate", f"worker {worker_id!r} already voted on {segment_id!r}")

        vote_id = f"vote-{self.log.next_seq}"
        self._emit(
            eventlog.KIND_VOTE_RECEIVED,
            now,
            {"vote_id": vote_id, "segment_id": segment_id, "worker_id": worker_id, "opinion": opinion},
        )
        actions = []
        if len(seg.votes) >= seg.quorum_target:
            actions.extend(self._finalize_segment(segment_id, now, reason="quorum"))
        return (
            {
                "vote_id": vote_id,
                "segment_id": segment_id,
                "votes": len(seg.votes),
                "quorum": seg.quorum_target,
                "verdict": seg.verdict,
            },
            actions,
        )

    def tick(self, now: float) -> list[dict]:
        """Fire everything due at or before `now`: deadline finalizations,
        retry re-dispatches, and gold expiries. Deterministic given the log."""
        with self._lock:
            if now < self._last_tick:
                raise ValueError(f"clock moved backwards: {now} < {self._last_tick}")
            self._last_tick = now
            actions: list[dict] = []
            while self._schedule and self._schedule[0][0] <= now:
                _, _, sid = heapq.heappop(self._schedule)
                seg = self.segments.get(sid)
                if seg is None or seg.is_terminal or seg.deadline is None:
                    continue
                if now < seg.deadline:
                    continue  # stale entry from an earlier dispatch round
                if seg.votes:
                    actions.extend(self._finalize_segment(sid, now, reason="deadline"))
                elif seg.is_gold:
                    actions.extend(self._finalize_segment(sid, now, reason="expired_gold"))
                elif seg.retries_left <= 0:
                    actions.extend(self._finalize_segment(sid, now, reason="retries_exhausted"))
                else:
                    # Zero votes: wait out a quarter cooldown after the
                    # deadline before re-dispatching (immediately if the
                    # failed round had no workers at all).
                    retry_at = seg.deadline + (
                        self.config.assignment.cooldown / 4 if seg.assigned_workers else 0.0
                    )
                    if now >= retry_at:
                        actions.extend(self._dispatch_round(sid, now, retry=True))
                    else:
                        self._push_schedule(retry_at, sid)
            return actions

    # ------------------------------------------------------------- queries

    def next_task(self, worker_id: str, now: float | None = None) -> dict | None:
        """Worker-pull: the oldest still-open assignment, or None."""
        with self._lock:
            if worker_id not in self.workers:
                raise RequestError("unknown_worker", f"no such worker {worker_id!r}")
            queue = self._queues.get(worker_id, [])
            while queue:
                seg = self.segments.get(queue[0])
                if seg is None or seg.is_terminal or worker_id not in seg.assigned_workers:
                    queue.pop(0)
                    continue
                return {
                    "segment_id": seg.segment_id,
                    "video_id": seg.video_id,
                    "interval": [seg.start, seg.end],
                    "deadline": seg.deadline,
                }
            return None

    def next_eligible_at(self, worker_id: str) -> float | None:
        with self._lock:
            w = self.workers.get(worker_id)
            if w is None or w.last_task_at is None:
                return None
            return w.last_task_at + self.config.assignment.cooldown

    def query_decision(self, video_id: str) -> dict:
        with self._lock:
            video = self.videos.get(video_id)
            if video is None:
                raise RequestError("not_found", f"no such video {video_id!r}")
            return {
                "video_id": video_id,
                "status": video.status,
                "created_at": video.created_at,
                "finalized_at": video.finalized_at,
                "segments": [
                    {
                        "segment_id": sid,
                        "interval": [self.segments[sid].start, self.segments[sid].end],
                        "verdict": self.segments[sid].verdict,
                        "votes": len(self.segments[sid].votes),
                        "shortfall": self.segments[sid].shortfall,
                    }
                    for sid in video.segments
                ],
            }

    def metrics(self) -> dict:
        with self._lock:
            video_status: dict[str, int] = {}
            for v in self.videos.values():
                video_status[v.status] = video_status.get(v.status, 0) + 1
            seg_verdicts: dict[str, int] = {}
            gold_verdicts: dict[str, int] = {}
            for s in self.segments.values():
                bucket = gold_verdicts if s.is_gold else seg_verdicts
                bucket[s.verdict] = bucket.get(s.verdict, 0) + 1
            latencies = sorted(
                v.finalized_at - v.created_at for v in self.videos.values() if v.finalized_at is not None
            )
            lat = {"count": len(latencies)}
            if latencies:
                lat["mean"] = sum(latencies) / len(latencies)
                lat["p95"] = latencies[min(len(latencies) - 1, int(0.95 * len(latencies)))]
            return {
                "workers": len(self.workers),
                "videos": video_status,
                "segments": seg_verdicts,
                "gold_tasks": gold_verdicts,
                "votes_accepted": self.votes_accepted,
                "votes_rejected": dict(self.votes_rejected),
                "events": self._last_seq,
                "decision_latency": lat,
            }

    def snapshot(self) -> dict:
        """Deep, comparable copy of the state of record."""
        with self._lock:
            return {
                "last_seq": self._last_seq,
                "votes_accepted": self.votes_accepted,
                "worker_votes": dict(self.worker_votes),
                "worker_dispatches": dict(self.worker_dispatches),
                "videos": {
                    vid: {
                        "video_id": v.video_id,
                        "total_duration": v.total_duration,
                        "locale": v.locale,
                        "segments": list(v.segments),
                        "status": v.status,
                        "created_at": v.created_at,
                        "finalized_at": v.finalized_at,
                    }
                    for vid, v in self.videos.items()
                },
                "segments": {
                    sid: {
                        "segment_id": s.segment_id,
                        "video_id": s.video_id,
                        "interval": [s.start, s.end],
                        "quorum_target": s.quorum_target,
                        "assigned_workers": sorted(s.assigned_workers),
                        "votes": [
                            [v.vote_id, v.worker_id, v.opinion, v.submitted_at, v.weight_at_finalization]
                            for v in s.votes
                        ],
                        "verdict": s.verdict,
                        "deadline": s.deadline,
                        "retries_left": s.retries_left,
                        "is_gold": s.is_gold,
                        "gold_label": s.gold_label,
                        "is_short": s.is_short,
                        "shortfall": s.shortfall,
                        "dispatch_round": s.dispatch_round,
                        "provisional": s.provisional,
                    }
                    for sid, s in self.segments.items()
                },
                "workers": {
                    wid: {
                        "worker_id": w.worker_id,
                        "identity_class": w.identity_class,
                        "locale": w.locale,
                        "credits": w.credits,
                        "last_task_at": w.last_task_at,
                        "agreement_window": list(w.agreement_window),
                        "accuracy": w.accuracy,
                        "gold_stats": [w.gold_safe_seen, w.gold_safe_yes, w.gold_unsafe_seen, w.gold_unsafe_yes],
                        "bias_flag": w.bias_flag,
                    }
                    for wid, w in self.workers.items()
                },
            }

    # ----------------------------------------------------------- internals

    def _dispatch_round(self, segment_id: str, now: float, retry: bool) -> list[dict]:
        seg = self.segments[segment_id]
        video = self.videos[seg.video_id]
        chosen = pick_assignees(
            self.workers.values(), video.locale, now, self.config.assignment, quorum=seg.quorum_target
        )
        worker_ids = [w.worker_id for w in chosen]
        deadline = now + (
            self.config.judgment.quorum_timeout
            if worker_ids
            else max(self.config.assignment.cooldown / 4, 1e-9)
        )
        retries_left = seg.retries_left - 1 if retry else seg.retries_left
        self._emit(
            eventlog.KIND_TASK_DISPATCHED,
            now,
            {
                "segment_id": segment_id,
                "workers": worker_ids,
                "deadline": deadline,
                "retries_left": retries_left,
                "round": seg.dispatch_round + 1,
                "shortfall": len(worker_ids) < seg.quorum_target,
            },
        )
        action = {
            "action": "dispatched",
            "segment_id": segment_id,
            "video_id": seg.video_id,
            "workers": worker_ids,
            "deadline": deadline,
            "shortfall": seg.shortfall,
            "gold": [],
        }
        for wid in worker_ids:
            item = draw_gold(self.gold_bank, self.config.assignment, self.rng)
            if item is not None:
                task_id = f"gold-task-{self.log.next_seq}"
                self._emit(
                    eventlog.KIND_GOLD_INJECTED,
                    now,
                    {
                        "task_id": task_id,
                        "gold_id": item.gold_id,
                        "label": item.label,
                        "worker_id": wid,
                        "video_id": item.gold_id,
                        "start": 0.0,
                        "end": item.duration,
                        "deadline": deadline,
                    },
                )
                action["gold"].append(
                    {"task_id": task_id, "worker_id": wid, "label": item.label, "deadline": deadline}
                )
        return [action]

    def _finalize_segment(self, segment_id: str, now: float, reason: str) -> list[dict]:
        seg = self.segments[segment_id]
        if seg.is_terminal:
            raise RequestError("terminal", f"segment {segment_id!r} already finalized")
        weights: dict[str, float] = {}
        if not seg.votes:
            verdict = VERDICT_UNRESOLVED
        elif seg.is_gold:
            verdict = gold_truth_verdict(seg.gold_label)
            _, weights = weighted_verdict(
                seg.votes, {v.worker_id: self.workers[v.worker_id].accuracy for v in seg.votes}, self.config.judgment
            )
        else:
            accuracies = {v.worker_id: self.workers[v.worker_id].accuracy for v in seg.votes}
            verdict, weights = weighted_verdict(seg.votes, accuracies, self.config.judgment)
        self._emit(
            eventlog.KIND_SEGMENT_FINALIZED,
            now,
            {
                "segment_id": segment_id,
                "verdict": verdict,
                "reason": reason,
                "weights": weights,
                "votes": len(seg.votes),
            },
        )
        actions = [
            {"action": "segment_finalized", "segment_id": segment_id, "verdict": verdict, "reason": reason}
        ]
        video = self.videos.get(seg.video_id)
        if video is not None and video.status not in TERMINAL_VIDEO_STATUSES:
            rollup = video_status_from_verdicts([self.segments[sid].verdict for sid in video.segments])
            if rollup in TERMINAL_VIDEO_STATUSES:
                self._emit(
                    eventlog.KIND_VIDEO_FINALIZED, now, {"video_id": seg.video_id, "status": rollup}
                )
                actions.append({"action": "video_finalized", "video_id": seg.video_id, "status": rollup})
        return actions

    # ----------------------------------------------------------- replaying

    @classmethod
    def replay(cls, lines: Iterable[str], tolerate_torn_tail: bool = False) -> tuple["ModerationEngine", list[str]]:
        """Rebuild engine state from a log alone. Read-only: nothing is re-logged."""
        header, events, warnings = eventlog.read_log(lines, tolerate_torn_tail=tolerate_torn_tail)
        config, bank = PipelineConfig.from_doc(header["config"])
        engine = cls(config, NullLogWriter(), rng=random.Random(header.get("seed") or 0), gold_bank=bank)
        for ev in events:
            engine._apply(ev)
            engine._last_tick = max(engine._last_tick, ev.at)
        return engine, warnings

    def apply_events(self, events: Iterable[Event]) -> None:
        """Apply pre-parsed events (e.g. a log suffix after a prefix replay)."""
        with self._lock:
            for ev in events:
                self._apply(ev)

    # ------------------------------------------------------------- applies

    def _apply(self, ev: Event) -> None:
        self._last_seq = ev.seq
        getattr(self, "_apply_" + ev.kind)(ev)

    def _apply_worker_registered(self, ev: Event) -> None:
        p = ev.payload
        w = WorkerProfile(p["worker_id"], p["identity_class"], p["locale"])
        w.agreement_window = deque(maxlen=self.config.judgment.window)
        self.workers[w.worker_id] = w
        self._queues[w.worker_id] = []
        self.worker_votes[w.worker_id] = 0
        self.worker_dispatches[w.worker_id] = 0

    def _apply_video_ingested(self, ev: Event) -> None:
        p = ev.payload
        self.videos[p["video_id"]] = VideoCase(
            video_id=p["video_id"],
            total_duration=p["duration"],
            locale=p["locale"],
            status=VIDEO_IN_REVIEW,
            created_at=ev.at,
        )

    def _apply_segment_created(self, ev: Event) -> None:
        p = ev.payload
        seg = SegmentTask(
            segment_id=p["segment_id"],
            video_id=p["video_id"],
            start=p["start"],
            end=p["end"],
            quorum_target=p["quorum"],
            retries_left=self.config.assignment.max_retries,
            is_short=p["short"],
        )
        self.segments[seg.segment_id] = seg
        self.videos[p["video_id"]].segments.append(seg.segment_id)

    def _apply_task_dispatched(self, ev: Event) -> None:
        p = ev.payload
        seg = self.segments[p["segment_id"]]
        new_set = set(p["workers"])
        for wid in seg.assigned_workers - new_set:  # revoke a failed round's leftovers
            q = self._queues.get(wid)
            if q and seg.segment_id in q:
                q.remove(seg.segment_id)
        seg.assigned_workers = new_set
        seg.deadline = p["deadline"]
        seg.retries_left = p["retries_left"]
        seg.dispatch_round = p["round"]
        seg.shortfall = p["shortfall"]
        for wid in p["workers"]:
            self.workers[wid].last_task_at = ev.at
            self.worker_dispatches[wid] += 1
            if seg.segment_id not in self._queues[wid]:
                self._queues[wid].append(seg.segment_id)
        self._push_schedule(p["deadline"], seg.segment_id)
        retry_at = p["deadline"] + (self.config.assignment.cooldown / 4 if p["workers"] else 0.0)
        if retry_at > p["deadline"]:
            self._push_schedule(retry_at, seg.segment_id)

    def _apply_gold_injected(self, ev: Event) -> None:
        p = ev.payload
        seg = SegmentTask(
            segment_id=p["task_id"],
            video_id=p["video_id"],
            start=p["start"],
            end=p["end"],
            quorum_target=1,
            is_gold=True,
            gold_label=p["label"],
            deadline=p["deadline"],
            assigned_workers={p["worker_id"]},
        )
        self.segments[seg.segment_id] = seg
        self._queues[p["worker_id"]].append(seg.segment_id)
        self._push_schedule(p["deadline"], seg.segment_id)

    def _apply_vote_received(self, ev: Event) -> None:
        p = ev.payload
        seg = self.segments[p["segment_id"]]
        vote = Vote(p["vote_id"], p["segment_id"], p["worker_id"], p["opinion"], ev.at)
        seg.votes.append(vote)
        self.votes_accepted += 1
        self.worker_votes[p["worker_id"]] += 1
        accuracies = {v.worker_id: self.workers[v.worker_id].accuracy for v in seg.votes}
        seg.provisional, _ = weighted_verdict(seg.votes, accuracies, self.config.judgment)
        q = self._queues.get(p["worker_id"])
        if q and seg.segment_id in q:
            q.remove(seg.segment_id)

    def _apply_segment_finalized(self, ev: Event) -> None:
        p = ev.payload
        seg = self.segments[p["segment_id"]]
        seg.verdict = p["verdict"]
        for vote in seg.votes:
            vote.weight_at_finalization = p["weights"].get(vote.worker_id)
        for wid in seg.assigned_workers:
            q = self._queues.get(wid)
            if q and seg.segment_id in q:
                q.remove(seg.segment_id)
        if seg.is_gold:
            for vote in seg.votes:
                update_bias(self.workers[vote.worker_id], seg.gold_label, vote.opinion, self.config.judgment)
        elif seg.verdict != VERDICT_UNRESOLVED:
            for vote in seg.votes:
                worker = self.workers[vote.worker_id]
                update_accuracy(worker, vote.opinion == seg.verdict, self.config.judgment)
                award_credits(worker, seg.verdict, vote)

    def _apply_video_finalized(self, ev: Event) -> None:
        p = ev.payload
        video = self.videos[p["video_id"]]
        video.status = p["status"]
        video.finalized_at = ev.at


def open_engine(
    config: PipelineConfig,
    seed: int | None = None,
    gold_bank: Sequence[GoldItem] = (),
    autoflush: bool | None = None,
) -> ModerationEngine:
    """Engine writing to config.log_path; service mode flushes every append."""
    if autoflush is None:
        autoflush = config.mode == MODE_SERVICE
    writer = EventLogWriter.to_path(config.log_path, config.doc(gold_bank), seed, autoflush=autoflush)
    return ModerationEngine(config, writer, rng=random.Random(seed), gold_bank=gold_bank)
