"""Discrete-event simulator: synthetic video streams with planted unsafe
segments and synthetic workers with latent accuracy, bias, and latency,
driving the pipeline end to end.

The clock is integer milliseconds and every random draw comes from one seeded
generator shared with the engine, so a (config, scenario, seed) triple yields
byte-identical event logs and reports. Stress mode submits same-millisecond
votes from concurrent threads instead; that forfeits byte determinism but
keeps all engine invariants checkable.
"""

from __future__ import annotations

import csv
import heapq
import math
import random
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .assigner import GoldItem, locale_match
from .model import LABEL_SAFE, LABEL_UNSAFE, NO, VERDICT_NO, VERDICT_YES, VIDEO_UNSAFE, YES
from .pipeline import ModerationEngine, PipelineConfig, RequestError, open_engine


@dataclass(frozen=True)
class SimWorkerModel:
    """Latent behavior of one synthetic worker."""

    true_accuracy: float
    yes_bias: float = 0.0  # probability of answering yes regardless of content
    latency_mu_log: float = math.log(30.0)
    latency_sigma_log: float = 0.8
    availability: float = 1.0  # per-dispatch acceptance probability

    def __post_init__(self) -> None:
        for name in ("true_accuracy", "yes_bias", "availability"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        if self.latency_sigma_log < 0:
            raise ValueError("latency_sigma_log must be >= 0")


@dataclass(frozen=True)
class SimWorker:
    worker_id: str
    identity_class: str
    locale: str
    model: SimWorkerModel


@dataclass(frozen=True)
class SimStreamModel:
    """Synthetic upload stream feeding the pipeline."""

    video_arrival_rate: float  # videos per second (Poisson arrivals)
    duration_dist: dict = field(default_factory=lambda: {"kind": "fixed", "value": 280.0})
    unsafe_segment_rate: float = 0.1  # per segment
    locale_mix: dict = field(default_factory=lambda: {"en-US": 1.0})

    def __post_init__(self) -> None:
        if self.video_arrival_rate <= 0:
            raise ValueError("video_arrival_rate must be > 0")
        if not 0.0 <= self.unsafe_segment_rate <= 1.0:
            raise ValueError("unsafe_segment_rate must lie in [0, 1]")


@dataclass(frozen=True)
class Scenario:
    stream: SimStreamModel
    workers: list[SimWorker]
    horizon: float  # seconds of simulated time
    max_videos: int
    gold_bank: list[GoldItem] = field(default_factory=list)
    locale_penalty: float = 0.0  # accuracy malus on locale mismatch, off by default
    stress_mode: bool = False

    def __post_init__(self) -> None:
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")
        if self.max_videos < 0:
            raise ValueError("max_videos must be >= 0")
        if not self.workers:
            raise ValueError("scenario needs at least one worker")


def sample_vote(model: SimWorkerModel, truth: str, rng: random.Random, accuracy: float | None = None) -> str:
    """Draw a worker's opinion: bias fires first, then accuracy decides."""
    if truth not in (LABEL_SAFE, LABEL_UNSAFE):
        raise ValueError(f"truth must be safe/unsafe, got {truth!r}")
    if model.yes_bias > 0 and rng.random() < model.yes_bias:
        return YES
    a = model.true_accuracy if accuracy is None else accuracy
    correct = rng.random() < a
    truthful = YES if truth == LABEL_SAFE else NO
    if correct:
        return truthful
    return NO if truthful == YES else YES


def sample_duration(dist: dict, rng: random.Random) -> float:
    kind = dist.get("kind", "fixed")
    if kind == "fixed":
        return float(dist["value"])
    if kind == "uniform":
        return rng.uniform(float(dist["low"]), float(dist["high"]))
    if kind == "lognormal":
        return rng.lognormvariate(float(dist["mu"]), float(dist["sigma"]))
    if kind == "choice":
        return float(dist["values"][rng.randrange(len(dist["values"]))])
    raise ValueError(f"unknown duration distribution kind {kind!r}")


def sample_locale(mix: dict, rng: random.Random) -> str:
    total = sum(mix.values())
    x = rng.random() * total
    acc = 0.0
    for tag, w in mix.items():
        acc += w
        if x < acc:
            return tag
    return next(iter(mix))


@dataclass
class SimReport:
    seed: int
    videos_total: int = 0
    videos_by_status: dict = field(default_factory=dict)
    segments_total: int = 0
    segments_by_verdict: dict = field(default_factory=dict)
    confusion: dict = field(default_factory=dict)  # (truth, verdict) -> count
    segment_accuracy: float | None = None
    video_precision_unsafe: float | None = None
    video_recall_unsafe: float | None = None
    latency_mean: float | None = None
    latency_p95: float | None = None
    votes_accepted: int = 0
    votes_rejected: dict = field(default_factory=dict)
    late_votes: int = 0
    declined_dispatches: int = 0
    gold_issued: int = 0
    gold_answered: int = 0
    dispatches: int = 0
    workers_active: int = 0
    workers_total: int = 0
    worker_rows: list = field(default_factory=list)

    def utilization(self) -> float:
        return self.workers_active / self.workers_total if self.workers_total else 0.0

    def acceptance_rate(self) -> float:
        return self.votes_accepted / self.dispatches if self.dispatches else 0.0


def run_simulation(
    config: PipelineConfig,
    scenario: Scenario,
    seed: int,
    output_dir: str | Path | None = None,
    csv_only: bool = False,
) -> tuple[SimReport, ModerationEngine, dict]:
    """Run the scenario against a fresh engine; returns (report, engine, truth).

    Writes the event log to config.log_path and, when output_dir is given,
    the report files next to it.
    """
    rng = random.Random(seed)
    engine = open_engine(config, seed=seed, gold_bank=scenario.gold_bank, autoflush=False)
    engine.rng = rng  # single generator for engine draws and simulator draws

    horizon_ms = int(round(scenario.horizon * 1000))
    truth: dict[str, str] = {}
    models = {w.worker_id: w.model for w in scenario.workers}
    locales = {w.worker_id: w.locale for w in scenario.workers}
    video_locale: dict[str, str] = {}
    stats = {"late": 0, "declined": 0, "videos": 0}

    heap: list[tuple[int, int, str, tuple]] = []
    counter = 0

    def push(t_ms: int, kind: str, data: tuple) -> None:
        nonlocal counter
        counter += 1
        heapq.heappush(heap, (t_ms, counter, kind, data))

    for w in scenario.workers:
        engine.register_worker(w.worker_id, w.identity_class, w.locale, 0.0)

    if scenario.max_videos > 0:
        push(max(1, int(round(rng.expovariate(scenario.stream.video_arrival_rate) * 1000))), "video", ())

    def handle_actions(actions: list[dict], now_ms: int) -> None:
        for action in actions:
            if action.get("action") != "dispatched":
                continue
            vid = action["video_id"]
            for wid in action["workers"]:
                model = models[wid]
                golds = [g for g in action["gold"] if g["worker_id"] == wid]
                if rng.random() >= model.availability:
                    stats["declined"] += 1
                    continue
                latency = rng.lognormvariate(model.latency_mu_log, model.latency_sigma_log)
                vote_ms = now_ms + max(1, int(round(latency * 1000)))
                sid = action["segment_id"]
                acc = None
                if scenario.locale_penalty > 0 and locale_match(locales[wid], video_locale.get(vid, "")) < 1.0:
                    acc = max(0.0, model.true_accuracy - scenario.locale_penalty)
                opinion = sample_vote(model, truth[sid], rng, accuracy=acc)
                push(vote_ms, "vote", (sid, wid, opinion))
                for g in golds:
                    g_latency = rng.lognormvariate(model.latency_mu_log, model.latency_sigma_log)
                    g_ms = now_ms + max(1, int(round(g_latency * 1000)))
                    g_opinion = sample_vote(model, g["label"], rng)
                    push(g_ms, "vote", (g["task_id"], wid, g_opinion))

    stats_lock = threading.Lock()  # stress mode submits from worker threads

    def submit(sid: str, wid: str, opinion: str, now_s: float) -> list[dict]:
        try:
            ack = engine.submit_vote(sid, wid, opinion, now_s)
        except RequestError:
            with stats_lock:
                stats["late"] += 1  # deadline beat the vote; segment already closed
            return []
        return ack["actions"]

    def engine_due_ms() -> int | None:
        due = engine.next_due()
        if due is None:
            return None
        ms = int(math.ceil(due * 1000.0 - 1e-9))
        return ms if ms / 1000.0 >= due else ms + 1

    last_ms = 0
    while True:
        due_ms = engine_due_ms()
        heap_ms = heap[0][0] if heap else None
        if due_ms is None and heap_ms is None:
            break
        t_ms = min(x for x in (due_ms, heap_ms) if x is not None)
        if t_ms > horizon_ms:
            break
        t_ms = max(t_ms, last_ms)  # engine rounding must not step backwards
        last_ms = t_ms
        now_s = t_ms / 1000.0
        handle_actions(engine.tick(now_s), t_ms)

        batch: list[tuple] = []
        while heap and heap[0][0] <= t_ms:
            _, _, kind, data = heapq.heappop(heap)
            if kind == "video":
                stats["videos"] += 1
                vid = f"v{stats['videos']:06d}"
                duration = sample_duration(scenario.stream.duration_dist, rng)
                locale = sample_locale(scenario.stream.locale_mix, rng)
                video_locale[vid] = locale
                result = engine.ingest_video(vid, duration, locale, now_s)
                for sid in result["segments"]:
                    truth[sid] = (
                        LABEL_UNSAFE if rng.random() < scenario.stream.unsafe_segment_rate else LABEL_SAFE
                    )
                handle_actions(result["actions"], t_ms)
                if stats["videos"] < scenario.max_videos:
                    gap_ms = max(1, int(round(rng.expovariate(scenario.stream.video_arrival_rate) * 1000)))
                    push(t_ms + gap_ms, "video", ())
            else:
                batch.append(data)

        if scenario.stress_mode and len(batch) > 1:
            with ThreadPoolExecutor(max_workers=min(32, len(batch))) as pool:
                futures = [pool.submit(submit, sid, wid, op, now_s) for sid, wid, op in batch]
                for f in futures:
                    handle_actions(f.result(), t_ms)
        else:
            for sid, wid, op in batch:
                handle_actions(submit(sid, wid, op, now_s), t_ms)

    engine.tick(max(last_ms, horizon_ms) / 1000.0)  # settle anything due at the horizon
    engine.log.flush()
    engine.log.close()

    report = build_report(engine, truth, seed)
    # Simulator-private observations; these never enter summary.txt because a
    # report rebuilt from the log alone could not reproduce them.
    report.late_votes = stats["late"]
    report.declined_dispatches = stats["declined"]
    report.votes_rejected = dict(engine.votes_rejected)
    if output_dir is not None:
        write_report_files(Path(output_dir), report, engine, truth, csv_only=csv_only)
    return report, engine, truth


def build_report(engine: ModerationEngine, truth: dict, seed: int) -> SimReport:
    """Metrics over engine state; everything here is log-derivable, so a
    replayed engine produces the identical report."""
    report = SimReport(seed=seed)
    report.votes_accepted = engine.votes_accepted

    for v in engine.videos.values():
        report.videos_total += 1
        report.videos_by_status[v.status] = report.videos_by_status.get(v.status, 0) + 1

    correct = wrong = 0
    for s in engine.segments.values():
        if s.is_gold:
            if s.votes:
                report.gold_answered += 1
            continue
        report.segments_total += 1
        report.segments_by_verdict[s.verdict] = report.segments_by_verdict.get(s.verdict, 0) + 1
        t = truth.get(s.segment_id)
        if t is not None and s.is_terminal:
            key = f"{t}:{s.verdict}"
            report.confusion[key] = report.confusion.get(key, 0) + 1
            if (t == LABEL_SAFE and s.verdict == VERDICT_YES) or (t == LABEL_UNSAFE and s.verdict == VERDICT_NO):
                correct += 1
            else:
                wrong += 1
    if correct + wrong:
        report.segment_accuracy = correct / (correct + wrong)

    tp = fp = fn = 0
    for v in engine.videos.values():
        video_truth_unsafe = any(truth.get(sid) == LABEL_UNSAFE for sid in v.segments)
        predicted_unsafe = v.status in (VIDEO_UNSAFE, "unresolved")  # unresolved publishes as not-safe
        if v.status in ("pending", "in-review"):
            continue
        if predicted_unsafe and video_truth_unsafe:
            tp += 1
        elif predicted_unsafe:
            fp += 1
        elif video_truth_unsafe:
            fn += 1
    if tp + fp:
        report.video_precision_unsafe = tp / (tp + fp)
    if tp + fn:
        report.video_recall_unsafe = tp / (tp + fn)

    latencies = sorted(
        v.finalized_at - v.created_at for v in engine.videos.values() if v.finalized_at is not None
    )
    if latencies:
        report.latency_mean = sum(latencies) / len(latencies)
        report.latency_p95 = latencies[min(len(latencies) - 1, int(0.95 * len(latencies)))]

    per_votes = engine.worker_votes
    per_disp = engine.worker_dispatches
    report.gold_issued = sum(1 for s in engine.segments.values() if s.is_gold)
    report.dispatches = sum(per_disp.values())
    report.workers_total = len(engine.workers)
    report.workers_active = sum(1 for wid in engine.workers if per_disp.get(wid, 0) > 0)

    for wid, w in engine.workers.items():
        report.worker_rows.append(
            {
                "worker_id": wid,
                "identity_class": w.identity_class,
                "locale": w.locale,
                "credits": w.credits,
                "accuracy_estimate": round(w.accuracy, 6),
                "bias_flag": w.bias_flag,
                "dispatches": per_disp.get(wid, 0),
                "votes": per_votes.get(wid, 0),
                "gold_answered": w.gold_safe_seen + w.gold_unsafe_seen,
            }
        )
    return report


def format_summary(report: SimReport) -> str:
    def fmt(x) -> str:
        return "n/a" if x is None else f"{x:.6f}"

    lines = [
        "crowd moderation simulation report",
        "==================================",
        f"seed: {report.seed}",
        "",
        f"videos: {report.videos_total} total, by status: "
        + ", ".join(f"{k}={v}" for k, v in sorted(report.videos_by_status.items())),
        f"segments: {report.segments_total} total, by verdict: "
        + ", ".join(f"{k}={v}" for k, v in sorted(report.segments_by_verdict.items())),
        f"segment confusion (truth:verdict): "
        + (", ".join(f"{k}={v}" for k, v in sorted(report.confusion.items())) or "n/a"),
        f"segment accuracy: {fmt(report.segment_accuracy)}",
        f"video precision on unsafe: {fmt(report.video_precision_unsafe)}",
        f"video recall on unsafe: {fmt(report.video_recall_unsafe)}",
        f"decision latency: mean={fmt(report.latency_mean)} s, p95={fmt(report.latency_p95)} s",
        "",
        f"votes accepted: {report.votes_accepted}",
        f"dispatch slots: {report.dispatches}",
        f"gold tasks issued: {report.gold_issued}, answered: {report.gold_answered}",
        f"worker utilization: {report.utilization():.6f} "
        f"({report.workers_active}/{report.workers_total} active)",
        "",
        "per-worker outcomes",
        "-------------------",
    ]
    for row in report.worker_rows:
        lines.append(
            f"{row['worker_id']}: {row['identity_class']}, {row['locale']}, "
            f"credits={row['credits']}, acc~{row['accuracy_estimate']}, bias={row['bias_flag']}, "
            f"dispatches={row['dispatches']}, votes={row['votes']}, gold={row['gold_answered']}"
        )
    return "\n".join(lines) + "\n"


def write_report_files(
    out: Path,
    report: SimReport,
    engine: ModerationEngine,
    truth: dict,
    csv_only: bool = False,
) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if not csv_only:
        (out / "summary.txt").write_text(format_summary(report), encoding="utf-8")

    with (out / "truth.csv").open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["segment_id", "truth"])
        for sid in sorted(truth):
            wr.writerow([sid, truth[sid]])

    with (out / "segments.csv").open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["segment_id", "video_id", "start", "end", "truth", "verdict", "votes", "rounds"])
        for sid in sorted(engine.segments):
            s = engine.segments[sid]
            if s.is_gold:
                continue
            wr.writerow(
                [sid, s.video_id, s.start, s.end, truth.get(sid, ""), s.verdict, len(s.votes), s.dispatch_round]
            )

    with (out / "videos.csv").open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["video_id", "duration", "locale", "status", "created_at", "finalized_at", "latency"])
        for vid in sorted(engine.videos):
            v = engine.videos[vid]
            latency = "" if v.finalized_at is None else v.finalized_at - v.created_at
            wr.writerow([vid, v.total_duration, v.locale, v.status, v.created_at, v.finalized_at or "", latency])

    with (out / "workers.csv").open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(
            ["worker_id", "identity_class", "locale", "credits", "accuracy_estimate", "bias_flag", "dispatches", "votes", "gold_answered"]
        )
        for row in report.worker_rows:
            wr.writerow([row[k] for k in ("worker_id", "identity_class", "locale", "credits", "accuracy_estimate", "bias_flag", "dispatches", "votes", "gold_answered")])


# ---------------------------------------------------------------- presets


def _mixed_workers(
    count: int,
    rng: random.Random,
    signed_fraction: float = 0.7,
    accuracy_mean: float = 0.8,
    accuracy_sd: float = 0.05,
    yes_bias_fraction: float = 0.0,
    availability: float = 0.95,
    latency_mu_log: float = math.log(30.0),
    latency_sigma_log: float = 0.8,
    locales: dict | None = None,
) -> list[SimWorker]:
    locales = locales or {"en-US": 0.6, "en-GB": 0.2, "hi-IN": 0.2}
    out = []
    for i in range(count):
        acc = min(0.99, max(0.51, rng.gauss(accuracy_mean, accuracy_sd)))
        bias = 1.0 if rng.random() < yes_bias_fraction else 0.0
        out.append(
            SimWorker(
                worker_id=f"w{i:04d}",
                identity_class="signed" if rng.random() < signed_fraction else "unsigned",
                locale=sample_locale(locales, rng),
                model=SimWorkerModel(
                    true_accuracy=acc,
                    yes_bias=bias,
                    latency_mu_log=latency_mu_log,
                    latency_sigma_log=latency_sigma_log,
                    availability=availability,
                ),
            )
        )
    return out


def _default_gold_bank(n: int = 20) -> list[GoldItem]:
    return [
        GoldItem(gold_id=f"gold{i:03d}", label=LABEL_SAFE if i % 2 == 0 else LABEL_UNSAFE)
        for i in range(n)
    ]


def preset(name: str, seed: int = 0) -> tuple[PipelineConfig, Scenario]:
    """Named scenario bundles. Worker rosters are derived from the seed."""
    from .assigner import AssignmentPolicy
    from .judgment import JudgmentPolicy, WEIGHTING_UNIFORM
    from .segmenter import SegmentationPolicy

    rng = random.Random(seed ^ 0x5EED)
    if name == "desk":
        config = PipelineConfig(
            segmentation=SegmentationPolicy(tau=140.0),
            assignment=AssignmentPolicy(quorum_m=5, cooldown=10.0, gold_injection_rate=0.1),
            judgment=JudgmentPolicy(),
            mode="simulation",
        )
        scenario = Scenario(
            stream=SimStreamModel(
                video_arrival_rate=0.05,
                duration_dist={"kind": "uniform", "low": 60.0, "high": 600.0},
                unsafe_segment_rate=0.1,
            ),
            workers=_mixed_workers(50, rng, yes_bias_fraction=0.04, latency_mu_log=math.log(10.0)),
            horizon=4000.0,
            max_videos=100,
            gold_bank=_default_gold_bank(),
        )
        return config, scenario
    if name == "survey":
        # Viewer-survey operating point: 140 s minimum segments and a 37 min
        # gap between successive assignments to one worker. Workers in a pool
        # this size rarely repeat, so accuracy windows stay empty; uniform
        # majority is the appropriate rule (log-odds needs warm windows).
        config = PipelineConfig(
            segmentation=SegmentationPolicy(tau=140.0),
            assignment=AssignmentPolicy(quorum_m=5, cooldown=2220.0, gold_injection_rate=0.05),
            judgment=JudgmentPolicy(weighting=WEIGHTING_UNIFORM, quorum_timeout=300.0),
            mode="simulation",
        )
        scenario = Scenario(
            stream=SimStreamModel(
                video_arrival_rate=1.0 / 60.0,
                duration_dist={"kind": "uniform", "low": 140.0, "high": 560.0},
                unsafe_segment_rate=0.08,
            ),
            workers=_mixed_workers(1500, rng, availability=0.8),
            horizon=7200.0,
            max_videos=60,
            gold_bank=_default_gold_bank(),
        )
        return config, scenario
    if name == "youtube-scale":
        # Illustrative load preset sized from public platform statistics
        # (hours of video uploaded per second); not an acceptance target.
        # Uniform weighting for the same cold-pool reason as `survey`.
        config = PipelineConfig(
            segmentation=SegmentationPolicy(tau=140.0),
            assignment=AssignmentPolicy(quorum_m=3, cooldown=60.0, gold_injection_rate=0.02),
            judgment=JudgmentPolicy(weighting=WEIGHTING_UNIFORM, quorum_timeout=180.0),
            mode="simulation",
        )
        scenario = Scenario(
            stream=SimStreamModel(
                video_arrival_rate=60.0,
                duration_dist={"kind": "lognormal", "mu": math.log(300.0), "sigma": 0.6},
                unsafe_segment_rate=0.02,
            ),
            workers=_mixed_workers(8000, rng, availability=0.6),
            horizon=120.0,
            max_videos=600,
            gold_bank=_default_gold_bank(40),
        )
        return config, scenario
    raise ValueError(f"unknown preset {name!r} (expected desk, survey, or youtube-scale)")
