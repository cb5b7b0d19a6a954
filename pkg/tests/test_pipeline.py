import io
import json
import random
import threading
from concurrent.futures import ThreadPoolExecutor

import pytest

from crowdgate.assigner import AssignmentPolicy, GoldItem
from crowdgate.eventlog import EventLogWriter, LogError, read_log
from crowdgate.judgment import JudgmentPolicy
from crowdgate.pipeline import ModerationEngine, PipelineConfig, RequestError
from crowdgate.segmenter import SegmentationPolicy


def make_engine(
    quorum=3,
    cooldown=0.0,
    gold_rate=0.0,
    weighting="log_odds",
    quorum_timeout=120.0,
    max_retries=2,
    seed=1,
    bank=(),
):
    config = PipelineConfig(
        segmentation=SegmentationPolicy(tau=140.0),
        assignment=AssignmentPolicy(
            quorum_m=quorum, cooldown=cooldown, gold_injection_rate=gold_rate, max_retries=max_retries
        ),
        judgment=JudgmentPolicy(weighting=weighting, quorum_timeout=quorum_timeout),
    )
    buf = io.StringIO()
    writer = EventLogWriter(buf, config.doc(bank), seed)
    engine = ModerationEngine(config, writer, rng=random.Random(seed), gold_bank=list(bank))
    return engine, buf


def add_workers(engine, n, identity="signed", locale="en-US", prefix="w"):
    for i in range(n):
        engine.register_worker(f"{prefix}{i}", identity, locale, 0.0)
    return [f"{prefix}{i}" for i in range(n)]


class TestIngest:
    def test_two_segment_video_opens_in_review(self):
        engine, _ = make_engine()
        add_workers(engine, 5)
        result = engine.ingest_video("v1", 280.0, "en-US", now=1.0)
        assert result["segments"] == ["v1/s0", "v1/s1"]
        assert engine.videos["v1"].status == "in-review"
        assert all(engine.segments[s].verdict == "open" for s in result["segments"])

    def test_short_video_single_segment(self):
        engine, _ = make_engine()
        add_workers(engine, 5)
        result = engine.ingest_video("v1", 100.0, "en-US", now=1.0)
        assert result["segments"] == ["v1/s0"]
        assert engine.segments["v1/s0"].is_short

    def test_duplicate_id_rejected_without_events(self):
        engine, buf = make_engine()
        add_workers(engine, 5)
        engine.ingest_video("v1", 280.0, "en-US", now=1.0)
        before = buf.getvalue()
        with pytest.raises(RequestError) as err:
            engine.ingest_video("v1", 140.0, "en-US", now=2.0)
        assert err.value.code == "duplicate"
        assert buf.getvalue() == before

    def test_invalid_duration_rejected(self):
        engine, _ = make_engine()
        with pytest.raises(RequestError) as err:
            engine.ingest_video("v1", -3.0, "en-US", now=1.0)
        assert err.value.code == "invalid"

    def test_dispatch_assigns_quorum_and_updates_cooldown_clock(self):
        engine, _ = make_engine(quorum=3)
        add_workers(engine, 5)
        engine.ingest_video("v1", 140.0, "en-US", now=1.0)
        seg = engine.segments["v1/s0"]
        assert len(seg.assigned_workers) == 3
        for wid in seg.assigned_workers:
            assert engine.workers[wid].last_task_at == 1.0

    def test_shortfall_marked_when_pool_small(self):
        engine, _ = make_engine(quorum=5)
        add_workers(engine, 2)
        engine.ingest_video("v1", 140.0, "en-US", now=1.0)
        seg = engine.segments["v1/s0"]
        assert seg.shortfall and len(seg.assigned_workers) == 2


class TestVoting:
    def test_quorum_vote_finalizes_in_same_call(self):
        engine, _ = make_engine(quorum=3, weighting="uniform")
        workers = add_workers(engine, 3)
        engine.ingest_video("v1", 140.0, "en-US", now=1.0)
        engine.submit_vote("v1/s0", workers[0], "yes", 2.0)
        engine.submit_vote("v1/s0", workers[1], "yes", 3.0)
        assert engine.segments["v1/s0"].verdict == "open"
        ack = engine.submit_vote("v1/s0", workers[2], "no", 4.0)
        assert engine.segments["v1/s0"].verdict == "yes"
        assert engine.videos["v1"].status == "safe"
        assert any(a["action"] == "video_finalized" for a in ack["actions"])

    def test_duplicate_vote_rejected_log_unchanged(self):
        engine, buf = make_engine(quorum=3)
        workers = add_workers(engine, 3)
        engine.ingest_video("v1", 140.0, "en-US", now=1.0)
        engine.submit_vote("v1/s0", workers[0], "yes", 2.0)
        before = buf.getvalue()
        with pytest.raises(RequestError) as err:
            engine.submit_vote("v1/s0", workers[0], "no", 3.0)
        assert err.value.code == "duplicate"
        assert buf.getvalue() == before

    def test_vote_after_verdict_rejected_as_terminal(self):
        engine, _ = make_engine(quorum=1)
        workers = add_workers(engine, 2)
        engine.ingest_video("v1", 140.0, "en-US", now=1.0)
        engine.submit_vote("v1/s0", workers[0], "yes", 2.0)
        with pytest.raises(RequestError) as err:
            engine.submit_vote("v1/s0", workers[1], "yes", 3.0)
        assert err.value.code == "terminal"

    def test_unassigned_worker_rejected(self):
        engine, _ = make_engine(quorum=1)
        add_workers(engine, 1)
        engine.register_worker("outsider", "unsigned", "en-US", 0.0)
        engine.ingest_video("v1", 140.0, "en-US", now=1.0)
        with pytest.raises(RequestError) as err:
            engine.submit_vote("v1/s0", "outsider", "yes", 2.0)
        assert err.value.code == "unassigned"

    def test_votes_never_exceed_quorum(self):
        engine, _ = make_engine(quorum=3)
        workers = add_workers(engine, 6)
        engine.ingest_video("v1", 140.0, "en-US", now=1.0)
        seg = engine.segments["v1/s0"]
        for wid in list(seg.assigned_workers):
            engine.submit_vote("v1/s0", wid, "yes", 2.0)
        assert len(seg.votes) == seg.quorum_target

    def test_weights_frozen_only_at_finalization(self):
        engine, _ = make_engine(quorum=2)
        workers = add_workers(engine, 2)
        engine.ingest_video("v1", 140.0, "en-US", now=1.0)
        engine.submit_vote("v1/s0", workers[0], "yes", 2.0)
        seg = engine.segments["v1/s0"]
        assert seg.votes[0].weight_at_finalization is None
        assert seg.provisional is not None
        engine.submit_vote("v1/s0", workers[1], "yes", 3.0)
        assert all(v.weight_at_finalization is not None for v in seg.votes)


class TestTick:
    def test_noop_tick(self):
        engine, _ = make_engine()
        assert engine.tick(100.0) == []

    def test_deadline_finalizes_on_available_votes(self):
        engine, _ = make_engine(quorum=5, quorum_timeout=120.0, weighting="uniform")
        workers = add_workers(engine, 5)
        engine.ingest_video("v1", 140.0, "en-US", now=0.0)
        for wid, opinion in zip(workers[:3], ["yes", "yes", "no"]):
            engine.submit_vote("v1/s0", wid, opinion, 10.0)
        actions = engine.tick(120.0)
        assert engine.segments["v1/s0"].verdict == "yes"
        assert any(a["action"] == "segment_finalized" for a in actions)

    def test_clock_regression_rejected(self):
        engine, _ = make_engine()
        engine.tick(50.0)
        with pytest.raises(ValueError):
            engine.tick(49.0)

    def test_zero_votes_retries_then_unresolved(self):
        engine, _ = make_engine(quorum=2, cooldown=40.0, quorum_timeout=100.0, max_retries=2)
        add_workers(engine, 2)
        engine.ingest_video("v1", 140.0, "en-US", now=0.0)
        seg = engine.segments["v1/s0"]
        assert seg.retries_left == 2
        # nobody votes; first deadline at 100, retry waits cooldown/4 = 10 more
        engine.tick(100.0)
        assert seg.verdict == "open" and seg.dispatch_round == 1
        engine.tick(110.0)
        assert seg.dispatch_round == 2 and seg.retries_left == 1
        engine.tick(220.0)  # second deadline (210) + wait (10) both passed
        assert seg.dispatch_round == 3 and seg.retries_left == 0
        engine.tick(330.0)
        assert seg.verdict == "unresolved"
        assert engine.videos["v1"].status == "unresolved"

    def test_no_eligible_workers_empty_rounds_until_unresolved(self):
        engine, _ = make_engine(quorum=2, cooldown=400.0, quorum_timeout=100.0, max_retries=1)
        engine.ingest_video("v1", 140.0, "en-US", now=0.0)  # zero workers registered
        seg = engine.segments["v1/s0"]
        assert seg.assigned_workers == set() and seg.shortfall
        engine.tick(100.0)  # empty round's deadline = cooldown/4 = 100
        assert seg.dispatch_round == 2 and seg.retries_left == 0
        engine.tick(200.0)
        assert seg.verdict == "unresolved"

    def test_straggler_vote_between_deadline_and_retry_saves_round(self):
        engine, _ = make_engine(quorum=3, cooldown=40.0, quorum_timeout=100.0)
        workers = add_workers(engine, 3)
        engine.ingest_video("v1", 140.0, "en-US", now=0.0)
        engine.tick(105.0)  # deadline passed, zero votes, retry due at 110
        assert engine.segments["v1/s0"].verdict == "open"
        engine.submit_vote("v1/s0", workers[0], "no", 106.0)
        engine.tick(110.0)
        assert engine.segments["v1/s0"].verdict == "no"


class TestQueries:
    def test_decision_safe(self):
        engine, _ = make_engine(quorum=1, weighting="uniform")
        workers = add_workers(engine, 1)
        engine.ingest_video("v1", 280.0, "en-US", now=0.0)
        engine.submit_vote("v1/s0", workers[0], "yes", 1.0)
        engine.tick(0.0)
        decision = engine.query_decision("v1")
        assert decision["status"] == "in-review"
        engine.submit_vote("v1/s1", workers[0], "yes", 2.0)
        assert engine.query_decision("v1")["status"] == "safe"

    def test_early_exit_visible_with_open_segments(self):
        engine, _ = make_engine(quorum=1)
        workers = add_workers(engine, 1)
        engine.ingest_video("v1", 280.0, "en-US", now=0.0)
        engine.submit_vote("v1/s0", workers[0], "no", 1.0)
        decision = engine.query_decision("v1")
        assert decision["status"] == "unsafe"
        verdicts = {s["segment_id"]: s["verdict"] for s in decision["segments"]}
        assert verdicts == {"v1/s0": "no", "v1/s1": "open"}

    def test_unknown_video_not_found(self):
        engine, _ = make_engine()
        with pytest.raises(RequestError) as err:
            engine.query_decision("nope")
        assert err.value.code == "not_found"

    def test_next_task_worker_pull_order(self):
        engine, _ = make_engine(quorum=1, cooldown=0.0)
        workers = add_workers(engine, 1)
        engine.ingest_video("v1", 280.0, "en-US", now=0.0)
        task = engine.next_task(workers[0])
        assert task["segment_id"] == "v1/s0"
        assert set(task) == {"segment_id", "video_id", "interval", "deadline"}
        engine.submit_vote("v1/s0", workers[0], "yes", 1.0)
        assert engine.next_task(workers[0])["segment_id"] == "v1/s1"
        engine.submit_vote("v1/s1", workers[0], "yes", 2.0)
        assert engine.next_task(workers[0]) is None


class TestEarlyExitSoundness:
    def test_status_frozen_after_unsafe(self):
        engine, _ = make_engine(quorum=1)
        workers = add_workers(engine, 1)
        engine.ingest_video("v1", 280.0, "en-US", now=0.0)
        engine.submit_vote("v1/s0", workers[0], "no", 1.0)
        assert engine.videos["v1"].status == "unsafe"
        finalized_at = engine.videos["v1"].finalized_at
        engine.submit_vote("v1/s1", workers[0], "yes", 2.0)  # remaining segment still judged
        assert engine.segments["v1/s1"].verdict == "yes"
        assert engine.videos["v1"].status == "unsafe"
        assert engine.videos["v1"].finalized_at == finalized_at


class TestGoldFlow:
    def bank(self):
        return [GoldItem("gold-a", "unsafe"), GoldItem("gold-b", "safe")]

    def test_gold_injection_creates_covert_task(self):
        engine, _ = make_engine(quorum=1, gold_rate=1.0, bank=self.bank())
        workers = add_workers(engine, 1)
        result = engine.ingest_video("v1", 140.0, "en-US", now=0.0)
        golds = result["actions"][0]["gold"]
        assert len(golds) == 1
        task = engine.next_task(workers[0])
        gold_task = engine.segments[golds[0]["task_id"]]
        assert gold_task.is_gold and gold_task.quorum_target == 1
        # the pulled view carries no gold markers at all
        assert set(task) == {"segment_id", "video_id", "interval", "deadline"}

    def test_gold_vote_feeds_bias_not_accuracy_or_credits(self):
        engine, _ = make_engine(quorum=1, gold_rate=1.0, bank=[GoldItem("gold-a", "unsafe")])
        workers = add_workers(engine, 1)
        result = engine.ingest_video("v1", 140.0, "en-US", now=0.0)
        gold_id = result["actions"][0]["gold"][0]["task_id"]
        engine.submit_vote(gold_id, workers[0], "yes", 1.0)
        w = engine.workers[workers[0]]
        assert w.gold_unsafe_seen == 1 and w.gold_unsafe_yes == 1
        assert len(w.agreement_window) == 0
        assert w.credits == 0
        assert engine.videos["v1"].status == "in-review"

    def test_gold_never_changes_video_verdicts(self):
        # identical seeds and vote behavior, gold on vs off: same video outcomes
        outcomes = {}
        for rate in (0.0, 0.5):
            bank = self.bank() if rate else ()
            engine, _ = make_engine(quorum=2, gold_rate=rate, bank=bank, seed=3)
            workers = add_workers(engine, 4)
            for v in range(6):
                engine.ingest_video(f"v{v}", 140.0, "en-US", now=float(v))
                seg = engine.segments[f"v{v}/s0"]
                for wid in sorted(seg.assigned_workers):
                    opinion = "no" if (v + int(wid[1:])) % 3 == 0 else "yes"
                    engine.submit_vote(f"v{v}/s0", wid, opinion, float(v) + 0.5)
            outcomes[rate] = {vid: vc.status for vid, vc in engine.videos.items()}
        assert outcomes[0.0] == outcomes[0.5]

    def test_unanswered_gold_expires_silently(self):
        engine, _ = make_engine(quorum=1, gold_rate=1.0, bank=self.bank(), quorum_timeout=50.0)
        workers = add_workers(engine, 1)
        result = engine.ingest_video("v1", 140.0, "en-US", now=0.0)
        gold_id = result["actions"][0]["gold"][0]["task_id"]
        engine.tick(50.0)
        assert engine.segments[gold_id].verdict == "unresolved"
        w = engine.workers[workers[0]]
        assert w.gold_safe_seen + w.gold_unsafe_seen == 0


class TestCreditsAndAccuracy:
    def test_agreeing_voters_earn_credits_and_window_updates(self):
        engine, _ = make_engine(quorum=3, weighting="uniform")
        workers = add_workers(engine, 3)
        engine.ingest_video("v1", 140.0, "en-US", now=0.0)
        for wid, opinion in zip(workers, ["yes", "yes", "no"]):
            engine.submit_vote("v1/s0", wid, opinion, 1.0)
        assert engine.workers[workers[0]].credits == 1
        assert engine.workers[workers[2]].credits == 0
        assert engine.workers[workers[0]].accuracy == 1.0
        assert engine.workers[workers[2]].accuracy == 0.0


class TestCooldownInvariant:
    def test_no_two_open_assignments_within_cooldown(self):
        engine, _ = make_engine(quorum=2, cooldown=300.0)
        add_workers(engine, 4)
        times = [0.0, 100.0, 400.0, 701.0]
        for i, t in enumerate(times):
            engine.ingest_video(f"v{i}", 140.0, "en-US", now=t)
        # reconstruct assignment times per worker from the tasks
        seen: dict[str, list[float]] = {}
        for i, t in enumerate(times):
            for wid in engine.segments[f"v{i}/s0"].assigned_workers:
                seen.setdefault(wid, []).append(t)
        for stamps in seen.values():
            for a, b in zip(stamps, stamps[1:]):
                assert b - a >= 300.0


class TestReplay:
    def run_scripted(self, seed=11):
        engine, buf = make_engine(quorum=2, gold_rate=0.3, bank=[GoldItem("g", "unsafe")], seed=seed)
        workers = add_workers(engine, 4)
        engine.ingest_video("v1", 280.0, "en-US", now=1.0)
        engine.ingest_video("v2", 100.0, "en-US", now=2.0)
        rng = random.Random(seed)
        for sid in ("v1/s0", "v1/s1", "v2/s0"):
            seg = engine.segments[sid]
            for wid in sorted(seg.assigned_workers):
                engine.submit_vote(sid, wid, rng.choice(["yes", "no"]), 3.0)
        engine.tick(500.0)
        return engine, buf

    def test_empty_log_gives_empty_state(self):
        engine, buf = make_engine()
        replayed, warnings = ModerationEngine.replay(io.StringIO(buf.getvalue()))
        assert replayed.snapshot()["videos"] == {}
        assert warnings == []

    def test_replay_reproduces_live_state(self):
        engine, buf = self.run_scripted()
        replayed, _ = ModerationEngine.replay(io.StringIO(buf.getvalue()))
        assert replayed.snapshot() == engine.snapshot()

    def test_seq_gap_detected(self):
        _, buf = self.run_scripted()
        lines = buf.getvalue().splitlines()
        corrupted = lines[:3] + lines[4:]  # drop one record
        with pytest.raises(LogError, match="seq gap"):
            ModerationEngine.replay(iter(line + "\n" for line in corrupted))

    def test_torn_tail_tolerated_with_warning(self):
        _, buf = self.run_scripted()
        data = buf.getvalue() + '{"seq": 999, "kind": "vote_re'
        replayed, warnings = ModerationEngine.replay(io.StringIO(data), tolerate_torn_tail=True)
        assert len(warnings) == 1

    def test_prefix_plus_suffix_equals_live(self):
        engine, buf = self.run_scripted()
        lines = buf.getvalue().splitlines(keepends=True)
        header, events_all = lines[0], lines[1:]
        _, parsed, _ = read_log(iter(lines))
        parsed = list(parsed)
        live = engine.snapshot()
        for cut in range(0, len(parsed) + 1, max(1, len(parsed) // 7)):
            replayed, _ = ModerationEngine.replay(iter([header] + events_all[:cut]))
            replayed.apply_events(parsed[cut:])
            assert replayed.snapshot() == live


class TestConcurrentVotes:
    def test_exactly_once_accounting(self):
        n = 200
        engine, buf = make_engine(quorum=n, quorum_timeout=1e6)
        workers = add_workers(engine, n)
        engine.ingest_video("v1", 140.0, "en-US", now=0.0)

        barrier = threading.Barrier(32)

        def cast(wid):
            try:
                barrier.wait(timeout=5)
            except threading.BrokenBarrierError:
                pass
            engine.submit_vote("v1/s0", wid, "yes", 1.0)
            with pytest.raises(RequestError):  # the double submit must bounce
                engine.submit_vote("v1/s0", wid, "yes", 1.0)

        with ThreadPoolExecutor(max_workers=32) as pool:
            list(pool.map(cast, workers))

        received = sum(1 for line in buf.getvalue().splitlines()[1:] if json.loads(line)["kind"] == "vote_received")
        assert received == n
        assert engine.votes_accepted == n
        # the doubled submit that raced past quorum finalization bounces as
        # terminal instead of duplicate; every one of them must bounce
        assert sum(engine.votes_rejected.values()) == n
        assert len(engine.segments["v1/s0"].votes) == n
