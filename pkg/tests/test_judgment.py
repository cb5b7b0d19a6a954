import math
import random
from itertools import product

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdgate.judgment import (
    JudgmentPolicy,
    log_odds_weight,
    majority_vote,
    update_accuracy,
    update_bias,
    verdict_from_weights,
    weighted_verdict,
)
from crowdgate.model import Vote, WorkerProfile

from oracles import brute_force_majority, brute_force_weighted


def votes_from(opinions):
    return [Vote(f"x{i}", "s", f"w{i}", o, 0.0) for i, o in enumerate(opinions)]


def worker():
    return WorkerProfile("w", "signed", "en-US")


class TestMajority:
    def test_strict_majority_yes(self):
        assert majority_vote(votes_from(["yes", "yes", "no"])) == "yes"

    def test_tie_rejects(self):
        assert majority_vote(votes_from(["yes", "no"])) == "no"

    def test_strict_majority_no(self):
        assert majority_vote(votes_from(["no", "no", "no", "yes", "yes"])) == "no"

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            majority_vote([])

    @given(st.lists(st.sampled_from(["yes", "no"]), min_size=1, max_size=15))
    def test_matches_brute_force(self, opinions):
        assert majority_vote(votes_from(opinions)) == brute_force_majority(opinions)


class TestWeightedVerdict:
    def test_equal_accuracies_reduce_to_majority(self):
        vs = votes_from(["yes", "yes", "no"])
        verdict, _ = weighted_verdict(vs, {v.worker_id: 0.7 for v in vs}, JudgmentPolicy())
        assert verdict == "yes"

    def test_one_strong_no_outweighs_two_weak_yes(self):
        # ln 9 ~ 2.197 on the no side vs 2 * ln 1.5 ~ 0.811 on the yes side
        vs = votes_from(["no", "yes", "yes"])
        accs = {"w0": 0.9, "w1": 0.6, "w2": 0.6}
        verdict, weights = weighted_verdict(vs, accs, JudgmentPolicy())
        assert verdict == "no"
        assert weights["w0"] == pytest.approx(math.log(9.0))
        assert weights["w1"] == pytest.approx(math.log(1.5))

    def test_perfect_accuracy_clamped(self):
        assert log_odds_weight(1.0, 0.01) == pytest.approx(math.log(0.99 / 0.01))
        vs = votes_from(["yes"])
        _, weights = weighted_verdict(vs, {"w0": 1.0}, JudgmentPolicy())
        assert weights["w0"] == pytest.approx(math.log(99.0))

    def test_missing_accuracy_entry_rejected(self):
        with pytest.raises(KeyError):
            weighted_verdict(votes_from(["yes"]), {}, JudgmentPolicy())

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            weighted_verdict([], {}, JudgmentPolicy())

    def test_uniform_policy_ignores_accuracies(self):
        vs = votes_from(["yes", "yes", "no"])
        policy = JudgmentPolicy(weighting="uniform")
        verdict, weights = weighted_verdict(vs, {"w0": 0.1, "w1": 0.2, "w2": 0.99}, policy)
        assert verdict == "yes"
        assert set(weights.values()) == {1.0}

    @pytest.mark.parametrize("acc", [0.55, 0.6, 0.75, 0.8, 0.9, 0.99])
    def test_exhaustive_equivalence_with_majority(self, acc):
        # Every vote pattern up to 7 votes; informative equal accuracies.
        policy = JudgmentPolicy()
        for n in range(1, 8):
            for pattern in product(["yes", "no"], repeat=n):
                vs = votes_from(pattern)
                verdict, _ = weighted_verdict(vs, {v.worker_id: acc for v in vs}, policy)
                assert verdict == majority_vote(vs)

    @given(
        st.lists(
            st.tuples(st.sampled_from(["yes", "no"]), st.floats(min_value=0.5, max_value=0.999)),
            min_size=1,
            max_size=9,
        )
    )
    @settings(max_examples=300)
    def test_matches_brute_force(self, rows):
        opinions = [o for o, _ in rows]
        accs = [a for _, a in rows]
        vs = votes_from(opinions)
        verdict, _ = weighted_verdict(vs, {v.worker_id: a for v, a in zip(vs, accs)}, JudgmentPolicy())
        assert verdict == brute_force_weighted(opinions, accs)


class TestMonotonicityAndScale:
    def test_flipping_no_to_yes_never_flips_yes_to_no_exhaustive(self):
        policy = JudgmentPolicy()
        for n in range(1, 8):
            for accs in ([0.8] * n, [0.5 + 0.4 * i / max(1, n - 1) for i in range(n)]):
                for pattern in product(["yes", "no"], repeat=n):
                    vs = votes_from(pattern)
                    table = {v.worker_id: a for v, a in zip(vs, accs)}
                    before, _ = weighted_verdict(vs, table, policy)
                    for i, o in enumerate(pattern):
                        if o == "no":
                            flipped = list(pattern)
                            flipped[i] = "yes"
                            after, _ = weighted_verdict(votes_from(flipped), table, policy)
                            assert not (before == "yes" and after == "no")

    def test_scale_invariance_random(self):
        rng = random.Random(5)
        for _ in range(2000):
            n = rng.randint(1, 9)
            opinions = [rng.choice(["yes", "no"]) for _ in range(n)]
            weights = [rng.uniform(0.0, 5.0) for _ in range(n)]
            c = rng.uniform(1e-3, 1e3)
            assert verdict_from_weights(opinions, weights) == verdict_from_weights(
                opinions, [w * c for w in weights]
            )


class TestAccuracyWindow:
    def test_window_ratio(self):
        w = worker()
        for agreed in (True, False, True, True):
            update_accuracy(w, agreed, JudgmentPolicy())
        assert w.accuracy == pytest.approx(0.75)

    def test_new_worker_prior(self):
        assert worker().accuracy == 0.5

    def test_fifo_eviction(self):
        w = worker()
        policy = JudgmentPolicy(window=3)
        for agreed in (True, True, True, False):
            update_accuracy(w, agreed, policy)
        assert list(w.agreement_window) == [True, True, False]
        assert w.accuracy == pytest.approx(2 / 3)

    @given(st.lists(st.booleans(), min_size=1, max_size=200), st.integers(min_value=1, max_value=60))
    def test_window_bounded_and_accuracy_in_range(self, outcomes, window):
        w = worker()
        policy = JudgmentPolicy(window=window)
        for agreed in outcomes:
            update_accuracy(w, agreed, policy)
            assert len(w.agreement_window) <= window
            assert 0.0 <= w.accuracy <= 1.0
        tail = outcomes[-window:]
        assert w.accuracy == pytest.approx(sum(tail) / len(tail))


class TestBias:
    def test_all_yes_on_mixed_gold_flags_yes_biased(self):
        w = worker()
        policy = JudgmentPolicy(min_gold_for_bias=10)
        for label in ["safe"] * 5 + ["unsafe"] * 5:
            update_bias(w, label, "yes", policy)
        assert w.bias_flag == "yes-biased"
        assert w.gold_unsafe_yes == w.gold_unsafe_seen == 5

    def test_perfect_worker_stays_unflagged(self):
        w = worker()
        policy = JudgmentPolicy(min_gold_for_bias=20)
        for i in range(20):
            label = "safe" if i % 2 == 0 else "unsafe"
            update_bias(w, label, "yes" if label == "safe" else "no", policy)
        assert w.bias_flag == "none"

    def test_insufficient_gold_keeps_flag_none(self):
        w = worker()
        policy = JudgmentPolicy(min_gold_for_bias=20)
        for _ in range(8):
            update_bias(w, "unsafe", "yes", policy)
        assert w.bias_flag == "none"

    def test_flag_can_clear_after_improvement(self):
        w = worker()
        policy = JudgmentPolicy(min_gold_for_bias=10)
        for _ in range(10):
            update_bias(w, "unsafe", "yes", policy)
        assert w.bias_flag == "yes-biased"
        for _ in range(30):
            update_bias(w, "unsafe", "no", policy)
        assert w.bias_flag == "none"

    def test_counters_never_exceed_seen(self):
        w = worker()
        rng = random.Random(3)
        policy = JudgmentPolicy()
        for _ in range(200):
            update_bias(w, rng.choice(["safe", "unsafe"]), rng.choice(["yes", "no"]), policy)
            assert w.gold_safe_yes <= w.gold_safe_seen
            assert w.gold_unsafe_yes <= w.gold_unsafe_seen

    def test_missing_label_rejected(self):
        with pytest.raises(ValueError):
            update_bias(worker(), "unknown", "yes", JudgmentPolicy())


class TestPolicyValidation:
    @pytest.mark.parametrize(
        "kw",
        [
            {"window": 0},
            {"weighting": "magic"},
            {"accuracy_clamp_eps": 0.0},
            {"accuracy_clamp_eps": 0.5},
            {"tie_break": "yes"},
            {"bias_threshold": 0.5},
            {"bias_threshold": 1.5},
            {"min_gold_for_bias": 0},
            {"quorum_timeout": 0.0},
        ],
    )
    def test_bad_values_rejected(self, kw):
        with pytest.raises(ValueError):
            JudgmentPolicy(**kw)
