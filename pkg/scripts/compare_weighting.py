#!/usr/bin/env python3
"""Compare uniform majority against log-odds weighting across accuracy mixes.

For each mix, simulates segment juries at the decision-rule level (true
accuracies known) and prints both empirical accuracies next to the exact
enumeration values. Writes a CSV when given an output path.

Usage: python scripts/compare_weighting.py [out.csv]
"""

import csv
import random
import sys
from fractions import Fraction
from itertools import product
from math import log

from crowdgate.judgment import JudgmentPolicy, majority_vote, weighted_verdict
from crowdgate.model import Vote
from crowdgate.sim import SimWorkerModel, sample_vote

MIXES = [
    (0.9, 0.6, 0.6, 0.55, 0.55),
    (0.8, 0.8, 0.8, 0.8, 0.8),
    (0.95, 0.55, 0.55, 0.55, 0.55),
    (0.7, 0.7, 0.7, 0.6, 0.6),
    (0.99, 0.51, 0.51),
]
N_SEGMENTS = 20_000


def exact_accuracy(accs, weighted: bool) -> float:
    lams = [log(min(max(a, 0.01), 0.99) / (1 - min(max(a, 0.01), 0.99))) for a in accs]
    total = Fraction(0)
    fracs = [Fraction(a).limit_denominator(10**6) for a in accs]
    for pattern in product([True, False], repeat=len(accs)):
        likelihood = Fraction(1)
        for ok, f in zip(pattern, fracs):
            likelihood *= f if ok else (1 - f)
        if weighted:
            good = sum(l for ok, l in zip(pattern, lams) if ok)
            bad = sum(l for ok, l in zip(pattern, lams) if not ok)
            hit = good > bad
        else:
            hit = sum(pattern) > len(pattern) - sum(pattern)
        if hit:
            total += likelihood
    return float(total)


def simulate(accs, rng) -> tuple[float, float]:
    policy = JudgmentPolicy()
    models = [SimWorkerModel(true_accuracy=a) for a in accs]
    table = {f"w{i}": a for i, a in enumerate(accs)}
    uni = wtd = 0
    for _ in range(N_SEGMENTS):
        truth = "unsafe" if rng.random() < 0.5 else "safe"
        correct = "no" if truth == "unsafe" else "yes"
        votes = [
            Vote(f"x{i}", "s", f"w{i}", sample_vote(m, truth, rng), 0.0)
            for i, m in enumerate(models)
        ]
        if majority_vote(votes) == correct:
            uni += 1
        if weighted_verdict(votes, table, policy)[0] == correct:
            wtd += 1
    return uni / N_SEGMENTS, wtd / N_SEGMENTS


def main() -> None:
    rng = random.Random(17)
    rows = []
    print(f"{'mix':<34} {'uniform':>9} {'exact':>9} {'weighted':>9} {'exact':>9}")
    for accs in MIXES:
        acc_u, acc_w = simulate(accs, rng)
        ex_u, ex_w = exact_accuracy(accs, False), exact_accuracy(accs, True)
        print(f"{str(accs):<34} {acc_u:>9.5f} {ex_u:>9.5f} {acc_w:>9.5f} {ex_w:>9.5f}")
        rows.append([accs, acc_u, ex_u, acc_w, ex_w])
    if len(sys.argv) > 1:
        with open(sys.argv[1], "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["mix", "uniform_sim", "uniform_exact", "weighted_sim", "weighted_exact"])
            wr.writerows(rows)
        print(f"wrote {sys.argv[1]}")


if __name__ == "__main__":
    main()
