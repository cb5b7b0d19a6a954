#!/usr/bin/env python3
"""Independent oracle computations backing the frozen constants in the test suite.

Everything here is brute force or closed form on purpose: no imports from
crowdgate, so these numbers cannot inherit a bug from the code they check.
Run it to regenerate the constants cited in tests/oracles.py and
tests/test_acceptance.py.
"""

from fractions import Fraction
from itertools import product
from math import comb, log, sqrt


def majority_accuracy_exact(m: int, p: Fraction) -> Fraction:
    """P(strict majority of m iid voters is correct), no ties for odd m."""
    return sum(
        Fraction(comb(m, k)) * p**k * (1 - p) ** (m - k)
        for k in range(m // 2 + 1, m + 1)
    )


def rule_accuracy_by_enumeration(accs, rule) -> Fraction:
    """Exact accuracy of a binary decision rule over all 2^n vote patterns.

    Votes are 'correct'/'wrong' symmetric: voter i is correct with prob accs[i]
    regardless of the true class, so one enumeration covers both truths.
    `rule` maps a tuple of booleans (True = voter correct) to True when the
    aggregate verdict lands on the correct side.
    """
    total = Fraction(0)
    for pattern in product([True, False], repeat=len(accs)):
        likelihood = Fraction(1)
        for ok, a in zip(pattern, accs):
            likelihood *= a if ok else (1 - a)
        if rule(pattern):
            total += likelihood
    return total


def majority_rule(pattern) -> bool:
    ups = sum(pattern)
    return ups > len(pattern) - ups  # tie -> wrong side counts as incorrect


def log_odds_rule_factory(accs, eps=0.01):
    lams = [log(min(max(float(a), eps), 1 - eps) / (1 - min(max(float(a), eps), 1 - eps))) for a in accs]

    def rule(pattern) -> bool:
        correct = sum(l for ok, l in zip(pattern, lams) if ok)
        wrong = sum(l for ok, l in zip(pattern, lams) if not ok)
        return correct > wrong  # tie resolves against, conservative

    return rule


def binomial_cdf(k: int, n: int, p: Fraction) -> Fraction:
    return sum(Fraction(comb(n, i)) * p**i * (1 - p) ** (n - i) for i in range(0, k + 1))


def main() -> None:
    # --- quorum-of-5 majority with homogeneous accuracy 0.8 ---
    p = Fraction(4, 5)
    acc5 = majority_accuracy_exact(5, p)
    print(f"majority(m=5, a=0.8) exact = {acc5} = {float(acc5):.6f}")

    # --- heterogeneous quorum {0.9, 0.6, 0.6, 0.55, 0.55} ---
    accs = [Fraction(9, 10), Fraction(3, 5), Fraction(3, 5), Fraction(11, 20), Fraction(11, 20)]
    uni = rule_accuracy_by_enumeration(accs, majority_rule)
    wtd = rule_accuracy_by_enumeration(accs, log_odds_rule_factory(accs))
    print(f"uniform majority, mixed accs   = {uni} = {float(uni):.6f}")
    print(f"log-odds weighting, mixed accs = {wtd} = {float(wtd):.6f}")
    assert wtd >= uni

    # --- gold injection count: Binomial(10_000, 0.1), 99% central interval ---
    n, rate = 10_000, Fraction(1, 10)
    mean = n * rate
    sd = sqrt(n * float(rate) * (1 - float(rate)))
    lo, hi = float(mean) - 2.576 * sd, float(mean) + 2.576 * sd
    print(f"gold count 99% interval ~ [{lo:.1f}, {hi:.1f}]  (frozen bound [900, 1100] is wider)")
    assert 900 < lo and hi < 1100

    # --- bias-rate estimate: P(|X/200 - 0.9| <= 0.05), X ~ Binomial(200, 0.9) ---
    n, p = 200, Fraction(9, 10)
    # |X/200 - 0.9| <= 0.05  <=>  170 <= X <= 190
    prob = binomial_cdf(190, n, p) - binomial_cdf(169, n, p)
    print(f"P(|p_hat - 0.9| <= 0.05 at n=200) = {float(prob):.6f}  (>= 0.95 required)")
    assert float(prob) >= 0.95

    # --- votes needed before 20 gold exposures are near-certain at rate 0.1 ---
    for votes in (200, 300, 400):
        p_flag = 1 - binomial_cdf(19, votes, Fraction(1, 10))
        print(f"P(Binomial({votes}, 0.1) >= 20) = {float(p_flag):.6f}")


if __name__ == "__main__":
    main()
