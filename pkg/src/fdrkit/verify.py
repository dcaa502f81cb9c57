"""Brute-force oracles and randomized identity checks.

The oracle here is written independently of :mod:`fdrkit.core`: it sorts by
repeated minimum extraction, scans every k, and compares with integer
arithmetic on ``float.as_integer_ratio``.  Nothing from ``core`` is used to
compute an expected answer; ``core`` is only ever the thing being checked.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Callable, Iterator

import numpy as np

from . import core

__all__ = ["CheckReport", "bh_oracle", "grid_equivalence", "run_identity_suite"]


@dataclass
class CheckReport:
    check_name: str
    cases_run: int = 0
    failures: int = 0
    first_failure: str | None = None

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def record(self, ok: bool, case: Callable[[], str]) -> None:
        self.cases_run += 1
        if not ok:
            self.failures += 1
            if self.first_failure is None:
                self.first_failure = case()

    def to_dict(self) -> dict:
        return asdict(self)


def bh_oracle(p, alpha: float) -> set[int]:
    """Literal O(K^2) evaluation of ``max{k : K p_(k) / k <= alpha}``."""
    values = [float(v) for v in p]
    K = len(values)
    remaining = list(range(K))
    ranked = []
    while remaining:
        j = remaining[0]
        for i in remaining:
            if values[i] < values[j]:
                j = i
        ranked.append(j)
        remaining.remove(j)
    an, ad = float(alpha).as_integer_ratio()
    best = 0
    for k in range(1, K + 1):
        pn, pd = values[ranked[k - 1]].as_integer_ratio()
        # K * pn / pd / k <= an / ad
        if K * pn * ad <= an * k * pd:
            best = k
    return set(ranked[:best])


def grid_equivalence(
    max_K: int = 4,
    grid: tuple[float, ...] = tuple(i / 20 for i in range(21)),
    alphas: tuple[float, ...] = (0.05, 0.1, 0.25),
) -> CheckReport:
    """Compare core BH with the oracle on every vector over a value grid."""
    report = CheckReport("bh_oracle_grid")
    for K in range(1, max_K + 1):
        for p in itertools.product(grid, repeat=K):
            for alpha in alphas:
                got = core.bh_procedure(p, alpha).rejected
                report.record(got == bh_oracle(p, alpha), lambda: f"p={p}, alpha={alpha}")
    return report


# -- random case generation ---------------------------------------------------


def _random_alpha(rng: np.random.Generator) -> float:
    if rng.random() < 0.5:
        return float(rng.choice([0.01, 0.05, 0.1, 0.2, 0.25, 0.5]))
    return float(rng.uniform(0.005, 0.6))


def _random_pvalues(rng: np.random.Generator, K: int, alpha: float) -> list[float]:
    # mix continuous draws with grid multiples of alpha/K, zeros and ones to
    # reach tie and boundary branches
    out = []
    for _ in range(K):
        u = rng.random()
        if u < 0.45:
            out.append(float(rng.random()) * float(rng.choice([1.0, alpha])))
        elif u < 0.85:
            out.append(min(1.0, alpha * int(rng.integers(1, K + 1)) / K))
        elif u < 0.93:
            out.append(0.0)
        else:
            out.append(1.0)
    return out


def _random_evalues(rng: np.random.Generator, K: int, alpha: float) -> list[float]:
    out = []
    for _ in range(K):
        u = rng.random()
        if u < 0.4:
            out.append(float(rng.exponential(1.0 / alpha)))
        elif u < 0.8:
            out.append(K / (alpha * int(rng.integers(1, K + 1))))
        elif u < 0.9:
            out.append(0.0)
        else:
            out.append(math.inf)
    return out


def _exact_reciprocal(e: float):
    if e == 0.0:
        return math.inf
    if math.isinf(e):
        return Fraction(0)
    return 1 / Fraction(e)


def _cases(trials: int, seed: int) -> Iterator[tuple[int, float, list[float], list[float]]]:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    for _ in range(trials):
        K = int(rng.integers(1, 21))
        alpha = _random_alpha(rng)
        yield K, alpha, _random_pvalues(rng, K, alpha), _random_evalues(rng, K, alpha)


# -- identities ---------------------------------------------------------------


def _oracle_ok(p, alpha) -> bool:
    return core.bh_procedure(p, alpha).rejected == bh_oracle(p, alpha)


def _threshold_ok(p, alpha) -> bool:
    res = core.bh_procedure(p, alpha)
    t = core.rejection_threshold(p, alpha)
    K = len(p)
    below = {i for i, v in enumerate(p) if v <= t}
    R = max(len(below), 1)
    return res.rejected == below and math.isclose(K * t, alpha * R, rel_tol=1e-12)


def _leave_one_out_ok(p, alpha) -> bool:
    K = len(p)
    R_D = core.bh_procedure(p, alpha).r
    for k in range(K):
        R_k = core.leave_one_out_rejections(p, alpha, k)
        if R_k < 1:
            return False
        # only r in {R_D, R_k} can make either side true
        for r in {R_D, R_k} - {0}:
            below = K * Fraction(p[k]) <= Fraction(alpha) * r
            if (below and R_D == r) != (below and R_k == r):
                return False
    return True


def _duality_ok(e, alpha) -> bool:
    lhs = core.ebh_procedure(e, alpha).rejected
    rhs = core.step_up([_exact_reciprocal(v) for v in e], alpha).rejected
    return lhs == rhs


def _ebh_maximal_ok(e, alpha) -> bool:
    res = core.ebh_procedure(e, alpha)
    if not core.is_self_consistent(e, alpha, res.rejected):
        return False
    order = sorted(range(len(e)), key=lambda i: -e[i])
    return not any(
        core.is_self_consistent(e, alpha, order[:k]) for k in range(res.k_star + 1, len(e) + 1)
    )


def _simes_ok(p, alpha) -> bool:
    return (core.simes_statistic(p) <= alpha) == (core.bh_procedure(p, alpha).r > 0)


def run_identity_suite(trials: int, seed: int = 0, cases=None) -> list[CheckReport]:
    """Evaluate every checkable identity on ``trials`` random cases.

    ``cases`` optionally replaces the random generator with an iterable of
    ``(K, alpha, p, e)`` tuples.
    """
    if int(trials) != trials or trials < 1:
        raise ValueError(f"trials must be a positive integer, got {trials!r}")
    checks: list[tuple[str, Callable, str]] = [
        ("oracle_agreement", _oracle_ok, "p"),
        ("threshold_characterization", _threshold_ok, "p"),
        ("leave_one_out_event_identity", _leave_one_out_ok, "p"),
        ("reciprocal_duality", _duality_ok, "e"),
        ("ebh_self_consistent_maximal", _ebh_maximal_ok, "e"),
        ("calibrated_equivalence", core.calibrated_equivalence, "p"),
        ("simes_bh_link", _simes_ok, "p"),
    ]
    reports = [CheckReport(name) for name, _, _ in checks]
    source = _cases(int(trials), seed) if cases is None else itertools.islice(cases, int(trials))
    for K, alpha, p, e in source:
        for report, (_, fn, kind) in zip(reports, checks):
            values = p if kind == "p" else e
            report.record(bool(fn(values, alpha)), lambda: f"values={values!r}, alpha={alpha!r}")
    return reports
