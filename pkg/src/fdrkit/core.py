"""Step-up multiple testing procedures on p-values and e-values.

All decisions are made in exact arithmetic on the binary values supplied.
A float comparison is tried first and only inputs that land within a few
ulps of a cutoff are re-checked with :class:`fractions.Fraction`.  This
keeps the index-set view, the threshold view and the Simes view of the
BH procedure in exact agreement, including on grid-valued inputs that sit
exactly on ``alpha * k / K``.

Indices are 0-based throughout the library.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "RejectionResult",
    "FdpOutcome",
    "Calibrator",
    "as_pvalues",
    "as_evalues",
    "as_truth",
    "step_up",
    "bh_procedure",
    "rejection_threshold",
    "counting_processes",
    "fdp",
    "ebh_procedure",
    "is_self_consistent",
    "harmonic_number",
    "by_procedure",
    "simes_statistic",
    "calibrate_p_to_e",
    "calibrated_equivalence",
    "leave_one_out_rejections",
    "bh_batch",
    "ebh_batch",
    "simes_batch",
]

# Relative slack for the float pre-check; each side carries at most two
# roundings of 2**-53, so anything outside this band is decided correctly.
_SLACK = 2.0**-48


class DomainError(ValueError):
    """Input outside the domain of a procedure."""


@dataclass(frozen=True)
class RejectionResult:
    """Outcome of a step-up procedure.

    ``threshold`` is the realized p-value cutoff for BH-type procedures and
    the e-value cutoff ``K / (alpha * max(k_star, 1))`` for e-BH.
    """

    rejected: frozenset[int]
    k_star: int
    threshold: float

    @property
    def r(self) -> int:
        return len(self.rejected)

    def mask(self, K: int) -> np.ndarray:
        out = np.zeros(K, dtype=bool)
        out[list(self.rejected)] = True
        return out


@dataclass(frozen=True)
class FdpOutcome:
    false_discoveries: int
    discoveries: int
    fdp: float


@dataclass(frozen=True)
class Calibrator:
    """Decreasing step function turning a p-value into an e-value.

    Running e-BH at level ``alpha_prime = alpha * harmonic_number(K)`` on the
    calibrated values rejects exactly what BH at ``alpha`` rejects on the
    raw p-values.
    """

    K: int
    alpha: float
    alpha_prime: float = field(init=False)

    def __post_init__(self):
        if isinstance(self.K, bool) or int(self.K) != self.K or self.K < 1:
            raise DomainError(f"K must be a positive integer, got {self.K!r}")
        _check_alpha(self.alpha)
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "alpha_prime", self.alpha * harmonic_number(self.K))

    def __call__(self, p: float) -> float:
        return calibrate_p_to_e(self, p)


# -- validation ---------------------------------------------------------------


def _check_alpha(alpha) -> None:
    if not (isinstance(alpha, (int, float, np.floating)) and 0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")


def as_pvalues(values: Iterable[float]) -> list[float]:
    """Validate p-values and return them as a list of floats."""
    out = [float(v) for v in np.asarray(values, dtype=float).ravel()]
    if not out:
        raise DomainError("no values")
    for i, v in enumerate(out):
        if not (0.0 <= v <= 1.0):
            raise DomainError(f"p-value at index {i} is {v!r}, outside [0, 1]")
    return out


def as_evalues(values: Iterable[float]) -> list[float]:
    """Validate e-values (``+inf`` allowed) and return them as floats."""
    out = [float(v) for v in np.asarray(values, dtype=float).ravel()]
    if not out:
        raise DomainError("no values")
    for i, v in enumerate(out):
        if not v >= 0.0:
            raise DomainError(f"e-value at index {i} is {v!r}, must be >= 0")
    return out


def as_truth(is_null: Iterable[bool], K: int | None = None) -> np.ndarray:
    truth = np.asarray(list(is_null), dtype=bool)
    if truth.ndim != 1:
        raise DomainError("truth assignment must be one-dimensional")
    if K is not None and truth.size != K:
        raise DomainError(f"truth assignment has length {truth.size}, expected {K}")
    return truth


# -- exact comparisons --------------------------------------------------------


def _scaled_le(x, K: int, alpha: float, k: int) -> bool:
    """Exact test of ``K * x <= alpha * k`` for nonnegative ``x``."""
    lhs = K * x
    rhs = alpha * k
    if lhs < rhs * (1.0 - _SLACK):
        return True
    if lhs > rhs * (1.0 + _SLACK):
        return False
    return K * Fraction(x) <= Fraction(alpha) * k


def _scaled_ge(e, k: int, alpha: float, K: int) -> bool:
    """Exact test of ``k * e * alpha >= K`` for nonnegative ``e``."""
    lhs = e * alpha * k
    if lhs > K * (1.0 + _SLACK):
        return True
    if lhs < K * (1.0 - _SLACK):
        return False
    return Fraction(e) * Fraction(alpha) * k >= K


def _round_down(q: Fraction) -> float:
    f = float(q)
    return math.nextafter(f, -math.inf) if Fraction(f) > q else f


def _round_up(q: Fraction) -> float:
    f = float(q)
    return math.nextafter(f, math.inf) if Fraction(f) < q else f


# -- BH family ----------------------------------------------------------------


def step_up(scores: Sequence, alpha: float) -> RejectionResult:
    """BH step-up rule on arbitrary nonnegative scores, ``inf`` included.

    No range check is applied to ``scores``; :func:`bh_procedure` is the
    validated entry point for p-values.  Scores may be floats or
    :class:`~fractions.Fraction` instances.
    """
    K = len(scores)
    if K == 0:
        raise DomainError("no values")
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha!r}")
    order = sorted(range(K), key=scores.__getitem__)
    k_star = 0
    for k in range(K, 0, -1):
        if _scaled_le(scores[order[k - 1]], K, alpha, k):
            k_star = k
            break
    # ties beyond position k_star cannot pass, so the first k_star sorted
    # indices are exactly {i : score_i <= score_(k_star)}
    threshold = _round_down(Fraction(alpha) * max(k_star, 1) / K)
    return RejectionResult(frozenset(order[:k_star]), k_star, threshold)


def bh_procedure(p: Sequence[float], alpha: float) -> RejectionResult:
    """Benjamini-Hochberg procedure at level ``alpha``.

    Parameters
    ----------
    p : array_like
        p-values in [0, 1].
    alpha : float
        Target level in (0, 1).

    Returns
    -------
    RejectionResult
        ``k_star`` is the largest k with ``K * p_(k) / k <= alpha`` (0 if
        none); ``threshold`` is ``alpha * max(k_star, 1) / K`` rounded down
        to a float, so ``rejected == {i : p[i] <= threshold}``.
    """
    _check_alpha(alpha)
    return step_up(as_pvalues(p), float(alpha))


def rejection_threshold(p: Sequence[float], alpha: float) -> float:
    """Largest t with ``K * t <= alpha * max(#{p_i <= t}, 1)``."""
    return bh_procedure(p, alpha).threshold


def counting_processes(p: Sequence[float], truth: Sequence[bool], t: float) -> tuple[int, int]:
    """Return ``(F(t), R(t))``: nulls at or below ``t`` and all p-values at or
    below ``t`` floored at one."""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t!r}")
    values = as_pvalues(p)
    null = as_truth(truth, len(values))
    F = sum(1 for v, n in zip(values, null) if n and v <= t)
    R = sum(1 for v in values if v <= t)
    return F, max(R, 1)


def fdp(result: RejectionResult | Iterable[int], truth: Sequence[bool]) -> FdpOutcome:
    null = as_truth(truth)
    rejected = result.rejected if isinstance(result, RejectionResult) else frozenset(result)
    if any(not 0 <= i < null.size for i in rejected):
        raise DomainError("rejected index outside the truth assignment")
    F = sum(1 for i in rejected if null[i])
    R = len(rejected)
    return FdpOutcome(F, R, F / max(R, 1))


@lru_cache(maxsize=1024)
def harmonic_number(K: int) -> float:
    """``sum(1/k for k in 1..K)``, correctly rounded."""
    if isinstance(K, bool) or int(K) != K or K < 1:
        raise DomainError(f"K must be a positive integer, got {K!r}")
    return math.fsum(1.0 / k for k in range(int(K), 0, -1))


def by_procedure(p: Sequence[float], alpha: float) -> RejectionResult:
    """Benjamini-Yekutieli: BH at ``alpha / harmonic_number(K)``."""
    _check_alpha(alpha)
    values = as_pvalues(p)
    return step_up(values, alpha / harmonic_number(len(values)))


def simes_statistic(p: Sequence[float]) -> float:
    """``min_k K * p_(k) / k``.

    The minimum is computed exactly and rounded upward, so
    ``simes_statistic(p) <= alpha`` holds exactly when BH at ``alpha``
    rejects something.
    """
    values = sorted(as_pvalues(p))
    K = len(values)
    approx = [K * v / k for k, v in enumerate(values, start=1)]
    best = min(approx)
    # only candidates within rounding distance of the float minimum can win
    cands = [
        Fraction(values[k]) * K / (k + 1)
        for k, a in enumerate(approx)
        if a <= best * (1.0 + _SLACK)
    ]
    return _round_up(min(cands))


def leave_one_out_rejections(p: Sequence[float], alpha: float, k: int) -> int:
    """Number of BH rejections after setting ``p[k]`` to zero."""
    values = as_pvalues(p)
    _check_alpha(alpha)
    if not 0 <= k < len(values):
        raise DomainError(f"index {k} out of range for K={len(values)}")
    values[k] = 0.0
    return step_up(values, float(alpha)).r


# -- e-values -----------------------------------------------------------------


def _ebh(e: Sequence[float], alpha: float) -> RejectionResult:
    K = len(e)
    order = sorted(range(K), key=e.__getitem__, reverse=True)
    k_star = 0
    for k in range(K, 0, -1):
        if _scaled_ge(e[order[k - 1]], k, alpha, K):
            k_star = k
            break
    return RejectionResult(frozenset(order[:k_star]), k_star, K / (alpha * max(k_star, 1)))


def ebh_procedure(e: Sequence[float], alpha: float) -> RejectionResult:
    """e-BH procedure: reject the ``k_star`` largest e-values where
    ``k_star = max{k : k * e_[k] / K >= 1 / alpha}``."""
    _check_alpha(alpha)
    return _ebh(as_evalues(e), float(alpha))


def is_self_consistent(e: Sequence[float], alpha: float, candidate: Iterable[int]) -> bool:
    """True iff every candidate index has ``e_k >= K / (alpha * |candidate|)``."""
    values = as_evalues(e)
    _check_alpha(alpha)
    chosen = frozenset(candidate)
    K = len(values)
    if any(not 0 <= i < K for i in chosen):
        raise DomainError("candidate index out of range")
    r = len(chosen)
    return all(_scaled_ge(values[i], r, alpha, K) for i in chosen)


def calibrate_p_to_e(cal: Calibrator, p: float) -> float:
    """Evaluate ``K / (alpha' * ceil(K p / alpha))`` for ``p <= alpha``, else 0.

    ``phi(0) = K / alpha'``.  The ceiling is taken on the exact quotient and
    the result is rounded upward, which keeps e-BH at ``alpha'`` in exact
    agreement with BH at ``alpha`` at every step boundary.
    """
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p-value {p!r} outside [0, 1]")
    if p > cal.alpha:
        return 0.0
    steps = max(math.ceil(Fraction(cal.K) * Fraction(p) / Fraction(cal.alpha)), 1)
    return _round_up(Fraction(cal.K) / (Fraction(cal.alpha_prime) * steps))


def calibrated_equivalence(p: Sequence[float], alpha: float) -> bool:
    """Check that e-BH at ``alpha * l_K`` on calibrated values equals BH at ``alpha``."""
    values = as_pvalues(p)
    _check_alpha(alpha)
    cal = Calibrator(len(values), alpha)
    e = [calibrate_p_to_e(cal, v) for v in values]
    # alpha' may exceed 1, so use the unchecked rule
    return _ebh(e, cal.alpha_prime).rejected == step_up(values, float(alpha)).rejected


# -- vectorized paths for Monte Carlo ----------------------------------------


def _fix_ambiguous(passes: np.ndarray, ambiguous: np.ndarray, exact) -> None:
    for i, j in zip(*np.nonzero(ambiguous)):
        passes[i, j] = exact(i, j)


def _mask_from_order(order: np.ndarray, k_star: np.ndarray) -> np.ndarray:
    n, K = order.shape
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.broadcast_to(np.arange(K), (n, K)), axis=1)
    return ranks < k_star[:, None]


def bh_batch(P: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise BH on an ``(n, K)`` array; returns ``(k_star, rejected_mask)``.

    Same exact decision rule as :func:`step_up`, without validation.
    """
    P = np.asarray(P, dtype=float)
    n, K = P.shape
    order = np.argsort(P, axis=1, kind="stable")
    S = np.take_along_axis(P, order, axis=1)
    ks = np.arange(1, K + 1)
    lhs = K * S
    rhs = alpha * ks
    passes = lhs < rhs * (1.0 - _SLACK)
    ambiguous = ~passes & (lhs <= rhs * (1.0 + _SLACK))
    if ambiguous.any():
        fa = Fraction(alpha)
        _fix_ambiguous(passes, ambiguous, lambda i, j: K * Fraction(S[i, j]) <= fa * (j + 1))
    k_star = np.where(passes.any(axis=1), K - np.argmax(passes[:, ::-1], axis=1), 0)
    return k_star, _mask_from_order(order, k_star)


def ebh_batch(E: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise e-BH on an ``(n, K)`` array; returns ``(k_star, rejected_mask)``."""
    E = np.asarray(E, dtype=float)
    n, K = E.shape
    order = np.argsort(-E, axis=1, kind="stable")
    S = np.take_along_axis(E, order, axis=1)
    ks = np.arange(1, K + 1)
    with np.errstate(invalid="ignore"):
        lhs = S * alpha * ks
    passes = lhs > K * (1.0 + _SLACK)
    ambiguous = ~passes & (lhs >= K * (1.0 - _SLACK))
    if ambiguous.any():
        fa = Fraction(alpha)
        _fix_ambiguous(passes, ambiguous, lambda i, j: Fraction(S[i, j]) * fa * (j + 1) >= K)
    k_star = np.where(passes.any(axis=1), K - np.argmax(passes[:, ::-1], axis=1), 0)
    return k_star, _mask_from_order(order, k_star)


def simes_batch(P: np.ndarray) -> np.ndarray:
    """Row-wise float Simes statistic (no directed rounding)."""
    S = np.sort(np.asarray(P, dtype=float), axis=1)
    K = S.shape[1]
    return np.min(K * S / np.arange(1, K + 1), axis=1)
