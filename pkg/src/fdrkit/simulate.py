"""Seeded data-generating models and Monte Carlo FDR estimation.

Seeding
-------
Replications are processed in blocks of :data:`BLOCK_SIZE`.  Block ``b`` of
a run with seed ``s`` draws from ``Generator(Philox(SeedSequence(s,
spawn_key=(b,))))``.  The block layout depends only on the replication
count, so the per-replication draws, and therefore every estimate, are the
same whatever the number of workers.  Sums are reduced with
:func:`math.fsum`, which is exact and hence order independent.

Models
------
Null hypotheses occupy the first ``K0`` indices.

``independent-uniform``
    Nulls iid U(0, 1).  Non-nulls iid with CDF ``p ** signal``,
    ``signal`` in (0, 1]; smaller is stronger.
``gaussian-one-factor``
    ``Z_k = sqrt(rho) W + sqrt(1 - rho) xi_k``; null ``p_k = 1 - Phi(Z_k)``,
    non-null ``p_k = 1 - Phi(Z_k + signal)`` with ``signal >= 0``.  The
    p-values are decreasing functions of positively correlated Gaussians,
    hence PRDS for every ``rho`` in [0, 1).
``comonotone-evalue``
    One uniform ``U`` drives everything.  Null ``E_k = m 1{U <= 1/m}`` with
    ``m = signal >= 1`` (mean exactly 1); non-null
    ``E_k = m 1{U <= min(1, alt_signal / m)}`` (mean ``min(m, alt_signal)``,
    ``alt_signal`` defaults to ``m``).
``discrete-adversarial-p``
    Non-nulls are 0.  With probability ``q_r`` a uniformly random set of
    ``r`` nulls sits at the BH grid point ``a (K1 + r) / K`` (``a = signal``,
    ``K1 = K - K0``) and the remaining nulls at 1; otherwise all nulls are 1.
    ``q_r`` makes each null exactly uniform on the grid, so BH at level
    ``a`` rejects ``K1 + r`` hypotheses in that event.  Under the global
    null its FDR is ``a * harmonic_number(K)``; it is a stressor for the
    arbitrary-dependence bound, not a certificate that the bound is tight in
    general.  Grid values are rounded down to the nearest float.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import partial

import numpy as np
from scipy.special import ndtr

from . import core

__all__ = [
    "MODEL_KINDS",
    "PROCEDURES",
    "BLOCK_SIZE",
    "ModelSpec",
    "FdrEstimate",
    "MartingaleDiagnostics",
    "generate",
    "generate_batch",
    "estimate_fdr",
    "martingale_diagnostics",
    "simes_rejection_rate",
    "simes_samples",
    "theoretical_bound",
]

MODEL_KINDS = (
    "independent-uniform",
    "gaussian-one-factor",
    "comonotone-evalue",
    "discrete-adversarial-p",
)
PROCEDURES = ("bh", "by", "ebh")
BLOCK_SIZE = 8192

_DEFAULT_SIGNAL = {
    "independent-uniform": 0.1,
    "gaussian-one-factor": 2.0,
    "comonotone-evalue": 10.0,
    "discrete-adversarial-p": 0.1,
}


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    K: int
    K0: int
    signal: float | None = None
    rho: float = 0.0
    alt_signal: float | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K!r}")
        if int(self.K0) != self.K0 or not 0 <= self.K0 <= self.K:
            raise ValueError(f"K0 must lie in [0, K], got {self.K0!r}")
        if self.signal is None:
            object.__setattr__(self, "signal", _DEFAULT_SIGNAL[self.kind])
        s = float(self.signal)
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho!r}")
        if self.kind != "gaussian-one-factor" and self.rho != 0.0:
            raise ValueError("rho only applies to the gaussian-one-factor model")
        if self.kind == "independent-uniform" and not 0.0 < s <= 1.0:
            raise ValueError("independent-uniform signal must lie in (0, 1]")
        elif self.kind == "gaussian-one-factor" and not (s >= 0.0 and math.isfinite(s)):
            raise ValueError("gaussian-one-factor signal must be a finite value >= 0")
        elif self.kind == "comonotone-evalue":
            if not (s >= 1.0 and math.isfinite(s)):
                raise ValueError("comonotone-evalue signal m must be finite and >= 1")
            alt = s if self.alt_signal is None else float(self.alt_signal)
            if not alt >= 0.0:
                raise ValueError("alt_signal must be >= 0")
            object.__setattr__(self, "alt_signal", alt)
        elif self.kind == "discrete-adversarial-p":
            if not 0.0 < s < 1.0:
                raise ValueError("discrete-adversarial-p signal (grid level) must lie in (0, 1)")
            if self._adversarial_probs().sum() > 1.0:
                raise ValueError(
                    "discrete-adversarial-p is infeasible: grid level too large for (K, K0)"
                )
        object.__setattr__(self, "signal", s)

    @property
    def produces_evalues(self) -> bool:
        return self.kind == "comonotone-evalue"

    @property
    def truth(self) -> np.ndarray:
        return np.arange(self.K) < self.K0

    def _adversarial_probs(self) -> np.ndarray:
        # q_r * r / K0 must equal the grid increment at level K1 + r
        K, K0 = int(self.K), int(self.K0)
        K1 = K - K0
        a = float(self.signal)
        r = np.arange(1, K0 + 1)
        increments = np.full(K0, a / K)
        if K0:
            increments[0] = a * (K1 + 1) / K
        return K0 * increments / r


@dataclass(frozen=True)
class FdrEstimate:
    mean_fdp: float
    std_error: float
    replications: int
    mean_power: float


@dataclass(frozen=True)
class MartingaleDiagnostics:
    """Monte Carlo means of ``F(t_alpha)/t_alpha`` and of ``F(s)/s`` on a grid."""

    K0: int
    replications: int
    stopped_mean: float
    stopped_se: float
    grid: tuple[float, ...]
    grid_means: tuple[float, ...]
    grid_ses: tuple[float, ...]


def _rng(seed: int, block: int | None = None) -> np.random.Generator:
    if block is None:
        ss = np.random.SeedSequence(seed)
    else:
        ss = np.random.SeedSequence(seed, spawn_key=(block,))
    return np.random.Generator(np.random.Philox(ss))


def _grid_values(K: int, a: float) -> np.ndarray:
    fa = Fraction(a)
    out = []
    for j in range(1, K + 1):
        q = fa * j / K
        f = float(q)
        out.append(math.nextafter(f, -math.inf) if Fraction(f) > q else f)
    return np.array(out)


def generate_batch(model: ModelSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw an ``(n, K)`` array of p-values (or e-values for the e-value model)."""
    K, K0 = model.K, model.K0
    null = model.truth
    s = model.signal
    if model.kind == "independent-uniform":
        U = rng.random((n, K))
        U[:, ~null] **= 1.0 / s
        return U
    if model.kind == "gaussian-one-factor":
        W = rng.standard_normal((n, 1))
        xi = rng.standard_normal((n, K))
        Z = math.sqrt(model.rho) * W + math.sqrt(1.0 - model.rho) * xi
        Z[:, ~null] += s
        return ndtr(-Z)
    if model.kind == "comonotone-evalue":
        U = rng.random((n, 1))
        E = np.empty((n, K))
        E[:, null] = np.where(U <= 1.0 / s, s, 0.0)
        E[:, ~null] = np.where(U <= min(1.0, model.alt_signal / s), s, 0.0)
        return E
    # discrete-adversarial-p
    P = np.ones((n, K))
    P[:, ~null] = 0.0
    if K0 == 0:
        return P
    q = model._adversarial_probs()
    probs = np.append(q, max(0.0, 1.0 - q.sum()))
    sizes = rng.choice(np.arange(1, K0 + 2), size=n, p=probs / probs.sum())
    sizes[sizes == K0 + 1] = 0
    # random subset of nulls of the chosen size: lowest `size` random keys
    keys = rng.random((n, K0))
    ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
    grid = _grid_values(K, s)
    level = np.where(sizes > 0, grid[np.maximum(K - K0 + sizes, 1) - 1], 1.0)
    P[:, :K0] = np.where(ranks < sizes[:, None], level[:, None], 1.0)
    return P


def generate(model: ModelSpec, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """One realization of the model: ``(values, is_null)``."""
    return generate_batch(model, 1, _rng(seed))[0], model.truth


def _apply(procedure: str, X: np.ndarray, alpha: float):
    if procedure == "bh":
        return core.bh_batch(X, alpha)
    if procedure == "by":
        return core.bh_batch(X, alpha / core.harmonic_number(X.shape[1]))
    return core.ebh_batch(X, alpha)


def _check_procedure(model: ModelSpec, procedure: str, alpha: float) -> None:
    if procedure not in PROCEDURES:
        raise ValueError(f"unknown procedure {procedure!r}; expected one of {PROCEDURES}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    if model.produces_evalues != (procedure == "ebh"):
        kind = "e-values" if model.produces_evalues else "p-values"
        raise ValueError(f"procedure {procedure!r} cannot be applied to {kind} from {model.kind}")


def _blocks(replications: int) -> list[tuple[int, int]]:
    return [
        (b, min(BLOCK_SIZE, replications - b * BLOCK_SIZE))
        for b in range(math.ceil(replications / BLOCK_SIZE))
    ]


def _fdr_block(model, procedure, alpha, seed, block):
    b, n = block
    X = generate_batch(model, n, _rng(seed, b))
    _, mask = _apply(procedure, X, alpha)
    null = model.truth
    R = mask.sum(axis=1)
    F = (mask & null).sum(axis=1)
    fdp = F / np.maximum(R, 1)
    K1 = model.K - model.K0
    power = (R - F) / K1 if K1 else np.zeros(n)
    return fdp, power


def _map_blocks(fn, blocks, workers: int):
    if workers <= 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, blocks))


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    n = x.size
    mean = math.fsum(x) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def estimate_fdr(
    model: ModelSpec,
    procedure: str,
    alpha: float,
    replications: int,
    seed: int = 0,
    workers: int = 1,
) -> FdrEstimate:
    """Monte Carlo estimate of the FDR of ``procedure`` at ``alpha`` under ``model``."""
    _check_procedure(model, procedure, alpha)
    if int(replications) != replications or replications < 1:
        raise ValueError(f"replications must be a positive integer, got {replications!r}")
    fn = partial(_fdr_block, model, procedure, float(alpha), int(seed))
    parts = _map_blocks(fn, _blocks(int(replications)), workers)
    fdps = np.concatenate([f for f, _ in parts])
    powers = np.concatenate([p for _, p in parts])
    mean, se = _mean_se(fdps)
    return FdrEstimate(mean, se, int(replications), math.fsum(powers) / powers.size)


def theoretical_bound(model: ModelSpec, procedure: str, alpha: float) -> float:
    """FDR bound the theory guarantees for this model/procedure pair."""
    base = alpha * model.K0 / model.K
    if procedure == "bh" and model.kind == "discrete-adversarial-p":
        return core.harmonic_number(model.K) * base
    return base


_MARTINGALE_GRID = (0.2, 0.4, 0.6, 0.8, 1.0)


def _martingale_block(model, alpha, seed, block):
    b, n = block
    P = generate_batch(model, n, _rng(seed, b))
    k_star, mask = core.bh_batch(P, alpha)
    null = model.truth
    t_alpha = alpha * np.maximum(k_star, 1) / model.K
    stopped = (mask & null).sum(axis=1) / t_alpha
    grid = np.stack([(P[:, null] <= s).sum(axis=1) / s for s in _MARTINGALE_GRID], axis=1)
    return stopped, grid


def martingale_diagnostics(
    model: ModelSpec, alpha: float, replications: int, seed: int = 0, workers: int = 1
) -> MartingaleDiagnostics:
    """Estimate ``E[F(t_alpha)/t_alpha]`` and ``E[F(s)/s]``; both should equal K0."""
    if model.kind != "independent-uniform":
        raise ValueError("martingale diagnostics require the independent-uniform model")
    _check_procedure(model, "bh", alpha)
    fn = partial(_martingale_block, model, float(alpha), int(seed))
    parts = _map_blocks(fn, _blocks(int(replications)), workers)
    stopped = np.concatenate([s for s, _ in parts])
    grid = np.concatenate([g for _, g in parts])
    m, se = _mean_se(stopped)
    cols = [_mean_se(grid[:, j]) for j in range(grid.shape[1])]
    return MartingaleDiagnostics(
        K0=model.K0,
        replications=int(replications),
        stopped_mean=m,
        stopped_se=se,
        grid=_MARTINGALE_GRID,
        grid_means=tuple(c[0] for c in cols),
        grid_ses=tuple(c[1] for c in cols),
    )


def _simes_block(model, seed, block):
    b, n = block
    return core.simes_batch(generate_batch(model, n, _rng(seed, b)))


def simes_samples(model: ModelSpec, replications: int, seed: int = 0, workers: int = 1) -> np.ndarray:
    """Monte Carlo draws of the Simes statistic under a p-value model."""
    if model.produces_evalues:
        raise ValueError("the Simes statistic needs p-values")
    fn = partial(_simes_block, model, int(seed))
    return np.concatenate(_map_blocks(fn, _blocks(int(replications)), workers))


def _simes_reject_block(model, alpha, seed, block):
    b, n = block
    k_star, _ = core.bh_batch(generate_batch(model, n, _rng(seed, b)), alpha)
    return k_star > 0


def simes_rejection_rate(
    model: ModelSpec, alpha: float, replications: int, seed: int = 0, workers: int = 1
) -> tuple[float, float]:
    """Estimate ``P(S_K <= alpha)`` with its binomial standard error.

    The event is evaluated as "BH at ``alpha`` rejects something", which is
    the same event decided without rounding the statistic.
    """
    if model.produces_evalues:
        raise ValueError("the Simes statistic needs p-values")
    fn = partial(_simes_reject_block, model, float(alpha), int(seed))
    hits = np.concatenate(_map_blocks(fn, _blocks(int(replications)), workers))
    rate = hits.mean()
    return float(rate), math.sqrt(rate * (1.0 - rate) / hits.size)
