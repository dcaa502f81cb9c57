import math

import numpy as np
import pytest
from scipy import stats

from fdrkit import core, simulate
from fdrkit.simulate import ModelSpec


def _draw(model, n, seed):
    return simulate.generate_batch(model, n, simulate._rng(seed))


def test_generate_is_deterministic():
    m = ModelSpec("gaussian-one-factor", 6, 3, rho=0.4)
    a, truth = simulate.generate(m, 123)
    b, _ = simulate.generate(m, 123)
    c, _ = simulate.generate(m, 124)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert truth.tolist() == [True] * 3 + [False] * 3


def test_independent_uniform_null_moments():
    P = _draw(ModelSpec("independent-uniform", 1, 1), 100_000, 1)[:, 0]
    sigma = math.sqrt(1 / 12 / P.size)
    assert abs(P.mean() - 0.5) <= 3 * sigma


def test_independent_uniform_nonnull_cdf():
    P = _draw(ModelSpec("independent-uniform", 1, 0, signal=0.25), 50_000, 2)[:, 0]
    assert stats.kstest(P, lambda x: np.clip(x, 0, 1) ** 0.25).statistic < 0.01


def test_gaussian_rho_zero_matches_uniform_nulls():
    g = _draw(ModelSpec("gaussian-one-factor", 1, 1, rho=0.0), 100_000, 3)[:, 0]
    u = _draw(ModelSpec("independent-uniform", 1, 1), 100_000, 4)[:, 0]
    assert stats.ks_2samp(g, u).statistic < 0.01


def test_gaussian_factor_correlation():
    rho = 0.6
    P = _draw(ModelSpec("gaussian-one-factor", 2, 2, rho=rho), 50_000, 5)
    z = stats.norm.isf(P)
    assert np.corrcoef(z.T)[0, 1] == pytest.approx(rho, abs=0.02)


def test_comonotone_null_mean_is_one():
    m = 10.0
    E = _draw(ModelSpec("comonotone-evalue", 3, 3, signal=m), 100_000, 6)
    sigma = math.sqrt((m - 1) / E.shape[0])  # Var = m^2/m - 1
    for col in E.T:
        assert abs(col.mean() - 1.0) <= 3 * sigma
    # one driving uniform: all columns identical
    assert (E == E[:, :1]).all()


def test_comonotone_nonnull_mean():
    E = _draw(ModelSpec("comonotone-evalue", 2, 1, signal=8.0, alt_signal=4.0), 100_000, 7)
    assert E[:, 1].mean() == pytest.approx(4.0, abs=3 * math.sqrt(16 / 1e5))


def test_adversarial_nulls_are_uniform_on_grid():
    K, K0, a = 8, 5, 0.1
    model = ModelSpec("discrete-adversarial-p", K, K0, signal=a)
    P = _draw(model, 200_000, 8)
    assert (P[:, K0:] == 0).all()
    nulls = P[:, :K0].ravel()
    # P(null <= a j / K) = a j / K on every grid point reached
    for j in range(K - K0 + 1, K + 1):
        cut = a * j / K
        est = (nulls <= cut).mean()
        sigma = math.sqrt(cut * (1 - cut) / nulls.size)
        assert abs(est - cut) <= 4 * sigma
    # below the first reachable grid point there is no mass
    assert (nulls[nulls < 1] >= a * (K - K0 + 1) / K * (1 - 1e-15)).all()


def test_adversarial_probs_exact():
    model = ModelSpec("discrete-adversarial-p", 20, 20, signal=0.1)
    q = model._adversarial_probs()
    assert q.sum() == pytest.approx(0.1 * core.harmonic_number(20))


def test_adversarial_attains_global_null_value():
    model = ModelSpec("discrete-adversarial-p", 10, 10, signal=0.05)
    est = simulate.estimate_fdr(model, "bh", 0.05, 50_000, seed=9)
    target = 0.05 * core.harmonic_number(10)
    assert abs(est.mean_fdp - target) <= 4 * est.std_error


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="nope", K=3, K0=1),
        dict(kind="independent-uniform", K=0, K0=0),
        dict(kind="independent-uniform", K=3, K0=4),
        dict(kind="independent-uniform", K=3, K0=1, signal=1.5),
        dict(kind="gaussian-one-factor", K=3, K0=1, rho=1.0),
        dict(kind="independent-uniform", K=3, K0=1, rho=0.3),
        dict(kind="comonotone-evalue", K=3, K0=1, signal=0.5),
        dict(kind="discrete-adversarial-p", K=3, K0=3, signal=0.9),
    ],
)
def test_invalid_specs(kwargs):
    with pytest.raises(ValueError):
        ModelSpec(**kwargs)


def test_estimate_fdr_rejects_bad_procedure():
    m = ModelSpec("independent-uniform", 4, 2)
    with pytest.raises(ValueError):
        simulate.estimate_fdr(m, "holm", 0.1, 10)
    with pytest.raises(ValueError):
        simulate.estimate_fdr(m, "ebh", 0.1, 10)
    with pytest.raises(ValueError):
        simulate.estimate_fdr(ModelSpec("comonotone-evalue", 4, 2), "bh", 0.1, 10)
    with pytest.raises(ValueError):
        simulate.estimate_fdr(m, "bh", 0.1, 0)


def test_negligible_level_has_no_discoveries():
    est = simulate.estimate_fdr(ModelSpec("independent-uniform", 10, 5), "bh", 1e-9, 10_000, seed=1)
    assert est.mean_fdp == 0.0 and est.std_error == 0.0


def test_theorem1_with_signal():
    m = ModelSpec("independent-uniform", 10, 5, signal=0.1)
    est = simulate.estimate_fdr(m, "bh", 0.1, 200_000, seed=10)
    assert abs(est.mean_fdp - 0.05) <= 0.01
    assert 0 < est.mean_power <= 1


def test_reproducible_across_workers():
    m = ModelSpec("gaussian-one-factor", 12, 6, rho=0.5)
    reps = 3 * simulate.BLOCK_SIZE + 17
    one = simulate.estimate_fdr(m, "bh", 0.1, reps, seed=42, workers=1)
    three = simulate.estimate_fdr(m, "bh", 0.1, reps, seed=42, workers=3)
    again = simulate.estimate_fdr(m, "bh", 0.1, reps, seed=42, workers=1)
    assert one == three == again


def test_martingale_diagnostics_edge_cases():
    d = simulate.martingale_diagnostics(ModelSpec("independent-uniform", 6, 0), 0.1, 2000, seed=1)
    assert d.stopped_mean == 0.0 and all(m == 0 for m in d.grid_means)
    d = simulate.martingale_diagnostics(ModelSpec("independent-uniform", 6, 4), 0.1, 2000, seed=1)
    assert d.grid[-1] == 1.0 and d.grid_means[-1] == 4.0 and d.grid_ses[-1] == 0.0
    with pytest.raises(ValueError):
        simulate.martingale_diagnostics(ModelSpec("gaussian-one-factor", 6, 4), 0.1, 100)


def test_simes_helpers_reject_evalue_model():
    with pytest.raises(ValueError):
        simulate.simes_samples(ModelSpec("comonotone-evalue", 3, 3), 10)
    with pytest.raises(ValueError):
        simulate.simes_rejection_rate(ModelSpec("comonotone-evalue", 3, 3), 0.1, 10)


def test_theoretical_bound():
    adv = ModelSpec("discrete-adversarial-p", 20, 10)
    assert simulate.theoretical_bound(adv, "bh", 0.1) == pytest.approx(
        core.harmonic_number(20) * 0.05
    )
    assert simulate.theoretical_bound(adv, "by", 0.1) == pytest.approx(0.05)
