import itertools
import math

import numpy as np
import pytest
from scipy import stats

from prebim.estimators import (
    accepts_zero,
    fisher_z_pvalues,
    fisher_z_test,
    leave_one_out_correlations,
    ols_estimate,
    pearson_correlation,
    population_valid_set,
    pseudo_residual,
    pseudo_residual_correlation,
    pseudo_residual_covariance,
    tsls_dataset,
    tsls_estimate,
    tsls_population,
    valid_set_test,
)
from prebim.model import (
    Dataset,
    ModelParams,
    PrebimError,
    SaturatedCorrelationError,
    SingularInstrumentsError,
    WeakInstrumentError,
    ZeroVarianceError,
)
from prebim.simulator import (
    ScenarioSpec,
    draw_scenario_params,
    generate_dataset,
    population_moments_of,
)

from conftest import random_params

# frozen reference values, computed with mpmath before the estimators existed
Z_R05_N100 = 5.410038105198993
P_R05_N100 = 6.301134015835368e-08
OMEGA_G4G5 = 1399 / 1825  # TSLS limit on {G_4, G_5} in the five-variant example
COV_PR_G2 = 59 / 365      # Cov(Y - omega X, G_2) for the same slope, = 1.062 / 6.57


def five_variant_obs(params):
    return population_moments_of(params)


# ---------------------------------------------------------------- OLS

def test_ols_noiseless():
    x = np.linspace(-1, 1, 11)
    assert ols_estimate(x, 2 * x) == pytest.approx(2.0, abs=1e-14)


def test_ols_errors():
    with pytest.raises(ZeroVarianceError):
        ols_estimate(np.ones(5), np.arange(5.0))
    with pytest.raises(PrebimError):
        ols_estimate(np.ones(3), np.ones(4))


def test_ols_confounding_bias(five_variant):
    cov = five_variant_obs(five_variant)
    naive = cov[-2, -1] / cov[-2, -2]
    assert abs(naive - 0.6) > 0.05


def test_ols_independent():
    rng = np.random.default_rng(0)
    assert abs(ols_estimate(rng.normal(size=10_000), rng.normal(size=10_000))) < 0.1


# ---------------------------------------------------------------- TSLS

def test_tsls_noiseless_chain():
    g = np.random.default_rng(1).normal(size=(50, 1))
    x = g[:, 0].copy()
    assert tsls_estimate(x, 0.5 * x, g, [0]) == pytest.approx(0.5, abs=1e-13)


def test_tsls_population_five_variant(five_variant):
    cov = five_variant_obs(five_variant)
    assert abs(tsls_population(cov, [0, 2]) - 0.6) < 1e-12
    assert abs(tsls_population(cov, [0]) - 0.6) < 1e-12
    assert abs(tsls_population(cov, [3, 4]) - OMEGA_G4G5) < 1e-12


def test_tsls_equals_second_stage_regression():
    rng = np.random.default_rng(2)
    n = 500
    geno = rng.binomial(2, 0.3, size=(n, 3)).astype(float)
    x = geno @ [1.0, 0.5, -0.7] + rng.normal(size=n)
    y = 0.4 * x + rng.normal(size=n)
    gc = geno - geno.mean(0)
    xc = x - x.mean()
    fitted = gc @ np.linalg.lstsq(gc, xc, rcond=None)[0]
    two_stage = fitted @ (y - y.mean()) / (fitted @ fitted)
    assert tsls_estimate(x, y, geno, [0, 1, 2]) == pytest.approx(two_stage, abs=1e-12)


def test_tsls_sample_matches_moment_version():
    rng = np.random.default_rng(3)
    n = 300
    geno = rng.normal(size=(n, 4))
    x = geno @ [1.0, 0.5, 0.2, 0.0] + rng.normal(size=n)
    y = 0.3 * x + geno[:, 3] + rng.normal(size=n)
    d = Dataset(x, y, geno)
    for s in ([0], [0, 1], [1, 2, 3]):
        assert tsls_estimate(x, y, geno, s) == pytest.approx(tsls_dataset(d, s), abs=1e-12)


def test_tsls_errors():
    rng = np.random.default_rng(4)
    g = rng.normal(size=(100, 2))
    x = g[:, 0] + rng.normal(size=100)
    with pytest.raises(SingularInstrumentsError):
        tsls_estimate(x, x, np.column_stack([g[:, 0], 2 * g[:, 0]]), [0, 1])
    with pytest.raises(WeakInstrumentError):
        tsls_estimate(np.zeros(100), x, g, [0])
    with pytest.raises(PrebimError):
        tsls_estimate(x, x, g, [])
    with pytest.raises(PrebimError):
        tsls_estimate(x, x, g, [5])


def test_tsls_converges_to_population(five_variant):
    rng = np.random.default_rng(5)
    d = generate_dataset(five_variant, 100_000, rng)
    cov = five_variant_obs(five_variant)
    for s in ([0, 2], [3, 4], [1, 3, 4]):
        assert abs(tsls_dataset(d, s) - tsls_population(cov, s)) < 0.05


def test_tsls_biased_on_invalid_pair(five_variant):
    cov = five_variant_obs(five_variant)
    bias = tsls_population(cov, [3, 4]) - 0.6
    assert abs(bias) > 0.1


# ---------------------------------------------------------------- pseudo-residuals

def test_pseudo_residual_zero_when_y_equals_x():
    rng = np.random.default_rng(6)
    g = rng.normal(size=(200, 2))
    x = g @ [1.0, 1.0] + rng.normal(size=200)
    np.testing.assert_allclose(pseudo_residual(x, x, g, [0, 1]), 0.0, atol=1e-12)


def test_pseudo_residual_population_five_variant(five_variant):
    cov = five_variant_obs(five_variant)
    assert abs(pseudo_residual_correlation(cov, [0], 2)) < 1e-10
    assert abs(pseudo_residual_correlation(cov, [2], 0)) < 1e-10
    assert abs(pseudo_residual_covariance(cov, [3, 4], 1) - COV_PR_G2) < 1e-12


def closed_form_cov(params, subset, j):
    """Cov(PR_subset, G_j) written in structural coefficients (independent variants)."""
    gam = params.gamma_x + params.beta_yx * params.gamma_y
    v = params.variant_variances
    num = sum(v[k] * gam[k] * (params.gamma_x[k] * params.gamma_y[j]
                                - params.gamma_x[j] * params.gamma_y[k]) for k in subset)
    den = sum(v[k] * gam[k] ** 2 for k in subset)
    return v[j] * num / den


@pytest.mark.parametrize("seed", range(25))
def test_pseudo_residual_covariance_closed_form(seed):
    rng = np.random.default_rng(seed)
    p = random_params(rng, g=5, confounded=False)
    cov = population_moments_of(p)
    subset = sorted(rng.choice(5, size=rng.integers(1, 4), replace=False).tolist())
    j = int(rng.choice([k for k in range(5) if k not in subset]))
    assert pseudo_residual_covariance(cov, subset, j) == pytest.approx(
        closed_form_cov(p, subset, j), abs=1e-10)


# ---------------------------------------------------------------- correlation and Fisher z

def test_pearson_basic():
    a = np.random.default_rng(7).normal(size=30)
    assert pearson_correlation(a, a) == 1.0
    assert pearson_correlation(a, -a) == -1.0
    with pytest.raises(ZeroVarianceError):
        pearson_correlation(a, np.ones(30))


def test_pearson_independent():
    rng = np.random.default_rng(8)
    assert abs(pearson_correlation(rng.normal(size=10_000), rng.normal(size=10_000))) < 0.05


def test_fisher_z_reference_values():
    t = fisher_z_test(0.5, 100, 0.05)
    assert t.z_stat == pytest.approx(Z_R05_N100, rel=1e-14)
    assert t.p_value == pytest.approx(P_R05_N100, rel=1e-9)
    assert t.p_value == pytest.approx(2 * stats.norm.sf(t.z_stat), rel=1e-9)
    assert t.reject


def test_fisher_z_null_and_symmetry():
    t = fisher_z_test(0.0, 50)
    assert t.p_value == 1.0 and not t.reject
    assert fisher_z_test(-0.5, 100).p_value == fisher_z_test(0.5, 100).p_value
    assert fisher_z_test(-0.5, 100).z_stat < 0


def test_fisher_z_errors():
    with pytest.raises(PrebimError):
        fisher_z_test(0.1, 3)
    with pytest.raises(SaturatedCorrelationError):
        fisher_z_test(1.0, 100)


def test_fisher_z_monotone():
    p = [fisher_z_test(r, 200).p_value for r in np.linspace(0, 0.9, 40)]
    assert all(a > b for a, b in zip(p, p[1:]))


def test_fisher_z_vectorised():
    r = np.array([0.0, 0.5, -0.5, 1.0, np.nan])
    p = fisher_z_pvalues(r, 100)
    assert p[0] == 1.0 and p[1] == pytest.approx(P_R05_N100, rel=1e-9) and p[1] == p[2]
    assert p[3] == 0.0 and np.isnan(p[4])
    np.testing.assert_array_equal(accepts_zero(r, 100, 0.05), [True, False, False, False, False])


@pytest.mark.parametrize("r, alpha", [(0.15, 0.05), (0.15, 0.01), (0.3, 0.05), (0.01, 0.2)])
def test_fisher_reject_iff_p_below_alpha(r, alpha):
    t = fisher_z_test(r, 150, alpha)
    assert t.reject == (t.p_value < alpha)


# ---------------------------------------------------------------- valid-set test

def test_valid_set_test_five_variant(five_variant):
    d = generate_dataset(five_variant, 20_000, np.random.default_rng(9))
    assert valid_set_test(d, [0, 2])
    assert not valid_set_test(d, [1, 3, 4])


def test_population_valid_set_five_variant(five_variant):
    cov = five_variant_obs(five_variant)
    assert population_valid_set(cov, [0, 2])
    for s in ([1, 3], [0, 1], [1, 3, 4], [0, 2, 4]):
        assert not population_valid_set(cov, s)


def test_proportional_pleiotropy_fools_the_test():
    # two invalid variants with gamma_y proportional to gamma_x look like a valid pair
    p = ModelParams(0.5, 0.3, [1.0, 2.0, 1.0], [0.4, 0.8, 0.0], [0, 0, 0], 0.5, 0.5, [1, 1, 1])
    cov = population_moments_of(p)
    assert population_valid_set(cov, [0, 1])
    assert abs(tsls_population(cov, [0, 1]) - 0.5) > 0.1


def test_invalid_sets_detected_at_population_level():
    rng = np.random.default_rng(10)
    specs = [ScenarioSpec(2, 2, 6, 1000), ScenarioSpec(3, 1, 6, 1000), ScenarioSpec(2, 0, 5, 1000,
                                                                                  bidirectional=False)]
    checked = 0
    for i in range(120):
        p, lab = draw_scenario_params(specs[i % 3], rng)
        cov = population_moments_of(p)
        xy, yx = set(lab.valid_for_xy), set(lab.valid_for_yx)
        for size in (2, 3):
            for s in itertools.combinations(range(p.g), size):
                if set(s) <= xy or set(s) <= yx:
                    assert population_valid_set(cov, s)
                else:
                    assert not population_valid_set(cov, s)
                    checked += 1
    assert checked > 1000


def test_adjusted_test_holds_its_level():
    # valid pair with one strong and one weak instrument: the plain statistic over-rejects badly
    p = ModelParams(0.5, 0.0, [1.0, 0.15, 0.8], [0, 0, 0.7], [0, 0, 0.6], 0.8, 0.8, [1, 1, 1])
    rng = np.random.default_rng(0)
    reps = 300
    plain = adjusted = 0
    for _ in range(reps):
        d = generate_dataset(p, 2000, rng)
        for adjust in (False, True):
            r = leave_one_out_correlations(d.moments, [0, 1], d.ix, d.iy, adjust=adjust)
            hit = fisher_z_pvalues(r, d.n)[0] < 0.05
            plain += hit and not adjust
            adjusted += hit and adjust
    assert plain / reps > 0.5
    assert abs(adjusted / reps - 0.05) < 0.035


def test_adjusted_and_plain_share_population_zeros(five_variant):
    cov = five_variant_obs(five_variant)
    for s, j in [([0], 2), ([2], 0), ([3, 4], 1), ([0, 1], 3)]:
        plain = pseudo_residual_correlation(cov, s, j)
        adj = pseudo_residual_correlation(cov, s, j, adjust=True)
        assert (abs(plain) < 1e-10) == (abs(adj) < 1e-10)
        assert math.copysign(1, plain) == math.copysign(1, adj) or abs(plain) < 1e-10
