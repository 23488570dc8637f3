import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize, stats

from cdmeta import StudySet
from cdmeta import fixed_effect as fe
from cdmeta import heterogeneity as het
from cdmeta.confidence import interval_at, median_estimate
from cdmeta.exceptions import DomainError, ValidationError
from cdmeta.kernels import beta_binomial_pmf, conditional_success_prob
from conftest import random_study_set
from oracles import beta_binomial_quad, binom_pmf, pearson_q

HETEROGENEOUS = StudySet.from_counts([
    (100, 20, 100, 2), (100, 3, 100, 25), (100, 10, 100, 10), (100, 2, 100, 18), (100, 15, 100, 4),
])


def test_kappa_tau_mapping():
    assert het.kappa_to_tau(0.0) == math.inf
    assert het.tau_to_kappa(math.inf) == 0.0
    for k in (0.01, 0.3, 0.9):
        assert het.tau_to_kappa(het.kappa_to_tau(k)) == pytest.approx(k, abs=1e-12)
    with pytest.raises(DomainError):
        het.kappa_to_tau(1.0)


# -------------------------------------------------------------- pairwise


def test_pairwise_stats_lidocaine(lidocaine):
    s = het.pairwise_stats(lidocaine, 2, 6)
    assert (s.w, s.z1, s.z2, s.y12_obs) == (15, 8, 15, 11)
    assert s.r == pytest.approx((0.44 * 1.54) / (0.44 * 1.46), rel=1e-12)


def test_pairwise_stats_printed_orientation(lidocaine_printed):
    s = het.pairwise_stats(lidocaine_printed, "2", "6")
    assert s.r == pytest.approx(1.46 / 1.54, rel=1e-12)


def test_pairwise_lidocaine_lower_endpoint(lidocaine):
    lo, hi = het.pairwise_delta_cd(lidocaine, 2, 6).interval(0.95)
    assert lo == pytest.approx(0.37, abs=0.02)
    assert 10 < hi < 25


def test_pairwise_identical_studies_median_one():
    s = StudySet.from_counts([(50, 3, 60, 4), (50, 3, 60, 4)])
    cd = het.pairwise_delta_cd(s, 1, 2, grid=np.geomspace(0.01, 100, 401))
    assert median_estimate(cd) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_pairwise_swap_identity(seed):
    rng = np.random.default_rng(seed)
    rows = [random_study_set(rng, 1, 12).to_rows()[0][1:] for _ in range(2)]
    s = StudySet.from_counts(rows)
    if s.y1.sum() == 0:
        return
    grid = np.geomspace(0.05, 20, 41)
    a = het.pairwise_delta_cd(s, 1, 2, grid)
    b = het.pairwise_delta_cd(s, 2, 1, 1.0 / grid[::-1])
    np.testing.assert_allclose(b.values[::-1], 1.0 - a.values, rtol=0, atol=1e-12)


def test_pairwise_central_mid_p():
    # equal exposure ratios give r = 1; at delta = 1 the law is central hypergeometric
    s = StudySet.from_counts([(40, 3, 80, 5), (30, 6, 60, 2)])
    st_ = het.pairwise_stats(s, 1, 2)
    assert st_.r == pytest.approx(1.0, abs=1e-15)
    cd = het.pairwise_delta_cd(s, 1, 2, grid=[0.5, 1.0, 2.0])
    ref = stats.hypergeom(st_.z1 + st_.z2, st_.z2, st_.w)
    mid_p = ref.sf(st_.y12_obs) + 0.5 * ref.pmf(st_.y12_obs)
    assert cd.values[1] == pytest.approx(mid_p, abs=1e-12)


def test_pairwise_no_events():
    s = StudySet.from_counts([(40, 3, 80, 0), (30, 6, 60, 0)])
    with pytest.raises(ValidationError, match="no treatment events"):
        het.pairwise_delta_cd(s, 1, 2)
    with pytest.raises(ValidationError):
        het.pairwise_stats(s, 1, 1)


def test_pairwise_monotone(lidocaine):
    for i, j in [(1, 2), (3, 5), (6, 4)]:
        cd = het.pairwise_delta_cd(lidocaine, i, j)
        assert np.all(np.diff(cd.values) >= -1e-12)


# ------------------------------------------------------ marginal likelihood


def test_marginal_at_kappa_zero_is_binomial(lidocaine):
    g = 1.8
    pi = conditional_success_prob(lidocaine.e0, lidocaine.e1, g)
    ref = sum(math.log(binom_pmf(int(z), p, int(y))) for z, p, y in zip(lidocaine.z, pi, lidocaine.y1))
    assert het.marginal_loglik(lidocaine, g, 0.0) == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("m0, m1, y1", [(100, 100, 3), (30, 120, 0), (250, 50, 5)])
def test_marginal_uniform_mixing(m0, m1, y1):
    # tau = 2 with pi0 = 1/2 (gamma0 = e0 / e1) mixes over a uniform density
    s = StudySet.from_counts([(m0, 5 - y1, m1, y1)])
    assert het.marginal_loglik(s, m0 / m1, 1.0 / 3.0) == pytest.approx(math.log(1 / 6), abs=1e-12)


def test_marginal_lidocaine_vs_quadrature(lidocaine):
    g, kappa = 1.8, 0.1
    tau = het.kappa_to_tau(kappa)
    pi = conditional_success_prob(lidocaine.e0, lidocaine.e1, g)
    ref = sum(math.log(beta_binomial_quad(int(z), tau, p, int(y)))
              for z, p, y in zip(lidocaine.z, pi, lidocaine.y1))
    assert het.marginal_loglik(lidocaine, g, kappa) == pytest.approx(ref, abs=1e-10)
    kern = float(np.sum(np.log([beta_binomial_pmf(int(z), tau, p, int(y))
                                for z, p, y in zip(lidocaine.z, pi, lidocaine.y1)])))
    assert het.marginal_loglik(lidocaine, g, kappa) == pytest.approx(kern, abs=1e-10)


def test_marginal_skips_empty_studies(lidocaine):
    extra = StudySet.from_counts([r[1:] for r in lidocaine.to_rows()] + [(50, 0, 50, 0)])
    assert het.marginal_loglik(extra, 1.5, 0.2) == het.marginal_loglik(lidocaine, 1.5, 0.2)


def test_marginal_domain(lidocaine):
    with pytest.raises(DomainError):
        het.marginal_loglik(lidocaine, 0.0, 0.1)
    with pytest.raises(DomainError):
        het.marginal_loglik(lidocaine, 1.0, 1.0)


# ----------------------------------------------------------- random effects


def test_fit_lidocaine_homogeneous(lidocaine):
    fit = het.fit_random_effects(lidocaine)
    assert fit.kappa_hat == 0.0 and fit.tau_hat == math.inf
    assert fit.gamma0_hat == pytest.approx(fe.mcl_estimate(lidocaine).gamma_hat, abs=1e-6)


def test_fit_heterogeneous():
    fit = het.fit_random_effects(HETEROGENEOUS)
    assert fit.kappa_hat > 0.05
    assert fit.kappa_hat == pytest.approx(1.0 / (fit.tau_hat + 1.0), abs=1e-12)
    # joint maximum: no better point nearby
    for dg, dk in [(1.01, 0), (0.99, 0), (1, 0.01), (1, -0.01)]:
        assert het.marginal_loglik(HETEROGENEOUS, fit.gamma0_hat * dg, fit.kappa_hat + dk) <= fit.loglik_max + 1e-9


def test_fit_needs_two_informative_studies():
    s = StudySet.from_counts([(40, 3, 80, 5), (30, 0, 60, 0)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ValidationError):
            het.fit_random_effects(s)


def test_gamma0_curve_lidocaine(lidocaine):
    fit = het.fit_random_effects(lidocaine)
    grid = np.sort(np.append(fe.default_gamma_grid(), fit.gamma0_hat))
    cc = het.gamma0_profile_cc(lidocaine, grid, fit=fit)
    assert cc.cc_values[np.searchsorted(grid, fit.gamma0_hat)] == pytest.approx(0.0, abs=1e-9)
    lo, hi = interval_at(cc, 0.95)
    assert lo == pytest.approx(1.02, abs=0.05) and hi == pytest.approx(3.00, abs=0.05)


def test_gamma0_curve_at_kappa_zero_is_fixed_deviance(lidocaine):
    grid = np.geomspace(0.5, 6, 60)
    a = het.gamma0_profile_cc(lidocaine, grid, kappa_max=0.0)
    b = fe.profile_deviance_cc(lidocaine, grid)
    np.testing.assert_allclose(a.cc_values, b.cc_values, atol=1e-8)


def test_gamma0_curve_heterogeneous_wider():
    grid = np.geomspace(0.05, 20, 200)
    re = interval_at(het.gamma0_profile_cc(HETEROGENEOUS, grid), 0.95)
    fx = interval_at(fe.profile_deviance_cc(HETEROGENEOUS, grid), 0.95)
    assert re[0] < fx[0] and re[1] > fx[1]


# ------------------------------------------------------------------ Q_min


def test_q_min_single_study():
    q, g = het.q_min(StudySet.from_counts([(40, 3, 80, 5)]))
    assert q == pytest.approx(0.0, abs=1e-12)
    assert conditional_success_prob(0.4, 0.8, g) == pytest.approx(5 / 8, abs=1e-12)


def test_q_min_perfect_fit():
    # e0 = e1 so f(2) = 2/3; choose z multiples of 3
    s = StudySet.from_counts([(100, 1, 100, 2), (50, 2, 50, 4), (70, 3, 70, 6)])
    q, g = het.q_min(s)
    assert q == pytest.approx(0.0, abs=1e-12)
    assert g == pytest.approx(2.0, rel=1e-12)


def test_q_min_lidocaine_grid_oracle(lidocaine):
    q, g = het.q_min(lidocaine)
    f = lambda gamma: pearson_q(lidocaine.y1, lidocaine.z, lidocaine.e0, lidocaine.e1, gamma)
    lo, hi = math.log(0.02), math.log(50.0)
    for _ in range(6):
        t = np.linspace(lo, hi, 2000)
        vals = np.array([f(math.exp(v)) for v in t])
        i = int(np.argmin(vals))
        lo, hi = t[max(i - 1, 0)], t[min(i + 1, t.size - 1)]
    assert q == pytest.approx(vals[i], abs=1e-6)
    assert g == pytest.approx(math.exp(t[i]), rel=1e-5)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_q_min_relabeling_and_empty_study(seed):
    rng = np.random.default_rng(seed)
    s = random_study_set(rng, k_max=5, z_max=10)
    if s.z.sum() == 0:
        return
    rows = [r[1:] for r in s.to_rows()]
    perm = rng.permutation(len(rows))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        q0, _ = het.q_min(s)
        q1, _ = het.q_min(StudySet.from_counts([rows[p] for p in perm]))
        q2, _ = het.q_min(StudySet.from_counts(rows + [(30, 0, 40, 0)]))
    assert q1 == pytest.approx(q0, abs=1e-12)
    assert q2 == q0
    assert q0 >= 0


def test_q_min_all_empty():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(DomainError):
            het.q_min(StudySet.from_counts([(30, 0, 40, 0)]))


def test_q_min_batch_matches_bounded_search(rng):
    z = np.array([4, 7, 3, 9])
    e0, e1 = np.array([0.4, 1.1, 0.3, 1.5]), np.array([0.5, 1.0, 0.35, 1.4])
    ys = rng.binomial(z, 0.5, size=(20, 4))
    q, _ = het.q_min_batch(ys, z, e0, e1)
    for row, qq in zip(ys, q):
        if row.sum() in (0, z.sum()):
            continue
        res = optimize.minimize_scalar(lambda t: pearson_q(row, z, e0, e1, math.exp(t)),
                                       bounds=(-12, 12), method="bounded", options={"xatol": 1e-12})
        assert qq == pytest.approx(res.fun, abs=1e-8)


# ----------------------------------------------------------- kappa curve


def test_kappa_cc_replicates_floor(lidocaine):
    with pytest.raises(DomainError):
        het.kappa_cc(lidocaine, replicates=999)


def test_kappa_cc_reproducible(lidocaine):
    a = het.kappa_cc(lidocaine, replicates=1000, seed=3)
    b = het.kappa_cc(lidocaine, replicates=1000, seed=3, n_jobs=4)
    assert np.array_equal(a.cd_raw, b.cd_raw)
    assert np.array_equal(a.cc_values, b.cc_values)
    assert a.point_mass_at_zero == b.point_mass_at_zero


def test_kappa_cc_fields(lidocaine):
    res = het.kappa_cc(lidocaine, replicates=1000, seed=1)
    assert res.kappa_grid[0] == 0.0 and res.kappa_grid.size == 61
    assert 0 <= res.point_mass_at_zero <= 1
    assert np.all((res.cc_values >= 0) & (res.cc_values <= 1))
    assert np.all(np.diff(res.cd_values) >= 0)
    assert res.point_mass_at_zero == res.cd_values[0]
    assert res.cc_at_zero == pytest.approx(abs(1 - 2 * res.point_mass_at_zero))
    assert res.q_obs == pytest.approx(het.q_min(lidocaine)[0])
    assert res.median() == 0.0


def test_kappa_cc_seed_variation(lidocaine):
    fit = het.fit_random_effects(lidocaine)
    inside = total = 0
    for s in range(5):
        a = het.kappa_cc(lidocaine, replicates=1000, seed=100 + s, fit=fit)
        b = het.kappa_cc(lidocaine, replicates=1000, seed=200 + s, fit=fit)
        c = 0.5 * (a.cd_raw + b.cd_raw)
        bound = 4 * np.sqrt(c * (1 - c) / 1000)
        inside += int(np.count_nonzero(np.abs(a.cd_raw - b.cd_raw) <= bound))
        total += c.size
    assert inside / total >= 0.99


def test_kappa_cc_zero_statistic():
    s = StudySet.from_counts([(100, 2, 100, 2), (60, 3, 60, 3), (80, 1, 80, 1)])
    q_obs, _ = het.q_min(s)
    assert q_obs == pytest.approx(0.0, abs=1e-12)
    res = het.kappa_cc(s, kappa_grid=[0.0, 0.1], replicates=2000, seed=5)
    # every simulated statistic is >= 0 = q_obs; ties at zero carry weight 1/2
    fit = het.fit_random_effects(s)
    rng = np.random.default_rng([5, 0])
    pi0 = conditional_success_prob(s.e0, s.e1, fit.gamma0_hat)
    ys = het.sample_beta_binomial(s.z, math.inf, pi0, rng, size=(2000, 3))
    q, _ = het.q_min_batch(ys, s.z, s.e0, s.e1)
    assert np.all(q >= 0)
    ties = np.mean(q <= 1e-9)
    assert res.cd_raw[0] == pytest.approx(1 - 0.5 * ties, abs=1e-12)


def test_kappa_grid_validation(lidocaine):
    with pytest.raises(DomainError):
        het.kappa_cc(lidocaine, kappa_grid=[0.05, 0.1], replicates=1000)
    with pytest.raises(DomainError):
        het.kappa_cc(lidocaine, kappa_grid=[0.0, 1.0], replicates=1000)


# ------------------------------------------------------------- sampling


def test_sample_zero_trials(rng):
    assert np.all(het.sample_beta_binomial(0, 4.0, 0.3, rng, size=100) == 0)


def test_sample_binomial_limit(rng):
    draws = het.sample_beta_binomial(10, math.inf, 0.3, rng, size=100_000)
    assert draws.mean() == pytest.approx(3.0, abs=4 * math.sqrt(2.1 / 100_000))


def test_sample_goodness_of_fit():
    rng = np.random.default_rng(11)
    draws = het.sample_beta_binomial(3, 4.0, 0.3, rng, size=100_000)
    observed = np.bincount(draws, minlength=4)
    expected = np.array([beta_binomial_quad(3, 4.0, 0.3, y) for y in range(4)]) * 100_000
    assert stats.chisquare(observed, expected).pvalue > 0.001
    se = np.sqrt(expected * (1 - expected / 100_000))
    assert np.all(np.abs(observed - expected) <= 3 * se)


def test_sample_domain(rng):
    with pytest.raises(DomainError):
        het.sample_beta_binomial(3, 0.0, 0.3, rng)
    with pytest.raises(DomainError):
        het.sample_beta_binomial(3, 2.0, 1.0, rng)
