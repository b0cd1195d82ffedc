import numpy as np
import pytest
from numpy.testing import assert_allclose

from dvinemeta import estimate
from dvinemeta.copulas import CopulaFamily, fitting_tau_bounds
from dvinemeta.dvine import VineSpec
from dvinemeta.errors import DataValidationError, ParameterError
from dvinemeta.estimate import (default_init, discreteness_diagnostic, fit,
                                fit_bivariate, fit_hk,
                                fit_independent_pairs, from_unconstrained,
                                pack_params, param_names, scan,
                                to_unconstrained, unpack_params)
from dvinemeta.likelihood import (ModelSpec, StudyRecord, gauss_legendre,
                                  loglik)
from dvinemeta.margins import (LinkFunction, MarginFamily, MarginParams,
                               MarginSpec)
from dvinemeta.simstudy import SimConfig, generate_dataset, _truth_model

from conftest import normal_logit_spec, truth_params


def _small_dataset(margin_family="normal", n_studies=12, study_size=60,
                   seed=100):
    spec, params = _truth_model(margin_family)
    cfg = SimConfig(n_studies=n_studies, study_size=study_size, prevalence=0.4,
                    spec=spec, params=params, replicates=1, seed=seed, n_q=8)
    return spec, params, generate_dataset(cfg, 0)


# ---------------------------------------------------------------------------
# transforms & inits

def test_pack_unpack_round_trip():
    spec = normal_logit_spec()
    params = truth_params(spec)
    x = pack_params(params)
    again = pack_params(unpack_params(spec, x))
    assert_allclose(again, x, atol=1e-14)


def test_unconstrained_round_trip():
    spec = ModelSpec.per_test(
        MarginSpec(MarginFamily.NORMAL, LinkFunction.LOGIT),
        MarginSpec(MarginFamily.BETA, LinkFunction.IDENTITY),
        CopulaFamily.CLAYTON270, CopulaFamily.FRANK)
    x = np.array([0.7, 0.8, 0.7, 0.95, 0.7, 1.0, 0.1, 0.02,
                  -0.3, 0.1, -0.4, 0.5, 0.4, 0.2])
    s = to_unconstrained(spec, x)
    back = from_unconstrained(spec, s)
    assert_allclose(back, x, atol=1e-9)


def test_param_names_layout():
    spec = ModelSpec.per_test(
        MarginSpec(MarginFamily.NORMAL, LinkFunction.LOGIT),
        MarginSpec(MarginFamily.BETA, LinkFunction.IDENTITY),
        CopulaFamily.BVN, CopulaFamily.BVN)
    names = param_names(spec)
    assert names[:4] == ["pi1", "pi2", "pi3", "pi4"]
    assert names[4:8] == ["sigma1", "sigma2", "gamma3", "gamma4"]
    assert names[8:] == ["tau12", "tau23", "tau34", "tau13|2", "tau24|3",
                         "tau14|23"]


def test_default_init_shrink_rule():
    spec = normal_logit_spec()
    data = [StudyRecord((7, 8, 7, 8), (10, 10, 10, 10)),
            StudyRecord((14, 16, 14, 16), (20, 20, 20, 20))]
    init = default_init(spec, data)
    assert_allclose(init.margins[0].pi, 0.5 + 0.99 * (0.7 - 0.5), atol=1e-12)
    assert init.margins[0].delta == 0.5


def test_default_init_single_study_and_clayton_clip():
    spec = ModelSpec.per_test(
        MarginSpec(MarginFamily.NORMAL, LinkFunction.LOGIT),
        MarginSpec(MarginFamily.NORMAL, LinkFunction.LOGIT),
        CopulaFamily.CLAYTON0, CopulaFamily.CLAYTON90)
    data = [StudyRecord((7, 8, 7, 8), (10, 10, 10, 10))]
    init = default_init(spec, data)
    lo0, hi0 = fitting_tau_bounds(CopulaFamily.CLAYTON0, inset=0.01)
    assert lo0 <= init.vine.tau[0] <= hi0
    lo2, hi2 = fitting_tau_bounds(CopulaFamily.CLAYTON90, inset=0.01)
    assert lo2 <= init.vine.tau[2] <= hi2


def test_default_init_empty_and_degenerate():
    spec = normal_logit_spec()
    with pytest.raises(DataValidationError):
        default_init(spec, [])
    with pytest.raises(DataValidationError):
        default_init(spec, [StudyRecord((0, 0, 0, 0), (0, 0, 0, 0))])


def test_init_beta_margin_dispersion():
    beta = MarginSpec(MarginFamily.BETA, LinkFunction.IDENTITY)
    spec = ModelSpec((beta,) * 4, VineSpec.all_bvn())
    data = [StudyRecord((7, 8, 7, 8), (10, 10, 10, 10)),
            StudyRecord((5, 9, 5, 9), (8, 11, 8, 11))]
    init = default_init(spec, data)
    assert init.margins[0].delta == 0.1


# ---------------------------------------------------------------------------
# fitting

def test_fit_refit_is_fixed_point():
    spec, _, data = _small_dataset()
    rule = gauss_legendre(8)
    first = fit(spec, data, rule)
    assert first.converged
    again = fit(spec, data, rule, init=first.params_hat)
    assert again.iterations <= 2
    assert abs(again.loglik_max - first.loglik_max) < 1e-8


def test_fit_reports_loglik_consistent_with_module(toy_data):
    spec = normal_logit_spec()
    rule = gauss_legendre(8)
    res = fit(spec, toy_data, rule)
    check = loglik(spec, res.params_hat, toy_data, rule)
    assert_allclose(res.loglik_max, check, atol=1e-10)
    assert res.n_q == 8
    assert len(res.estimates) == 14


def test_fit_se_available_on_clean_data():
    spec, _, data = _small_dataset(n_studies=16)
    res = fit(spec, data, gauss_legendre(8))
    assert res.converged
    if res.hessian_pd:
        assert res.se is not None
        assert np.all(res.se > 0)


def test_fit_hk_runs_on_beta_model():
    spec, _, data = _small_dataset("beta", n_studies=14)
    res = fit_hk(spec, data)
    assert res.method == "hk"
    assert np.isfinite(res.loglik_max)
    from dvinemeta.likelihood import hk_loglik
    assert_allclose(res.loglik_max, hk_loglik(spec, res.params_hat, data),
                    atol=1e-10)


# ---------------------------------------------------------------------------
# scans and pairs

def test_scan_combinatorics_and_best(toy_data):
    rule = gauss_legendre(6)
    margins = [MarginSpec(MarginFamily.NORMAL, LinkFunction.LOGIT)]
    copulas = [CopulaFamily.BVN, CopulaFamily.FRANK]
    report = scan(toy_data, rule, margins, copulas)
    assert len(report.entries) == 1 * 1 * 2 * 2
    assert report.best is not None
    best = report.entries[report.best].fit.loglik_max
    for e in report.entries:
        if e.fit is not None:
            assert e.fit.loglik_max <= best + 1e-12


def test_scan_single_cell(toy_data):
    rule = gauss_legendre(6)
    report = scan(toy_data, rule,
                  [MarginSpec(MarginFamily.NORMAL, LinkFunction.LOGIT)],
                  [CopulaFamily.BVN])
    assert len(report.entries) == 1
    assert report.best == 0


def test_scan_empty_menu_error(toy_data):
    with pytest.raises(ParameterError):
        scan(toy_data, gauss_legendre(6), [], [CopulaFamily.BVN])


def test_independent_pairs_sum_matches_restricted_joint():
    spec, _, data = _small_dataset(n_studies=10)
    rule = gauss_legendre(8)
    m = MarginSpec(MarginFamily.NORMAL, LinkFunction.LOGIT)
    f1, f2 = fit_independent_pairs(data, rule, (m, m),
                                   (CopulaFamily.BVN, CopulaFamily.BVN))
    assert f1.converged and f2.converged
    # evaluate the joint likelihood at the combined pair estimates with all
    # cross-test dependence zeroed: must equal the sum of the pair logliks
    from dvinemeta.dvine import VineParams
    margins = (MarginParams(f1.estimates[0], f1.estimates[2]),
               MarginParams(f1.estimates[1], f1.estimates[3]),
               MarginParams(f2.estimates[0], f2.estimates[2]),
               MarginParams(f2.estimates[1], f2.estimates[3]))
    from dvinemeta.likelihood import ModelParams
    joint_params = ModelParams(margins, VineParams.from_tau(
        spec.vine, (f1.estimates[4], 0.0, f2.estimates[4], 0.0, 0.0, 0.0)))
    joint = loglik(spec, joint_params, data, rule)
    assert abs(joint - (f1.loglik_max + f2.loglik_max)) < 1e-6


def test_pair_fit_requires_observations():
    data = [StudyRecord((0, 2, 0, 2), (0, 5, 0, 5)),
            StudyRecord((0, 3, 0, 3), (0, 6, 0, 6))]
    with pytest.raises(DataValidationError):
        fit_bivariate(data, gauss_legendre(6), 1,
                      MarginSpec(MarginFamily.NORMAL, LinkFunction.LOGIT),
                      CopulaFamily.BVN)
    with pytest.raises(ParameterError):
        fit_bivariate(data, gauss_legendre(6), 3,
                      MarginSpec(MarginFamily.NORMAL, LinkFunction.LOGIT),
                      CopulaFamily.BVN)


# ---------------------------------------------------------------------------
# discreteness diagnostic

def test_diagnostic_bernoulli_flags_unreliable():
    rng = np.random.default_rng(2)
    data = []
    for _ in range(30):
        y = rng.binomial(1, [0.7, 0.8, 0.7, 0.9])
        data.append(StudyRecord(tuple(y), (1, 1, 1, 1)))
    rep = discreteness_diagnostic(data)
    assert not rep.hk_reliable
    assert rep.max_probability > 0.1
    # Bernoulli pmf values cannot drop below min(pi, 1 - pi) per column
    for j in range(4):
        pi_hat = rep.estimates[j][0]
        assert np.all(rep.probabilities[:, j] >= min(pi_hat, 1 - pi_hat) - 1e-9)


def test_diagnostic_large_studies_reliable():
    spec, params, data = _small_dataset("beta", n_studies=25, study_size=2000)
    rep = discreteness_diagnostic(data)
    assert rep.max_probability < 0.1
    assert rep.hk_reliable


def test_diagnostic_empty_error():
    with pytest.raises(DataValidationError):
        discreteness_diagnostic([])


def test_diagnostic_histogram_schema():
    _, _, data = _small_dataset(n_studies=10)
    rep = discreteness_diagnostic(data)
    assert rep.hist_counts.sum() == rep.probabilities.size
    assert len(rep.hist_edges) == len(rep.hist_counts) + 1
