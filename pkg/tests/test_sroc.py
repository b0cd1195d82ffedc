import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import special

from dvinemeta.copulas import CopulaFamily, hinv, theta_of_tau
from dvinemeta.dvine import VineParams, VineSpec
from dvinemeta.errors import ParameterError
from dvinemeta.estimate import FitResult, param_names, unpack_params
from dvinemeta.likelihood import ModelSpec
from dvinemeta.margins import LinkFunction, MarginFamily, MarginSpec
from dvinemeta.sroc import (median_srocs, quantile_curve, re_density_contour,
                            summary_point)


def _fit_result(spec, x):
    x = np.asarray(x, dtype=float)
    return FitResult(
        spec=spec, params_hat=unpack_params(spec, x),
        param_names=param_names(spec), estimates=x, se=None,
        loglik_max=-100.0, n_q=15, converged=True, iterations=10,
        gradient_norm=1e-6, hessian_pd=False)


def _normal_fit(taus=(0.0,) * 6, pis=(0.7, 0.8, 0.7, 0.95),
                sigmas=(0.7, 1.0, 0.7, 0.8),
                copula12=CopulaFamily.BVN, copula34=CopulaFamily.BVN):
    m = MarginSpec(MarginFamily.NORMAL, LinkFunction.LOGIT)
    spec = ModelSpec.per_test(m, m, copula12, copula34)
    return _fit_result(spec, list(pis) + list(sigmas) + list(taus))


def _beta_fit(taus=(0.0,) * 6, gammas=(0.1, 0.15, 0.1, 0.02)):
    m = MarginSpec(MarginFamily.BETA, LinkFunction.IDENTITY)
    spec = ModelSpec.per_test(m, m, CopulaFamily.BVN, CopulaFamily.BVN)
    return _fit_result(spec, [0.7, 0.8, 0.7, 0.95] + list(gammas) + list(taus))


def test_independence_median_curve_is_flat():
    fit = _normal_fit()
    curve = quantile_curve(fit, 1, 0.5, "x1_given_x2")
    assert curve.scale == "original"
    assert_allclose(curve.points[:, 1], 0.7, atol=1e-12)
    t = quantile_curve(fit, 1, 0.5, "x1_given_x2", scale="transformed")
    assert_allclose(t.points[:, 1], math.log(0.7 / 0.3), atol=1e-12)


def test_bvn_normal_curve_matches_conditional_normal():
    tau12 = -0.3
    fit = _normal_fit(taus=(tau12, 0, 0, 0, 0, 0))
    rho = theta_of_tau(CopulaFamily.BVN, tau12)
    mu1, mu2 = special.logit(0.7), special.logit(0.8)
    s1, s2 = 0.7, 1.0
    for q in (0.25, 0.5, 0.9):
        curve = quantile_curve(fit, 1, q, "x1_given_x2", scale="transformed")
        x2 = curve.points[:, 0]
        want = (mu1 + rho * s1 / s2 * (x2 - mu2)
                + s1 * math.sqrt(1 - rho * rho) * special.ndtri(q))
        assert_allclose(curve.points[:, 1], want, atol=1e-8)


def test_quantile_curves_ordered_in_q():
    fit = _normal_fit(taus=(-0.4, 0.1, -0.3, 0.2, 0.1, 0.05),
                      copula12=CopulaFamily.CLAYTON270,
                      copula34=CopulaFamily.FRANK)
    for test in (1, 2):
        for direction in ("x1_given_x2", "x2_given_x1"):
            lo = quantile_curve(fit, test, 0.5, direction)
            hi = quantile_curve(fit, test, 0.99, direction)
            col = 1 if direction == "x1_given_x2" else 0
            assert np.all(hi.points[:, col] > lo.points[:, col])


def test_original_scale_is_backtransformed_exactly():
    fit = _normal_fit(taus=(-0.3, 0, 0, 0, 0, 0))
    t = quantile_curve(fit, 1, 0.3, "x1_given_x2", scale="transformed")
    o = quantile_curve(fit, 1, 0.3, "x1_given_x2", scale="original")
    assert_allclose(o.points, special.expit(t.points), rtol=0, atol=0)


def test_curve_points_monotone_in_conditioning():
    fit = _normal_fit(taus=(-0.3, 0, -0.2, 0, 0, 0))
    c = quantile_curve(fit, 2, 0.5, "x1_given_x2")
    assert np.all(np.diff(c.points[:, 0]) > 0)
    c2 = quantile_curve(fit, 2, 0.5, "x2_given_x1")
    assert np.all(np.diff(c2.points[:, 1]) > 0)


def test_direction_transpose_consistency_for_rotated_family():
    """For the 90/270 rotations the two directions use transposed families."""
    tau = -0.45
    fit = _normal_fit(taus=(tau, 0, 0, 0, 0, 0),
                      copula12=CopulaFamily.CLAYTON270)
    theta = theta_of_tau(CopulaFamily.CLAYTON270, tau)
    curve = quantile_curve(fit, 1, 0.3, "x1_given_x2", scale="transformed",
                           grid_size=21)
    probs = np.linspace(0.001, 0.999, 21)
    want_v = hinv(CopulaFamily.CLAYTON90, theta, 0.3, probs)
    mu1 = special.logit(0.7)
    want = mu1 + 0.7 * special.ndtri(want_v)
    assert_allclose(curve.points[:, 1], want, atol=1e-10)


def test_median_srocs_symmetric_tests():
    fit = _normal_fit(pis=(0.7, 0.8, 0.7, 0.8), sigmas=(0.7, 1.0, 0.7, 1.0),
                      taus=(-0.3, 0.0, -0.3, 0.0, 0.0, 0.0))
    curves = median_srocs(fit)
    for a, b in zip(curves[1], curves[2]):
        assert_allclose(a.points, b.points, atol=1e-12)
        assert a.q == 0.5 and a.scale == "original"


def test_quantile_curve_validation():
    fit = _normal_fit()
    with pytest.raises(ParameterError):
        quantile_curve(fit, 3, 0.5, "x1_given_x2")
    with pytest.raises(ParameterError):
        quantile_curve(fit, 1, 0.0, "x1_given_x2")
    with pytest.raises(ParameterError):
        quantile_curve(fit, 1, 0.5, "diagonal")


# ---------------------------------------------------------------------------
# contours

def test_contour_independence_mass_coverage():
    fit = _normal_fit()
    grid = re_density_contour(fit, 1, grid_size=151)
    assert grid.total_mass <= 1.0 + 2e-2
    level = grid.levels[0.5]
    cell = ((grid.spec_values[1] - grid.spec_values[0])
            * (grid.sens_values[1] - grid.sens_values[0]))
    mass_in = grid.density[grid.density >= level].sum() * cell
    assert abs(mass_in - 0.5) < 0.02


def test_contour_levels_nested():
    fit = _normal_fit(taus=(-0.3, 0, 0, 0, 0, 0))
    grid = re_density_contour(fit, 1, grid_size=101,
                              coverage_levels=(0.5, 0.95))
    assert grid.levels[0.95] <= grid.levels[0.5]


def test_contour_beta_concentrates_with_small_gamma():
    tight = re_density_contour(_beta_fit(gammas=(0.002, 0.002, 0.1, 0.02)), 1,
                               grid_size=101)
    idx = np.unravel_index(np.argmax(tight.density), tight.density.shape)
    assert abs(tight.spec_values[idx[0]] - 0.8) < 0.05
    assert abs(tight.sens_values[idx[1]] - 0.7) < 0.05


def test_contour_negative_orientation():
    fit = _normal_fit(taus=(-0.3, 0, 0, 0, 0, 0))
    grid = re_density_contour(fit, 1, grid_size=81)
    level = grid.levels[0.5]
    spec_idx, sens_idx = np.where(grid.density >= level)
    xs = grid.spec_values[spec_idx]
    ys = grid.sens_values[sens_idx]
    cov = np.cov(xs, ys)[0, 1]
    assert cov < 0.0


def test_contour_grid_size_validation():
    with pytest.raises(ParameterError):
        re_density_contour(_normal_fit(), 1, grid_size=5)


# ---------------------------------------------------------------------------
# summary points

def test_summary_point_echoes_estimates():
    fit = _normal_fit(pis=(0.679, 0.826, 0.680, 0.959))
    assert summary_point(fit, 1) == (0.679, 0.826)
    assert summary_point(fit, 2) == (0.680, 0.959)
    with pytest.raises(ParameterError):
        summary_point(fit, 0)


def test_q25_curve_calibration_by_simulation():
    """A q = 0.25 curve should sit above ~25% of simulated pairs everywhere."""
    tau12 = -0.4
    fit = _normal_fit(taus=(tau12, 0, 0, 0, 0, 0),
                      copula12=CopulaFamily.FRANK)
    theta = theta_of_tau(CopulaFamily.FRANK, tau12)
    rng = np.random.default_rng(8)
    n = 100000
    u_spec = rng.uniform(size=n)
    u_sens = hinv(CopulaFamily.FRANK, theta, rng.uniform(size=n), u_spec)
    mu1, mu2 = special.logit(0.7), special.logit(0.8)
    x_sens = mu1 + 0.7 * special.ndtri(u_sens)
    x_spec = mu2 + 1.0 * special.ndtri(u_spec)
    curve = quantile_curve(fit, 1, 0.25, "x1_given_x2", scale="transformed",
                           grid_size=201)
    curve_at = np.interp(x_spec, curve.points[:, 0], curve.points[:, 1])
    inside = (curve.points[0, 0] <= x_spec) & (x_spec <= curve.points[-1, 0])
    frac = np.mean(x_sens[inside] <= curve_at[inside])
    assert abs(frac - 0.25) < 0.02
    # per-bin calibration across the conditioning range
    bins = np.quantile(x_spec[inside], np.linspace(0, 1, 6))
    for k in range(5):
        sel = inside & (x_spec >= bins[k]) & (x_spec <= bins[k + 1])
        assert abs(np.mean(x_sens[sel] <= curve_at[sel]) - 0.25) < 0.02
