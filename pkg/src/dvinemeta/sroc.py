"""Summary ROC outputs: quantile regression curves, contours, summary points.

Curves condition one coordinate of a test's (sensitivity, specificity) pair
on the other through the fitted edge copula:

    x_sens(x_spec, q) = F_sens^{-1}( hinv(q | F_spec(x_spec); theta_edge) )

and symmetrically for the other direction.  Points are emitted as
(specificity-axis value, sensitivity-axis value) pairs; flipping to the ROC
1 - specificity orientation is an output-formatting concern.
"""

from dataclasses import dataclass

import numpy as np

from .copulas import hinv, copula_density, transpose_family
from .errors import ParameterError
from .margins import (MarginFamily, link_invert, margin_cdf, margin_pdf,
                      margin_quantile)

CURVE_TAIL = 0.001  # conditioning grid spans the central 99.8% of the margin
_EDGE_INDEX = {1: 0, 2: 2}
_MARGIN_INDEX = {1: (0, 1), 2: (2, 3)}


def _test_components(fit, test):
    if test not in _EDGE_INDEX:
        raise ParameterError("test index must be 1 or 2")
    a, b = _MARGIN_INDEX[test]
    edge = _EDGE_INDEX[test]
    family = fit.spec.vine.pair_families[edge]
    theta = fit.params_hat.vine.theta[edge]
    return ((fit.spec.margins[a], fit.params_hat.margins[a]),
            (fit.spec.margins[b], fit.params_hat.margins[b]),
            family, theta)


@dataclass
class SrocCurve:
    """Quantile regression curve of one test, as (spec-axis, sens-axis) points."""

    test: int
    q: float
    direction: str  # "x1_given_x2" (sens given spec) or "x2_given_x1"
    scale: str      # "transformed" or "original"
    points: np.ndarray


def quantile_curve(fit, test, q, direction, grid_size=101, scale="original"):
    """Copula quantile regression curve x_target(x_cond, q) for one test."""
    if not 0.0 < q < 1.0:
        raise ParameterError("quantile level q must lie in (0, 1)")
    if direction not in ("x1_given_x2", "x2_given_x1"):
        raise ParameterError("direction must be x1_given_x2 or x2_given_x1")
    if scale not in ("transformed", "original"):
        raise ParameterError("scale must be transformed or original")
    if grid_size < 2:
        raise ParameterError("grid_size must be at least 2")
    (sens_spec, sens_par), (spc_spec, spc_par), family, theta = \
        _test_components(fit, test)
    probs = np.linspace(CURVE_TAIL, 1.0 - CURVE_TAIL, grid_size)
    if direction == "x1_given_x2":
        # sensitivity given specificity: condition on the second edge argument
        x_cond = margin_quantile(spc_spec, spc_par, probs)
        v = hinv(transpose_family(family), theta, q, probs)
        x_target = margin_quantile(sens_spec, sens_par, v)
        pts = np.column_stack([x_cond, x_target])
        links = (spc_spec.link, sens_spec.link)
    else:
        x_cond = margin_quantile(sens_spec, sens_par, probs)
        v = hinv(family, theta, q, probs)
        x_target = margin_quantile(spc_spec, spc_par, v)
        pts = np.column_stack([x_target, x_cond])
        links = (spc_spec.link, sens_spec.link)
    if scale == "original":
        pts = np.column_stack([link_invert(links[0], pts[:, 0]),
                               link_invert(links[1], pts[:, 1])])
    return SrocCurve(test=test, q=float(q), direction=direction,
                     scale=scale, points=pts)


def median_srocs(fit, grid_size=101):
    """Median (q = 0.5) curves in both directions for each test, original scale."""
    return {
        test: (quantile_curve(fit, test, 0.5, "x1_given_x2", grid_size),
               quantile_curve(fit, test, 0.5, "x2_given_x1", grid_size))
        for test in (1, 2)
    }


@dataclass
class ContourGrid:
    """Random-effects density of one test on a rectangular grid.

    ``density[i, j]`` is the joint latent density at
    (spec_values[i], sens_values[j]); ``levels`` maps each requested mass
    coverage to the density threshold whose superlevel set encloses it.
    Axes are on the link scale for normal margins and on (0, 1) for beta
    margins.
    """

    test: int
    spec_values: np.ndarray
    sens_values: np.ndarray
    density: np.ndarray
    levels: dict
    total_mass: float


def re_density_contour(fit, test, grid_size=101, coverage_levels=(0.5, 0.95)):
    """Joint random-effects density grid with mass-coverage contour levels."""
    if grid_size < 10:
        raise ParameterError("grid_size must be at least 10")
    (sens_spec, sens_par), (spc_spec, spc_par), family, theta = \
        _test_components(fit, test)
    if any(not 0.0 < c < 1.0 for c in coverage_levels):
        raise ParameterError("coverage levels must lie in (0, 1)")

    def axis(mspec, mpar):
        lo = float(margin_quantile(mspec, mpar, CURVE_TAIL))
        hi = float(margin_quantile(mspec, mpar, 1.0 - CURVE_TAIL))
        edges = np.linspace(lo, hi, grid_size + 1)
        centers = 0.5 * (edges[:-1] + edges[1:])
        return centers, edges[1] - edges[0]

    xs_spec, d_spec = axis(spc_spec, spc_par)
    xs_sens, d_sens = axis(sens_spec, sens_par)
    f_spec = margin_pdf(spc_spec, spc_par, xs_spec)
    f_sens = margin_pdf(sens_spec, sens_par, xs_sens)
    u_spec = margin_cdf(spc_spec, spc_par, xs_spec)
    u_sens = margin_cdf(sens_spec, sens_par, xs_sens)
    us, up = np.meshgrid(u_sens, u_spec)  # up varies along rows (spec axis)
    dens = (f_spec[:, None] * f_sens[None, :]
            * copula_density(family, theta, us, up).reshape(grid_size, grid_size))
    cell = d_spec * d_sens
    order = np.argsort(dens.ravel())[::-1]
    cum = np.cumsum(dens.ravel()[order]) * cell
    levels = {}
    for cov in coverage_levels:
        idx = np.searchsorted(cum, cov)
        idx = min(idx, order.size - 1)
        levels[float(cov)] = float(dens.ravel()[order[idx]])
    return ContourGrid(test=test, spec_values=xs_spec, sens_values=xs_sens,
                       density=dens, levels=levels,
                       total_mass=float(cum[-1]))


def summary_point(fit, test):
    """Summary operating point: the fitted (sensitivity, specificity) means."""
    if test not in _MARGIN_INDEX:
        raise ParameterError("test index must be 1 or 2")
    a, b = _MARGIN_INDEX[test]
    return (fit.params_hat.margins[a].pi, fit.params_hat.margins[b].pi)
