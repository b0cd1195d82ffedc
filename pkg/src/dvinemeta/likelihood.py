"""Exact and approximate log-likelihoods of the D-vine copula mixed model.

The exact likelihood integrates the product of four binomial kernels against
the vine copula density by Gauss-Legendre quadrature: independent nodes are
transformed into vine-dependent nodes once per parameter point, margin
quantiles turn them into per-study success probabilities, and a quadruple
sum (factorised innermost-axis-first) accumulates each study's pmf.

Per-prefix structure is exploited throughout: the transformed node grids
have sizes n_q, n_q^2, n_q^3, n_q^4 for coordinates 1..4, are shared by all
studies, and partial sums are cached so that a parameter perturbation
touching only margin j re-evaluates only the affected reduction levels
(used by the finite-difference gradients in :mod:`dvinemeta.estimate`).

The HK path replaces the integral with the copula density evaluated at
beta-binomial CDF values; it is fast and intentionally reproduces the
documented bias of that approximation.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _kernels
from .copulas import CopulaFamily
from .dvine import VineParams, VineSpec, vine_density
from .errors import (DataValidationError, NumericalFailure, ParameterError,
                     UnsupportedModelError)
from .margins import (LinkFunction, MarginFamily, MarginParams, MarginSpec,
                      P_CLAMP, beta_shape, betabinomial_cdf, link_apply,
                      link_invert_clamped, validate_margin_params,
                      _betabinom_logpmf_arrays)

H_CLAMP = 1e-12
DEFAULT_NQ = 15


@dataclass(frozen=True)
class StudyRecord:
    """One study's counts: y = (TP1, TN1, TP2, TN2), n = matching denominators."""

    y: tuple
    n: tuple

    def __post_init__(self):
        y = tuple(int(v) for v in self.y)
        n = tuple(int(v) for v in self.n)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "n", n)
        if len(y) != 4 or len(n) != 4:
            raise DataValidationError("StudyRecord needs 4 counts and 4 denominators")
        if any(njj < 0 for njj in n) or any(not 0 <= yj <= nj for yj, nj in zip(y, n)):
            raise DataValidationError(f"counts must satisfy 0 <= y <= n, got y={y}, n={n}")
        if n[0] != n[2] or n[1] != n[3]:
            raise DataValidationError(
                f"shared gold standard requires n1 == n3 and n2 == n4, got n={n}")


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre nodes and weights transplanted to (0, 1)."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise ParameterError("nodes and weights must be matching 1-d arrays")
        if np.any(nodes <= 0.0) or np.any(nodes >= 1.0):
            raise ParameterError("quadrature nodes must be strictly interior")
        if np.any(np.diff(nodes) <= 0.0):
            raise ParameterError("quadrature nodes must be strictly increasing")
        if np.any(weights <= 0.0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ParameterError("weights must be positive and sum to 1")

    @property
    def n_q(self):
        return self.nodes.shape[0]


def gauss_legendre(n_q):
    """Gauss-Legendre rule on (0, 1); exact for polynomial degree <= 2 n_q - 1."""
    n_q = int(n_q)
    if not 2 <= n_q <= 100:
        raise ParameterError("n_q must lie in [2, 100]")
    x, w = np.polynomial.legendre.leggauss(n_q)
    return QuadratureRule((x + 1.0) / 2.0, w / 2.0)


@dataclass(frozen=True)
class ModelSpec:
    """Margins (one family per test) and the vine pair-copula families."""

    margins: tuple
    vine: VineSpec

    def __post_init__(self):
        margins = tuple(self.margins)
        object.__setattr__(self, "margins", margins)
        if len(margins) != 4 or not all(isinstance(m, MarginSpec) for m in margins):
            raise ParameterError("ModelSpec needs four MarginSpec entries")
        if margins[0] != margins[1] or margins[2] != margins[3]:
            raise ParameterError("margins are per test: spec 1 == spec 2, spec 3 == spec 4")

    @classmethod
    def per_test(cls, margin_test1, margin_test2, copula12, copula34,
                 inner=CopulaFamily.BVN):
        return cls((margin_test1, margin_test1, margin_test2, margin_test2),
                   VineSpec.with_test_edges(copula12, copula34, inner))

    @classmethod
    def glmm(cls):
        m = MarginSpec(MarginFamily.NORMAL, LinkFunction.LOGIT)
        return cls((m,) * 4, VineSpec.all_bvn())

    @property
    def label(self):
        return (f"{self.margins[0].label}+{self.margins[2].label}"
                f"|{self.vine.label}")


@dataclass(frozen=True)
class ModelParams:
    """Four MarginParams plus the vine dependence parameters."""

    margins: tuple
    vine: VineParams

    def __post_init__(self):
        margins = tuple(self.margins)
        object.__setattr__(self, "margins", margins)
        if len(margins) != 4 or not all(isinstance(m, MarginParams) for m in margins):
            raise ParameterError("ModelParams needs four MarginParams entries")


def validate_model(spec, params):
    for mspec, mpar in zip(spec.margins, params.margins):
        validate_margin_params(mspec, mpar)


def _study_arrays(data):
    y = np.array([s.y for s in data], dtype=float)
    n = np.array([s.n for s in data], dtype=float)
    return y, n


def _log_binom_coeff(y, n):
    return (special.gammaln(n + 1.0) - special.gammaln(y + 1.0)
            - special.gammaln(n - y + 1.0))


def _kernel_shift(y, n):
    """Per-margin centering constant: max over p of y log p + (n-y) log(1-p)."""
    m = n - y
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(y > 0, y * np.log(y / np.maximum(n, 1.0)), 0.0)
        b = np.where(m > 0, m * np.log(m / np.maximum(n, 1.0)), 0.0)
    return a + b


class LikelihoodWorkspace:
    """Reusable buffers and caches for repeated loglik evaluations on one dataset."""

    def __init__(self, spec, data, rule):
        if len(data) == 0:
            raise DataValidationError("at least one study is required")
        if rule.n_q < 2:
            raise ParameterError("quadrature rule needs at least 2 nodes")
        self.spec = spec
        self.rule = rule
        self.y, self.nn = _study_arrays(data)
        self.m = self.nn - self.y
        self.shift = _kernel_shift(self.y, self.nn)
        self.const = (_log_binom_coeff(self.y, self.nn).sum(axis=1)
                      + self.shift.sum(axis=1))
        ns = self.y.shape[0]
        nq = rule.n_q
        self.w = rule.weights
        self.nodes = rule.nodes
        self.znodes = special.ndtri(self.nodes)
        self._g = [np.empty(nq ** k) for k in (1, 2, 3, 4)]
        self._is_z = False
        self._G1 = np.empty((ns, nq))
        self._G2 = np.empty((ns, nq * nq))
        self._G3 = np.empty((ns, nq ** 3))
        self._A1 = np.empty((ns, nq))
        self._A2 = np.empty((ns, nq * nq))
        self._A3 = np.empty((ns, nq ** 3))
        self._w3 = np.empty(nq ** 3)
        self._w2 = np.empty(nq * nq)
        self._w1 = np.empty(nq)
        self._out = np.empty(ns)
        self._out2 = np.empty(ns)
        self._key = None

    @staticmethod
    def _params_key(params):
        return (tuple((m.pi, m.delta) for m in params.margins),
                params.vine.tau, params.vine.theta)

    def _node_grids(self, vine_params):
        theta = np.asarray(vine_params.theta, dtype=float)
        codes, tcodes = _kernels.family_codes(self.spec.vine.pair_families, theta)
        if np.all((codes == _kernels.INDEP) | (codes == _kernels.BVN)):
            th = np.where(codes == _kernels.INDEP, 0.0, theta)
            _kernels.vine_grids_bvn_z(th, self.znodes, *self._g)
            self._is_z = True
        else:
            nq = self.rule.n_q
            t1 = np.empty(nq * nq)
            t3 = np.empty(nq ** 3)
            t4 = np.empty(nq ** 3)
            _kernels.vine_grids(codes, tcodes, theta, self.nodes,
                                self._g[0], self._g[1], t1,
                                self._g[2], t3, t4, self._g[3])
            self._is_z = False

    def _margin_log_grids(self, j, mparams):
        mspec = self.spec.margins[j]
        validate_margin_params(mspec, mparams)
        grid = self._g[j]
        if mspec.family is MarginFamily.NORMAL:
            z = grid if self._is_z else special.ndtri(grid)
            x = link_apply(mspec.link, mparams.pi) + mparams.delta * z
            p = link_invert_clamped(mspec.link, x)
        else:
            u = special.ndtr(grid) if self._is_z else grid
            alpha, beta = beta_shape(mparams.pi, mparams.delta)
            u = np.clip(u, 1e-14, 1.0 - 1e-14)
            p = np.clip(special.betaincinv(alpha, beta, u),
                        P_CLAMP, 1.0 - P_CLAMP)
        return np.log(p), np.log1p(-p)

    def prepare(self, params):
        key = self._params_key(params)
        if key == self._key:
            return
        self._key = None
        self._node_grids(params.vine)
        grids = [self._margin_log_grids(j, params.margins[j]) for j in range(4)]
        _kernels.study_sums_full(
            grids[0][0], grids[0][1], grids[1][0], grids[1][1],
            grids[2][0], grids[2][1], grids[3][0], grids[3][1],
            self.w, self.y, self.m, self.shift, self.const,
            self._G1, self._G2, self._G3, self._A1, self._A2, self._A3,
            self._out)
        self._key = key

    def study_logpmfs(self, params):
        self.prepare(params)
        return self._out

    def loglik(self, params):
        self.prepare(params)
        return math.fsum(self._out)

    def loglik_margin_perturbed(self, base_params, j, mparams):
        """loglik where only margin j's parameters differ from the prepared base."""
        self.prepare(base_params)
        lp, lq = self._margin_log_grids(j, mparams)
        _kernels.study_sums_perturbed(
            j + 1, lp, lq, self.w, self.y, self.m, self.shift, self.const,
            self._G1, self._G2, self._G3, self._A1, self._A2, self._A3,
            self._out2, self._w3, self._w2, self._w1)
        return math.fsum(self._out2)


def study_pmf(spec, params, study, rule):
    """Log joint pmf of one study under the model (quadruple quadrature sum)."""
    validate_model(spec, params)
    ws = LikelihoodWorkspace(spec, [study], rule)
    out = ws.study_logpmfs(params)
    val = float(out[0])
    if not np.isfinite(val):
        raise NumericalFailure("study pmf evaluated non-finite", params=params)
    return val

def loglik(spec, params, data, rule):
    """Exact joint log-likelihood: sum of per-study log pmfs."""
    validate_model(spec, params)
    ws = LikelihoodWorkspace(spec, list(data), rule)
    out = ws.study_logpmfs(params)
    bad = np.where(~np.isfinite(out))[0]
    if bad.size:
        raise NumericalFailure("log-likelihood evaluated non-finite",
                               params=params, study_index=int(bad[0]))
    return math.fsum(out)


def hk_study_terms(spec, params, data):
    """Per-study HK log terms: log c(H(y);theta) + sum_j log h(y_j)."""
    for mspec in spec.margins:
        if mspec.family is not MarginFamily.BETA:
            raise UnsupportedModelError(
                "the HK approximate likelihood requires beta-identity margins")
    validate_model(spec, params)
    y, n = _study_arrays(data)
    ns = y.shape[0]
    hmat = np.empty((ns, 4))
    logh = np.empty((ns, 4))
    for j in range(4):
        alpha, beta = beta_shape(params.margins[j].pi, params.margins[j].delta)
        logh[:, j] = _betabinom_logpmf_arrays(y[:, j], n[:, j], alpha, beta)
        for s in range(ns):
            from .margins import BetaBinomialParams
            bb = BetaBinomialParams(int(n[s, j]), params.margins[j].pi,
                                    params.margins[j].delta)
            hmat[s, j] = betabinomial_cdf(bb, int(y[s, j]))
    hmat = np.clip(hmat, H_CLAMP, 1.0 - H_CLAMP)
    dens = vine_density(params.vine, spec.vine, hmat)
    with np.errstate(divide="ignore"):
        return np.log(dens) + logh.sum(axis=1)


def hk_loglik(spec, params, data):
    """HK approximate log-likelihood (beta-binomial CDF plug-in)."""
    terms = hk_study_terms(spec, params, list(data))
    if not np.all(np.isfinite(terms)):
        raise NumericalFailure("HK log-likelihood evaluated non-finite",
                               params=params)
    return math.fsum(terms)


def pair_logpmfs(margin_specs, margin_params, family, theta, y, n, rule):
    """Per-study log pmfs of a bivariate copula mixed model (edge sens-spec).

    ``y``/``n`` are (S, 2) arrays for one test's sensitivity and specificity
    columns.
    """
    y = np.asarray(y, dtype=float)
    n = np.asarray(n, dtype=float)
    m = n - y
    nq = rule.n_q
    w = rule.weights
    nodes = rule.nodes
    u1 = np.repeat(nodes, nq)
    u2 = np.tile(nodes, nq)
    fam_codes, _ = _kernels.family_codes([family], np.array([theta]))
    v2 = _kernels._hinv_np(fam_codes[0], theta, u2, u1)
    shift = _kernel_shift(y, n)
    const = _log_binom_coeff(y, n).sum(axis=1) + shift.sum(axis=1)

    def log_grids(j, grid):
        mspec, mpar = margin_specs[j], margin_params[j]
        validate_margin_params(mspec, mpar)
        if mspec.family is MarginFamily.NORMAL:
            x = (link_apply(mspec.link, mpar.pi)
                 + mpar.delta * special.ndtri(grid))
            p = link_invert_clamped(mspec.link, x)
        else:
            alpha, beta = beta_shape(mpar.pi, mpar.delta)
            p = np.clip(special.betaincinv(alpha, beta,
                                           np.clip(grid, 1e-14, 1 - 1e-14)),
                        P_CLAMP, 1.0 - P_CLAMP)
        return np.log(p), np.log1p(-p)

    lp1, lq1 = log_grids(0, nodes)
    lp2, lq2 = log_grids(1, v2)
    g2 = np.exp(y[:, 1:2] * lp2[None, :] + m[:, 1:2] * lq2[None, :]
                - shift[:, 1:2])
    a1 = g2.reshape(len(y), nq, nq) @ w
    g1 = np.exp(y[:, 0:1] * lp1[None, :] + m[:, 0:1] * lq1[None, :]
                - shift[:, 0:1])
    total = (g1 * a1) @ w
    with np.errstate(divide="ignore"):
        return np.where(total > 0.0, np.log(total), -np.inf) + const
