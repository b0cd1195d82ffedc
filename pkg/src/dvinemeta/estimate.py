"""Maximum-likelihood fitting, model scans and diagnostics.

Fitting runs BFGS on an unconstrained reparametrisation (logit for
probabilities and beta dispersions, log for normal scales, scaled logit onto
each tau's admissible family interval with a 1e-6 inset).  Gradients are
central finite differences with step cbrt(eps) * max(1, |x_k|); margin-only
perturbations reuse the cached quadrature prefix sums, so a 14-parameter
gradient costs far less than 28 full likelihood evaluations.

Standard errors come from the numerically differenced Hessian of the
negative log-likelihood in the *original* parametrisation; a non-positive-
definite Hessian yields absent standard errors rather than a pseudo-inverse.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, special, stats

from .copulas import CopulaFamily, fitting_tau_bounds, theta_of_tau
from .dvine import EDGE_LABELS, VineParams
from .errors import DataValidationError, NumericalFailure, ParameterError
from .likelihood import (DEFAULT_NQ, LikelihoodWorkspace, ModelParams,
                         ModelSpec, StudyRecord, gauss_legendre, hk_loglik,
                         pair_logpmfs)
from .margins import (BetaBinomialParams, MarginFamily, MarginParams,
                      MarginSpec, betabinomial_pmf)

GRAD_TOL = 1e-5
CONV_GRAD_TOL = 1e-4
MAX_ITER = 500
HK_PROB_THRESHOLD = 0.1
_EPS = np.finfo(float).eps
_GRAD_STEP = _EPS ** (1.0 / 3.0)
_HESS_STEP = _EPS ** 0.25


# ---------------------------------------------------------------------------
# parameter packing and transforms

def param_names(spec):
    names = [f"pi{j + 1}" for j in range(4)]
    for j, ms in enumerate(spec.margins):
        tag = "sigma" if ms.family is MarginFamily.NORMAL else "gamma"
        names.append(f"{tag}{j + 1}")
    names += [f"tau{lab}" for lab in EDGE_LABELS]
    return names


def pack_params(params):
    x = [m.pi for m in params.margins]
    x += [m.delta for m in params.margins]
    x += list(params.vine.tau)
    return np.asarray(x, dtype=float)


def unpack_params(spec, x):
    margins = tuple(MarginParams(float(x[j]), float(x[4 + j])) for j in range(4))
    vine = VineParams.from_tau(spec.vine, x[8:14])
    return ModelParams(margins, vine)


def _tau_bounds(spec):
    return [fitting_tau_bounds(f) for f in spec.vine.pair_families]


def to_unconstrained(spec, x):
    s = np.empty(14)
    s[0:4] = special.logit(x[0:4])
    for j in range(4):
        if spec.margins[j].family is MarginFamily.NORMAL:
            s[4 + j] = math.log(x[4 + j])
        else:
            s[4 + j] = special.logit(x[4 + j])
    for k, (lo, hi) in enumerate(_tau_bounds(spec)):
        frac = (x[8 + k] - lo) / (hi - lo)
        s[8 + k] = special.logit(np.clip(frac, 1e-12, 1.0 - 1e-12))
    return s


def from_unconstrained(spec, s):
    x = np.empty(14)
    x[0:4] = special.expit(s[0:4])
    for j in range(4):
        if spec.margins[j].family is MarginFamily.NORMAL:
            x[4 + j] = math.exp(s[4 + j])
        else:
            x[4 + j] = special.expit(s[4 + j])
    for k, (lo, hi) in enumerate(_tau_bounds(spec)):
        x[8 + k] = lo + (hi - lo) * special.expit(s[8 + k])
    return x


def _param_domains(spec):
    doms = [(1e-9, 1.0 - 1e-9)] * 4
    for j in range(4):
        if spec.margins[j].family is MarginFamily.NORMAL:
            doms.append((1e-9, np.inf))
        else:
            doms.append((1e-9, 1.0 - 1e-9))
    doms += _tau_bounds(spec)
    return doms


# ---------------------------------------------------------------------------
# results

@dataclass
class FitResult:
    """Converged estimates on the tau scale with original-scale standard errors."""

    spec: ModelSpec
    params_hat: ModelParams
    param_names: list
    estimates: np.ndarray
    se: Optional[np.ndarray]
    loglik_max: float
    n_q: int
    converged: bool
    iterations: int
    gradient_norm: float
    hessian_pd: bool
    method: str = "ml"
    message: str = ""


@dataclass
class PairFitResult:
    """Bivariate (single-test) copula mixed model fit."""

    margin: MarginSpec
    family: CopulaFamily
    param_names: list
    estimates: np.ndarray
    se: Optional[np.ndarray]
    loglik_max: float
    n_q: int
    converged: bool
    iterations: int
    gradient_norm: float
    hessian_pd: bool


@dataclass
class ScanEntry:
    spec: ModelSpec
    fit: Optional[FitResult] = None
    error: str = ""


@dataclass
class ScanReport:
    """All fits of a model-grid scan; ``best`` maximises the log-likelihood."""

    entries: list
    best: Optional[int]

    def ranked(self):
        ok = [i for i, e in enumerate(self.entries) if e.fit is not None]
        return sorted(ok, key=lambda i: self._key(i))

    def _key(self, i):
        e = self.entries[i]
        return (-e.fit.loglik_max, len(e.fit.estimates), e.spec.label)


# ---------------------------------------------------------------------------
# generic BFGS driver with smart gradients

def _central_gradient(fun, x, steps):
    g = np.empty_like(x)
    for k in range(x.size):
        h = steps[k]
        xp = x.copy(); xp[k] += h
        xm = x.copy(); xm[k] -= h
        g[k] = (fun(xp) - fun(xm)) / (2.0 * h)
    return g


def _numeric_hessian(fun, x, domains):
    """Central second differences in the original parametrisation."""
    n = x.size
    h = np.empty(n)
    for i in range(n):
        hi = _HESS_STEP * max(1.0, abs(x[i]))
        lo, up = domains[i]
        if np.isfinite(lo):
            hi = min(hi, 0.45 * (x[i] - lo))
        if np.isfinite(up):
            hi = min(hi, 0.45 * (up - x[i]))
        h[i] = max(hi, 1e-12)
    f0 = fun(x)
    hess = np.empty((n, n))
    for i in range(n):
        xp = x.copy(); xp[i] += h[i]
        xm = x.copy(); xm[i] -= h[i]
        hess[i, i] = (fun(xp) - 2.0 * f0 + fun(xm)) / h[i] ** 2
    for i in range(n):
        for j in range(i + 1, n):
            xpp = x.copy(); xpp[i] += h[i]; xpp[j] += h[j]
            xpm = x.copy(); xpm[i] += h[i]; xpm[j] -= h[j]
            xmp = x.copy(); xmp[i] -= h[i]; xmp[j] += h[j]
            xmm = x.copy(); xmm[i] -= h[i]; xmm[j] -= h[j]
            hess[i, j] = hess[j, i] = (
                fun(xpp) - fun(xpm) - fun(xmp) + fun(xmm)
            ) / (4.0 * h[i] * h[j])
    return hess


def _se_from_hessian(hess):
    try:
        np.linalg.cholesky(hess)
    except np.linalg.LinAlgError:
        return None, False
    cov = np.linalg.inv(hess)
    diag = np.diag(cov)
    if np.any(diag <= 0.0):
        return None, False
    return np.sqrt(diag), True


def _run_bfgs(neg_loglik, jac, s0):
    res = optimize.minimize(neg_loglik, s0, jac=jac, method="BFGS",
                            options={"gtol": GRAD_TOL, "maxiter": MAX_ITER})
    gnorm = float(np.max(np.abs(res.jac))) if res.jac is not None else np.inf
    converged = bool(res.success) or gnorm < CONV_GRAD_TOL
    return res, gnorm, converged


# ---------------------------------------------------------------------------
# quadrivariate exact-likelihood fit

def fit(spec, data, rule=None, init=None):
    """Maximum-likelihood fit of the D-vine copula mixed model."""
    data = list(data)
    if rule is None:
        rule = gauss_legendre(DEFAULT_NQ)
    if init is None:
        init = default_init(spec, data)
    ws = LikelihoodWorkspace(spec, data, rule)

    def loglik_at(x):
        try:
            return ws.loglik(unpack_params(spec, x))
        except (NumericalFailure, ParameterError):
            return -np.inf

    def neg_loglik(s):
        val = loglik_at(from_unconstrained(spec, s))
        return -val if np.isfinite(val) else np.inf

    def jac(s):
        params = unpack_params(spec, from_unconstrained(spec, s))
        ws.prepare(params)
        g = np.empty(14)
        # margin coordinates first: they reuse the cached prefix sums
        for k in range(8):
            h = _GRAD_STEP * max(1.0, abs(s[k]))
            vals = []
            for sign in (+1.0, -1.0):
                sp = s.copy(); sp[k] += sign * h
                xk = from_unconstrained(spec, sp)
                j = k % 4
                vals.append(ws.loglik_margin_perturbed(
                    params, j, MarginParams(xk[j], xk[4 + j])))
            g[k] = -(vals[0] - vals[1]) / (2.0 * h)
        for k in range(8, 14):
            h = _GRAD_STEP * max(1.0, abs(s[k]))
            sp = s.copy(); sp[k] += h
            sm = s.copy(); sm[k] -= h
            fp = loglik_at(from_unconstrained(spec, sp))
            fm = loglik_at(from_unconstrained(spec, sm))
            g[k] = -(fp - fm) / (2.0 * h)
        return g

    s0 = to_unconstrained(spec, pack_params(init))
    res, gnorm, converged = _run_bfgs(neg_loglik, jac, s0)
    x_hat = from_unconstrained(spec, res.x)
    params_hat = unpack_params(spec, x_hat)
    loglik_max = loglik_at(x_hat)

    def neg_loglik_original(x):
        val = loglik_at(x)
        return -val if np.isfinite(val) else np.inf

    se = None
    hessian_pd = False
    if converged and np.isfinite(loglik_max):
        hess = _numeric_hessian(neg_loglik_original, x_hat, _param_domains(spec))
        se, hessian_pd = _se_from_hessian(hess)
    return FitResult(
        spec=spec, params_hat=params_hat, param_names=param_names(spec),
        estimates=x_hat, se=se, loglik_max=float(loglik_max), n_q=rule.n_q,
        converged=converged, iterations=int(res.nit), gradient_norm=gnorm,
        hessian_pd=hessian_pd, method="ml", message=str(res.message))


def fit_hk(spec, data, init=None):
    """Fit by the HK approximate likelihood (beta margins required)."""
    data = list(data)
    if init is None:
        init = default_init(spec, data)

    def loglik_at(x):
        try:
            return hk_loglik(spec, unpack_params(spec, x), data)
        except (NumericalFailure, ParameterError):
            return -np.inf

    def neg_loglik(s):
        val = loglik_at(from_unconstrained(spec, s))
        return -val if np.isfinite(val) else np.inf

    def jac(s):
        steps = _GRAD_STEP * np.maximum(1.0, np.abs(s))
        return _central_gradient(neg_loglik, s, steps)

    s0 = to_unconstrained(spec, pack_params(init))
    res, gnorm, converged = _run_bfgs(neg_loglik, jac, s0)
    x_hat = from_unconstrained(spec, res.x)
    loglik_max = loglik_at(x_hat)

    def neg_loglik_original(x):
        val = loglik_at(x)
        return -val if np.isfinite(val) else np.inf

    se = None
    hessian_pd = False
    if converged and np.isfinite(loglik_max):
        hess = _numeric_hessian(neg_loglik_original, x_hat, _param_domains(spec))
        se, hessian_pd = _se_from_hessian(hess)
    return FitResult(
        spec=spec, params_hat=unpack_params(spec, x_hat),
        param_names=param_names(spec), estimates=x_hat, se=se,
        loglik_max=float(loglik_max), n_q=0, converged=converged,
        iterations=int(res.nit), gradient_norm=gnorm, hessian_pd=hessian_pd,
        method="hk", message=str(res.message))


# ---------------------------------------------------------------------------
# initial values

def default_init(spec, data):
    """Moment-style starting values: shrunk pooled proportions, sample taus."""
    data = list(data)
    if not data:
        raise DataValidationError("cannot initialise from an empty dataset")
    y = np.array([s.y for s in data], dtype=float)
    n = np.array([s.n for s in data], dtype=float)
    tot = n.sum(axis=0)
    if np.any(tot == 0.0):
        raise DataValidationError("a margin has all-zero denominators")
    pooled = y.sum(axis=0) / tot
    pis = 0.5 + 0.99 * (pooled - 0.5)
    margins = []
    for j in range(4):
        delta = 0.5 if spec.margins[j].family is MarginFamily.NORMAL else 0.1
        margins.append(MarginParams(float(pis[j]), delta))
    # empirical transformed proportions for the tree-1 sample taus
    phat = (y + 0.5) / (n + 1.0)
    taus = np.zeros(6)
    if len(data) >= 2:
        for k, (a, b) in enumerate(((0, 1), (1, 2), (2, 3))):
            t, _ = stats.kendalltau(phat[:, a], phat[:, b])
            if np.isfinite(t):
                taus[k] = t
    for k, fam in enumerate(spec.vine.pair_families):
        lo, hi = fitting_tau_bounds(fam, inset=0.01)
        taus[k] = min(max(taus[k], lo), hi)
    return ModelParams(tuple(margins), VineParams.from_tau(spec.vine, taus))


# ---------------------------------------------------------------------------
# scans

def scan(data, rule, margin_menu, copula_menu, inner=CopulaFamily.BVN):
    """Fit every margin-per-test x copula12 x copula34 combination.

    Edge 23 and the conditional edges stay fixed to ``inner`` (BVN by
    default).  Individual failures are recorded and the scan continues.
    """
    margin_menu = list(margin_menu)
    copula_menu = list(copula_menu)
    if not margin_menu or not copula_menu:
        raise ParameterError("margin and copula menus must be non-empty")
    entries = []
    for m1 in margin_menu:
        for m2 in margin_menu:
            for c12 in copula_menu:
                for c34 in copula_menu:
                    spec = ModelSpec.per_test(m1, m2, c12, c34, inner)
                    try:
                        entries.append(ScanEntry(spec, fit(spec, data, rule)))
                    except Exception as exc:  # scan survives single failures
                        entries.append(ScanEntry(spec, None, f"{exc}"))
    report = ScanReport(entries, None)
    ranked = report.ranked()
    report.best = ranked[0] if ranked else None
    return report


# ---------------------------------------------------------------------------
# bivariate (per-test) fits

_PAIR_COLS = {1: (0, 1), 2: (2, 3)}


def _pair_data(data, test):
    if test not in _PAIR_COLS:
        raise ParameterError("test index must be 1 or 2")
    cols = _PAIR_COLS[test]
    y = np.array([[s.y[cols[0]], s.y[cols[1]]] for s in data], dtype=float)
    n = np.array([[s.n[cols[0]], s.n[cols[1]]] for s in data], dtype=float)
    if np.all(n == 0.0):
        raise DataValidationError(f"test {test} has no observations")
    return y, n


def fit_bivariate(data, rule, test, margin_spec, family, init=None):
    """ML fit of one test's bivariate copula mixed model (its vine edge only)."""
    data = list(data)
    y, n = _pair_data(data, test)
    if np.any(n.sum(axis=0) == 0.0):
        raise DataValidationError("a margin has all-zero denominators")
    mspecs = (margin_spec, margin_spec)
    lo, hi = fitting_tau_bounds(family)
    names = ["pi_sens", "pi_spec",
             "sigma_sens" if margin_spec.family is MarginFamily.NORMAL else "gamma_sens",
             "sigma_spec" if margin_spec.family is MarginFamily.NORMAL else "gamma_spec",
             "tau"]

    if init is None:
        pooled = y.sum(axis=0) / n.sum(axis=0)
        pis = 0.5 + 0.99 * (pooled - 0.5)
        delta = 0.5 if margin_spec.family is MarginFamily.NORMAL else 0.1
        phat = (y + 0.5) / (n + 1.0)
        tau0 = 0.0
        if len(data) >= 2:
            t, _ = stats.kendalltau(phat[:, 0], phat[:, 1])
            if np.isfinite(t):
                tau0 = t
        blo, bhi = fitting_tau_bounds(family, inset=0.01)
        init = np.array([pis[0], pis[1], delta, delta,
                         min(max(tau0, blo), bhi)])
    init = np.asarray(init, dtype=float)

    def x_to_s(x):
        s = np.empty(5)
        s[0:2] = special.logit(x[0:2])
        if margin_spec.family is MarginFamily.NORMAL:
            s[2:4] = np.log(x[2:4])
        else:
            s[2:4] = special.logit(x[2:4])
        s[4] = special.logit(np.clip((x[4] - lo) / (hi - lo), 1e-12, 1 - 1e-12))
        return s

    def s_to_x(s):
        x = np.empty(5)
        x[0:2] = special.expit(s[0:2])
        if margin_spec.family is MarginFamily.NORMAL:
            x[2:4] = np.exp(s[2:4])
        else:
            x[2:4] = special.expit(s[2:4])
        x[4] = lo + (hi - lo) * special.expit(s[4])
        return x

    def loglik_at(x):
        mp = (MarginParams(x[0], x[2]), MarginParams(x[1], x[3]))
        try:
            theta = theta_of_tau(family, x[4])
            terms = pair_logpmfs(mspecs, mp, family, theta, y, n, rule)
        except (ParameterError, NumericalFailure):
            return -np.inf
        if not np.all(np.isfinite(terms)):
            return -np.inf
        return math.fsum(terms)

    def neg_loglik(s):
        val = loglik_at(s_to_x(s))
        return -val if np.isfinite(val) else np.inf

    def jac(s):
        steps = _GRAD_STEP * np.maximum(1.0, np.abs(s))
        return _central_gradient(neg_loglik, s, steps)

    res, gnorm, converged = _run_bfgs(neg_loglik, jac, x_to_s(init))
    x_hat = s_to_x(res.x)
    loglik_max = loglik_at(x_hat)

    def neg_loglik_original(x):
        val = loglik_at(x)
        return -val if np.isfinite(val) else np.inf

    doms = [(1e-9, 1 - 1e-9)] * 2
    doms += ([(1e-9, np.inf)] * 2 if margin_spec.family is MarginFamily.NORMAL
             else [(1e-9, 1 - 1e-9)] * 2)
    doms.append((lo, hi))
    se = None
    hessian_pd = False
    if converged and np.isfinite(loglik_max):
        hess = _numeric_hessian(neg_loglik_original, x_hat, doms)
        se, hessian_pd = _se_from_hessian(hess)
    return PairFitResult(
        margin=margin_spec, family=family, param_names=names,
        estimates=x_hat, se=se, loglik_max=float(loglik_max), n_q=rule.n_q,
        converged=converged, iterations=int(res.nit), gradient_norm=gnorm,
        hessian_pd=hessian_pd)


def fit_independent_pairs(data, rule, margin_specs, families):
    """Separate bivariate meta-analysis per test, assuming independence between tests.

    Returns the two fits; their combined log-likelihood is the comparison
    baseline for dependence evidence.
    """
    f1 = fit_bivariate(data, rule, 1, margin_specs[0], families[0])
    f2 = fit_bivariate(data, rule, 2, margin_specs[1], families[1])
    return f1, f2


# ---------------------------------------------------------------------------
# HK reliability diagnostic

@dataclass
class DiscretenessReport:
    """Per-study beta-binomial probabilities under an independence fit."""

    probabilities: np.ndarray  # (N, 4)
    estimates: list            # (pi_hat, gamma_hat) per outcome column
    hist_counts: np.ndarray
    hist_edges: np.ndarray
    max_probability: float
    hk_reliable: bool


def _fit_betabinom_column(y, n):
    pooled = min(max(y.sum() / max(n.sum(), 1.0), 1e-3), 1 - 1e-3)

    def neg(s):
        pi = special.expit(s[0])
        gamma = special.expit(s[1])
        alpha = pi * (1 - gamma) / gamma
        beta = (1 - pi) * (1 - gamma) / gamma
        from .margins import _betabinom_logpmf_arrays
        val = _betabinom_logpmf_arrays(y, n, alpha, beta).sum()
        return -val if np.isfinite(val) else np.inf

    res = optimize.minimize(neg, np.array([special.logit(pooled),
                                           special.logit(0.1)]),
                            method="BFGS", options={"gtol": 1e-6})
    return float(special.expit(res.x[0])), float(special.expit(res.x[1]))


def discreteness_diagnostic(data, bins=20):
    """Size of per-study discrete probabilities under independence with beta margins.

    Large values (max above 0.1) signal that the HK approximation is
    unreliable for this dataset.
    """
    data = list(data)
    if not data:
        raise DataValidationError("cannot diagnose an empty dataset")
    y = np.array([s.y for s in data], dtype=float)
    n = np.array([s.n for s in data], dtype=float)
    probs = np.empty_like(y)
    estimates = []
    for j in range(4):
        pi_hat, gamma_hat = _fit_betabinom_column(y[:, j], n[:, j])
        estimates.append((pi_hat, gamma_hat))
        for s in range(len(data)):
            bb = BetaBinomialParams(int(n[s, j]), pi_hat, gamma_hat)
            probs[s, j] = betabinomial_pmf(bb, int(y[s, j]))
    counts, edges = np.histogram(probs.ravel(), bins=bins, range=(0.0, 1.0))
    max_p = float(probs.max())
    return DiscretenessReport(
        probabilities=probs, estimates=estimates, hist_counts=counts,
        hist_edges=edges, max_probability=max_p,
        hk_reliable=max_p <= HK_PROB_THRESHOLD)
