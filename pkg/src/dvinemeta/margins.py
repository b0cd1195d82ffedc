"""Link functions, random-effect margins, binomial and beta-binomial kernels.

Two margin families are supported for the latent (transformed) sensitivities
and specificities: a normal margin on the link scale (logit, probit or
cloglog) and a beta margin on the original probability scale (identity link).
The beta margin uses the mean-dispersion parametrisation

    alpha = pi (1 - gamma) / gamma,   beta = (1 - pi)(1 - gamma) / gamma,

so that the mean is ``pi`` and the variance is ``gamma * pi * (1 - pi)``.

All pmf arithmetic is done in log space via log-gamma.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ParameterError

P_CLAMP = 1e-12


class LinkFunction(enum.Enum):
    LOGIT = "logit"
    PROBIT = "probit"
    CLOGLOG = "cloglog"
    IDENTITY = "identity"

    @classmethod
    def parse(cls, name):
        key = str(name).strip().lower()
        for link in cls:
            if link.value == key:
                return link
        raise ParameterError(f"unknown link function {name!r}")


class MarginFamily(enum.Enum):
    NORMAL = "normal"
    BETA = "beta"

    @classmethod
    def parse(cls, name):
        key = str(name).strip().lower()
        for fam in cls:
            if fam.value == key:
                return fam
        raise ParameterError(f"unknown margin family {name!r}")


@dataclass(frozen=True)
class MarginSpec:
    """Random-effect margin family paired with its link."""

    family: MarginFamily
    link: LinkFunction

    def __post_init__(self):
        if self.family is MarginFamily.BETA:
            if self.link is not LinkFunction.IDENTITY:
                raise ParameterError("beta margin requires the identity link")
        else:
            if self.link is LinkFunction.IDENTITY:
                raise ParameterError(
                    "identity link is only valid with the beta margin")

    @classmethod
    def parse(cls, name):
        """Parse strings like ``normal-logit``, ``normal-probit`` or ``beta``."""
        key = str(name).strip().lower()
        if key == "beta":
            return cls(MarginFamily.BETA, LinkFunction.IDENTITY)
        if key == "normal":
            return cls(MarginFamily.NORMAL, LinkFunction.LOGIT)
        if "-" in key:
            fam, link = key.split("-", 1)
            return cls(MarginFamily.parse(fam), LinkFunction.parse(link))
        raise ParameterError(f"unknown margin spec {name!r}")

    @property
    def label(self):
        if self.family is MarginFamily.BETA:
            return "beta"
        return f"normal-{self.link.value}"


@dataclass(frozen=True)
class MarginParams:
    """Location ``pi`` (a probability) and dispersion ``delta``.

    ``delta`` is the normal scale sigma > 0 for the normal margin and the
    dispersion gamma in (0, 1) for the beta margin.
    """

    pi: float
    delta: float


def validate_margin_params(spec, params):
    if not 0.0 < params.pi < 1.0:
        raise ParameterError(f"pi={params.pi} must lie in (0, 1)")
    if spec.family is MarginFamily.NORMAL:
        if params.delta <= 0.0:
            raise ParameterError(f"sigma={params.delta} must be > 0")
    else:
        if not 0.0 < params.delta < 1.0:
            raise ParameterError(f"gamma={params.delta} must lie in (0, 1)")


def link_apply(link, p):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ParameterError("link argument must lie in the open interval (0, 1)")
    if link is LinkFunction.LOGIT:
        return special.logit(p)
    if link is LinkFunction.PROBIT:
        return special.ndtri(p)
    if link is LinkFunction.CLOGLOG:
        return np.log(-np.log1p(-p))
    return p + 0.0


def link_invert(link, x):
    x = np.asarray(x, dtype=float)
    if link is LinkFunction.LOGIT:
        return special.expit(x)
    if link is LinkFunction.PROBIT:
        return special.ndtr(x)
    if link is LinkFunction.CLOGLOG:
        return -np.expm1(-np.exp(x))
    return x + 0.0


def link_invert_clamped(link, x):
    """Inverse link clipped into [1e-12, 1 - 1e-12] for binomial kernels."""
    return np.clip(link_invert(link, x), P_CLAMP, 1.0 - P_CLAMP)


def beta_shape(pi, gamma):
    """(alpha, beta) of the Beta(pi, gamma) mean-dispersion parametrisation."""
    alpha = pi * (1.0 - gamma) / gamma
    beta = (1.0 - pi) * (1.0 - gamma) / gamma
    if alpha <= 0.0 or beta <= 0.0:
        raise ParameterError(
            f"(pi, gamma)=({pi}, {gamma}) implies non-positive beta shapes")
    return alpha, beta


def margin_cdf(spec, params, x):
    """CDF of the random-effect margin F(x; l(pi), delta)."""
    validate_margin_params(spec, params)
    x = np.asarray(x, dtype=float)
    if spec.family is MarginFamily.NORMAL:
        mu = link_apply(spec.link, params.pi)
        return special.ndtr((x - mu) / params.delta)
    if np.any((x <= 0.0) | (x >= 1.0)):
        raise ParameterError("beta margin CDF argument must lie in (0, 1)")
    alpha, beta = beta_shape(params.pi, params.delta)
    return special.betainc(alpha, beta, x)


def margin_pdf(spec, params, x):
    """Density of the random-effect margin on its latent scale."""
    validate_margin_params(spec, params)
    x = np.asarray(x, dtype=float)
    if spec.family is MarginFamily.NORMAL:
        mu = link_apply(spec.link, params.pi)
        z = (x - mu) / params.delta
        return np.exp(-0.5 * z * z) / (params.delta * np.sqrt(2.0 * np.pi))
    if np.any((x <= 0.0) | (x >= 1.0)):
        raise ParameterError("beta margin density argument must lie in (0, 1)")
    alpha, beta = beta_shape(params.pi, params.delta)
    lbeta = (special.gammaln(alpha) + special.gammaln(beta)
             - special.gammaln(alpha + beta))
    return np.exp((alpha - 1.0) * np.log(x) + (beta - 1.0) * np.log1p(-x) - lbeta)


def margin_quantile(spec, params, u):
    """Quantile of the random-effect margin, F^{-1}(u; l(pi), delta)."""
    validate_margin_params(spec, params)
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ParameterError("quantile level must lie strictly inside (0, 1)")
    if spec.family is MarginFamily.NORMAL:
        mu = link_apply(spec.link, params.pi)
        return mu + params.delta * special.ndtri(u)
    alpha, beta = beta_shape(params.pi, params.delta)
    return special.betaincinv(alpha, beta, u)


def binomial_logpmf(y, n, p):
    """log g(y; n, p) with the binomial coefficient via log-gamma."""
    y = np.asarray(y)
    n = np.asarray(n)
    p = np.asarray(p, dtype=float)
    if np.any((y < 0) | (y > n)):
        raise ParameterError("binomial count must satisfy 0 <= y <= n")
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ParameterError("binomial probability must lie in (0, 1)")
    yf = y.astype(float)
    nf = n.astype(float)
    logc = (special.gammaln(nf + 1.0) - special.gammaln(yf + 1.0)
            - special.gammaln(nf - yf + 1.0))
    return logc + yf * np.log(p) + (nf - yf) * np.log1p(-p)


def binomial_pmf(y, n, p):
    return np.exp(binomial_logpmf(y, n, p))


@dataclass(frozen=True)
class BetaBinomialParams:
    """Beta-binomial trial count, mean probability and dispersion."""

    n: int
    pi: float
    gamma: float

    def __post_init__(self):
        beta_shape(self.pi, self.gamma)

    @property
    def shapes(self):
        return beta_shape(self.pi, self.gamma)


def _betabinom_logpmf_arrays(y, n, alpha, beta):
    y = np.asarray(y, dtype=float)
    n = np.asarray(n, dtype=float)
    logc = (special.gammaln(n + 1.0) - special.gammaln(y + 1.0)
            - special.gammaln(n - y + 1.0))
    lbeta_num = (special.gammaln(y + alpha) + special.gammaln(n - y + beta)
                 - special.gammaln(n + alpha + beta))
    lbeta_den = (special.gammaln(alpha) + special.gammaln(beta)
                 - special.gammaln(alpha + beta))
    return logc + lbeta_num - lbeta_den


def betabinomial_logpmf(params, y):
    y_arr = np.asarray(y)
    if np.any((y_arr < 0) | (y_arr > params.n)):
        raise ParameterError("beta-binomial count must satisfy 0 <= y <= n")
    alpha, beta = params.shapes
    return _betabinom_logpmf_arrays(y_arr, params.n, alpha, beta)


def betabinomial_pmf(params, y):
    return np.exp(betabinomial_logpmf(params, y))


def betabinomial_cdf(params, y):
    """H(y; n, pi, gamma) with H(n) = 1 exactly."""
    y = int(y)
    if not 0 <= y <= params.n:
        raise ParameterError("beta-binomial count must satisfy 0 <= y <= n")
    if y == params.n:
        return 1.0
    support = np.arange(0, y + 1)
    return float(min(np.sum(betabinomial_pmf(params, support)), 1.0))
