"""Bivariate copula families: conditional CDFs, inverses, densities, Kendall's tau.

Six families are supported: the bivariate normal (BVN), Frank, Clayton and
the three Clayton rotations (90/180/270 degrees).  The conditioning convention
is fixed throughout the package:

    ``hfunc(family, theta, v, u)`` returns the conditional CDF of ``v`` given
    the conditioner ``u``, i.e. dC(u, v)/du where C(u, v) is the copula CDF
    with ``u`` as its first coordinate.

For exchangeable families the direction is immaterial; for the 90/270
rotations (which are transposes of each other) use :func:`transpose_family`
to condition on the second coordinate instead.

All evaluations clamp inputs into [1e-12, 1 - 1e-12] (with a warning if a
value actually lies outside) and are written in log space where the naive
formulas overflow or cancel.
"""

import enum
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special

from .errors import ParameterError

EPS_U = 1e-12
FRANK_INDEP_EPS = 1e-8
CLAYTON_INDEP_EPS = 1e-10
FRANK_THETA_MAX = 300.0
TAU_INSET = 1e-6


class CopulaFamily(enum.Enum):
    BVN = "bvn"
    FRANK = "frank"
    CLAYTON0 = "cln0"
    CLAYTON90 = "cln90"
    CLAYTON180 = "cln180"
    CLAYTON270 = "cln270"

    @classmethod
    def parse(cls, name):
        key = str(name).strip().lower().replace("°", "").replace("clayton", "cln")
        aliases = {"gaussian": "bvn", "normal": "bvn", "cln": "cln0"}
        key = aliases.get(key, key)
        for fam in cls:
            if fam.value == key:
                return fam
        raise ParameterError(f"unknown copula family {name!r}")


_CLAYTONS = (CopulaFamily.CLAYTON0, CopulaFamily.CLAYTON90,
             CopulaFamily.CLAYTON180, CopulaFamily.CLAYTON270)


def transpose_family(family):
    """Family of the argument-swapped copula: C^T(a, b) = C(b, a)."""
    if family is CopulaFamily.CLAYTON90:
        return CopulaFamily.CLAYTON270
    if family is CopulaFamily.CLAYTON270:
        return CopulaFamily.CLAYTON90
    return family


@lru_cache(maxsize=None)
def _frank_tau_max():
    return tau_of_theta(CopulaFamily.FRANK, FRANK_THETA_MAX)


def tau_range(family):
    """Open admissible interval for Kendall's tau of the family."""
    if family is CopulaFamily.BVN:
        return (-1.0, 1.0)
    if family is CopulaFamily.FRANK:
        m = _frank_tau_max()
        return (-m, m)
    if family in (CopulaFamily.CLAYTON0, CopulaFamily.CLAYTON180):
        return (0.0, 1.0)
    return (-1.0, 0.0)


def fitting_tau_bounds(family, inset=TAU_INSET):
    """tau interval used by optimisers: the family range shrunk by ``inset``."""
    lo, hi = tau_range(family)
    span = hi - lo
    return (lo + inset * span, hi - inset * span)


def _clamp(x, what="copula argument"):
    x = np.asarray(x, dtype=float)
    if np.any((x < EPS_U) | (x > 1.0 - EPS_U)):
        warnings.warn(f"{what} outside [{EPS_U}, 1-{EPS_U}]; clamped",
                      RuntimeWarning, stacklevel=3)
        x = np.clip(x, EPS_U, 1.0 - EPS_U)
    return x


def _check_theta(family, theta):
    theta = float(theta)
    if family is CopulaFamily.BVN:
        if abs(theta) >= 1.0:
            raise ParameterError("BVN theta must satisfy |theta| < 1")
    elif family is CopulaFamily.FRANK:
        if abs(theta) > FRANK_THETA_MAX:
            raise ParameterError(
                f"Frank theta must satisfy |theta| <= {FRANK_THETA_MAX}")
    else:
        if theta < 0.0:
            raise ParameterError("Clayton-family theta must be >= 0")
    return theta


# ---------------------------------------------------------------------------
# base-family formulas (stable forms; see module docstring)

def _bvn_hfunc(theta, v, u):
    zv = special.ndtri(v)
    zu = special.ndtri(u)
    return special.ndtr((zv - theta * zu) / math.sqrt(1.0 - theta * theta))


def _bvn_hinv(theta, p, u):
    zp = special.ndtri(p)
    zu = special.ndtri(u)
    return special.ndtr(math.sqrt(1.0 - theta * theta) * zp + theta * zu)


def _bvn_logdens(theta, u, v):
    x = special.ndtri(u)
    y = special.ndtri(v)
    omt2 = 1.0 - theta * theta
    return (-0.5 * math.log(omt2)
            - (theta * theta * (x * x + y * y) - 2.0 * theta * x * y)
            / (2.0 * omt2))


def _frank_parts(theta, v, u):
    # D = e^{-tu}(1-e^{-tv}) + e^{-tv}(1-e^{-t(1-v)}): cancellation-free split
    n1 = np.exp(-theta * u) * (-np.expm1(-theta * v))
    n2 = np.exp(-theta * v) * (-np.expm1(-theta * (1.0 - v)))
    return n1, n2


def _frank_hfunc(theta, v, u):
    n1, n2 = _frank_parts(theta, v, u)
    return n1 / (n1 + n2)


def _frank_hinv(theta, p, u):
    denom = (1.0 / p - 1.0) * np.exp(-theta * u) + 1.0
    return -np.log1p(math.expm1(-theta) / denom) / theta


def _frank_logdens(theta, u, v):
    n1, n2 = _frank_parts(theta, v, u)
    return (math.log(abs(theta)) + math.log(abs(math.expm1(-theta)))
            - theta * (u + v) - 2.0 * np.log(np.abs(n1) + np.abs(n2)))


def _clayton_hfunc(theta, v, u):
    # [1 + u^t (v^{-t} - 1)]^{-1-1/t} with B split as e^{b-a} + (1 - e^{-a})
    a = -theta * np.log(u)
    b = -theta * np.log(v)
    with np.errstate(divide="ignore"):
        log_one_m = np.log(-np.expm1(-a))
    log_b = np.logaddexp(b - a, log_one_m)
    return np.exp(-(1.0 + 1.0 / theta) * log_b)


def _clayton_hinv(theta, p, u):
    # [(p^{-t/(1+t)} - 1) u^{-t} + 1]^{-1/t}
    ex = -theta / (1.0 + theta) * np.log(p)
    t = np.log(np.expm1(ex)) - theta * np.log(u)
    return np.exp(-np.logaddexp(0.0, t) / theta)


def _clayton_logdens(theta, u, v):
    a = -theta * np.log(u)
    b = -theta * np.log(v)
    la = np.logaddexp(a, b)
    small = la <= 30.0
    log_d = np.where(
        small,
        np.log1p(np.expm1(np.where(small, a, 0.0))
                 + np.expm1(np.where(small, b, 0.0))),
        la + np.log1p(-np.exp(-la)),
    )
    return (math.log1p(theta) - (1.0 + theta) * (np.log(u) + np.log(v))
            - (2.0 + 1.0 / theta) * log_d)


def _is_indep(family, theta):
    if family is CopulaFamily.BVN:
        return theta == 0.0
    if family is CopulaFamily.FRANK:
        return abs(theta) < FRANK_INDEP_EPS
    return theta < CLAYTON_INDEP_EPS


# ---------------------------------------------------------------------------
# public operations

def hfunc(family, theta, v, u):
    """Conditional copula CDF C(v | u; theta), conditioning on ``u``."""
    theta = _check_theta(family, theta)
    v = _clamp(v)
    u = _clamp(u)
    if _is_indep(family, theta):
        return v + 0.0 * u
    if family is CopulaFamily.BVN:
        return _bvn_hfunc(theta, v, u)
    if family is CopulaFamily.FRANK:
        return _frank_hfunc(theta, v, u)
    if family is CopulaFamily.CLAYTON0:
        return _clayton_hfunc(theta, v, u)
    if family is CopulaFamily.CLAYTON90:
        return _clayton_hfunc(theta, v, 1.0 - u)
    if family is CopulaFamily.CLAYTON180:
        return 1.0 - _clayton_hfunc(theta, 1.0 - v, 1.0 - u)
    if family is CopulaFamily.CLAYTON270:
        return 1.0 - _clayton_hfunc(theta, 1.0 - v, u)
    raise ParameterError(f"unhandled family {family}")


def hinv(family, theta, p, u):
    """Inverse of :func:`hfunc` in its ``v`` argument: hfunc(hinv(p|u)|u) = p."""
    theta = _check_theta(family, theta)
    p = _clamp(p, "conditional probability")
    u = _clamp(u)
    if _is_indep(family, theta):
        return p + 0.0 * u
    if family is CopulaFamily.BVN:
        out = _bvn_hinv(theta, p, u)
    elif family is CopulaFamily.FRANK:
        out = _frank_hinv(theta, p, u)
    elif family is CopulaFamily.CLAYTON0:
        out = _clayton_hinv(theta, p, u)
    elif family is CopulaFamily.CLAYTON90:
        out = _clayton_hinv(theta, p, 1.0 - u)
    elif family is CopulaFamily.CLAYTON180:
        out = 1.0 - _clayton_hinv(theta, 1.0 - p, 1.0 - u)
    elif family is CopulaFamily.CLAYTON270:
        out = 1.0 - _clayton_hinv(theta, 1.0 - p, u)
    else:
        raise ParameterError(f"unhandled family {family}")
    return np.clip(out, EPS_U, 1.0 - EPS_U)


def copula_density(family, theta, u, v):
    """Copula density c(u, v; theta)."""
    theta = _check_theta(family, theta)
    u = _clamp(u)
    v = _clamp(v)
    if _is_indep(family, theta):
        return np.ones_like(u * v)
    if family is CopulaFamily.BVN:
        return np.exp(_bvn_logdens(theta, u, v))
    if family is CopulaFamily.FRANK:
        return np.exp(_frank_logdens(theta, u, v))
    if family is CopulaFamily.CLAYTON0:
        return np.exp(_clayton_logdens(theta, u, v))
    if family is CopulaFamily.CLAYTON90:
        return np.exp(_clayton_logdens(theta, 1.0 - u, v))
    if family is CopulaFamily.CLAYTON180:
        return np.exp(_clayton_logdens(theta, 1.0 - u, 1.0 - v))
    if family is CopulaFamily.CLAYTON270:
        return np.exp(_clayton_logdens(theta, u, 1.0 - v))
    raise ParameterError(f"unhandled family {family}")


def _frank_debye_integral(theta):
    # int_0^theta t/(e^t - 1) dt, smooth through t = 0
    def integrand(t):
        if t == 0.0:
            return 1.0
        return t / math.expm1(t)

    val, _ = integrate.quad(integrand, 0.0, theta, epsabs=1e-13, epsrel=1e-13)
    return val


def tau_of_theta(family, theta):
    """Kendall's tau as a function of the natural copula parameter."""
    theta = _check_theta(family, theta)
    if family is CopulaFamily.BVN:
        return 2.0 / math.pi * math.asin(theta)
    if family is CopulaFamily.FRANK:
        if abs(theta) < FRANK_INDEP_EPS:
            return theta / 9.0
        return 1.0 - 4.0 / theta + 4.0 / theta ** 2 * _frank_debye_integral(theta)
    tau = theta / (theta + 2.0)
    if family in (CopulaFamily.CLAYTON90, CopulaFamily.CLAYTON270):
        return -tau
    return tau


def theta_of_tau(family, tau):
    """Invert :func:`tau_of_theta`; raises if tau is outside the family range."""
    tau = float(tau)
    lo, hi = tau_range(family)
    if tau == 0.0 and family is not CopulaFamily.BVN:
        # independence boundary: admitted with theta = 0 semantics
        return 0.0
    if not lo < tau < hi:
        raise ParameterError(
            f"tau={tau} outside admissible interval ({lo:.6g}, {hi:.6g}) "
            f"for {family.value}")
    if family is CopulaFamily.BVN:
        return math.sin(math.pi * tau / 2.0)
    if family is CopulaFamily.FRANK:
        if abs(tau) < 1e-7:
            return 9.0 * tau
        sign = 1.0 if tau > 0 else -1.0
        return optimize.brentq(
            lambda th: tau_of_theta(family, th) - tau,
            sign * 1e-9, sign * FRANK_THETA_MAX, xtol=1e-13, rtol=1e-14)
    at = abs(tau)
    theta = 2.0 * at / (1.0 - at)
    return theta


@dataclass(frozen=True)
class CopulaParam:
    """A copula family with consistent (theta, tau) parameter pair."""

    family: CopulaFamily
    theta: float
    tau: float

    def __post_init__(self):
        if abs(tau_of_theta(self.family, self.theta) - self.tau) > 1e-10:
            raise ParameterError(
                f"inconsistent (theta, tau) = ({self.theta}, {self.tau}) "
                f"for {self.family.value}")

    @classmethod
    def from_tau(cls, family, tau):
        return cls(family, theta_of_tau(family, tau), float(tau))

    @classmethod
    def from_theta(cls, family, theta):
        return cls(family, float(theta), tau_of_theta(family, theta))
