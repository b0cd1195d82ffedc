"""The 4-dimensional D-vine on variables (sens1, spec1, sens2, spec2).

Tree structure is fixed to the path 1-2-3-4, with edges ordered

    (12, 23, 34, 13|2, 24|3, 14|23)

throughout the package.  The transform maps independent uniforms to
dependent uniforms with the vine distribution (the inverse-Rosenblatt
recursion); the density is the product of the six pair densities evaluated
at h-function arguments.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special

from .copulas import (CopulaFamily, copula_density, hfunc, hinv, tau_range,
                      theta_of_tau, transpose_family)
from .errors import ParameterError, UnsupportedModelError

EDGE_LABELS = ("12", "23", "34", "13|2", "24|3", "14|23")


@dataclass(frozen=True)
class VineSpec:
    """Pair-copula family tags in edge order (12, 23, 34, 13|2, 24|3, 14|23)."""

    pair_families: tuple

    def __post_init__(self):
        fams = tuple(self.pair_families)
        if len(fams) != 6 or not all(isinstance(f, CopulaFamily) for f in fams):
            raise ParameterError("VineSpec needs exactly six CopulaFamily tags")
        object.__setattr__(self, "pair_families", fams)

    @classmethod
    def all_bvn(cls):
        return cls((CopulaFamily.BVN,) * 6)

    @classmethod
    def with_test_edges(cls, copula12, copula34, inner=CopulaFamily.BVN):
        """Families for edges 12 and 34; edge 23 and trees 2-3 use ``inner``."""
        return cls((copula12, inner, copula34, inner, inner, inner))

    @property
    def label(self):
        return "/".join(f.value for f in self.pair_families)


@dataclass(frozen=True)
class VineParams:
    """Kendall-tau vector with the derived natural parameters, edge order as above."""

    tau: tuple
    theta: tuple

    @classmethod
    def from_tau(cls, spec, tau):
        tau = tuple(float(t) for t in tau)
        if len(tau) != 6:
            raise ParameterError("VineParams needs exactly six tau values")
        theta = tuple(theta_of_tau(fam, t)
                      for fam, t in zip(spec.pair_families, tau))
        return cls(tau, theta)

    def as_arrays(self):
        return np.asarray(self.tau), np.asarray(self.theta)


def _as_u_matrix(u):
    arr = np.asarray(u, dtype=float)
    squeeze = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != 4:
        raise ParameterError("expected 4 uniform coordinates per row")
    return arr, squeeze


def _interior(x):
    return np.clip(x, 1e-12, 1.0 - 1e-12)


def vine_transform(params, spec, u):
    """Map i.i.d. uniforms to D-vine dependent uniforms (inverse Rosenblatt).

    Implements the ten-step recursion: conditional quantile steps walk the
    new coordinate down the vine trees (inner/conditional edges first), each
    tree-1 step finishing with the adjacent-pair inverse h-function.
    """
    fams = spec.pair_families
    th = params.theta
    u, squeeze = _as_u_matrix(u)
    clip = _interior  # h outputs may round onto {0, 1}; keep them interior
    v1 = u[:, 0]
    v2 = hinv(fams[0], th[0], u[:, 1], v1)
    t1 = clip(hfunc(transpose_family(fams[0]), th[0], v1, v2))
    t2 = hinv(fams[3], th[3], u[:, 2], t1)
    v3 = hinv(fams[1], th[1], t2, v2)
    t3 = clip(hfunc(transpose_family(fams[1]), th[1], v2, v3))
    t4 = clip(hfunc(transpose_family(fams[3]), th[3], t1, t2))
    t5 = hinv(fams[5], th[5], u[:, 3], t4)
    t6 = hinv(fams[4], th[4], t5, t3)
    v4 = hinv(fams[2], th[2], t6, v3)
    out = np.column_stack([v1, v2, v3, v4])
    return out[0] if squeeze else out


def vine_density(params, spec, u):
    """D-vine copula density c_{1234}(u1, u2, u3, u4)."""
    fams = spec.pair_families
    th = params.theta
    u, squeeze = _as_u_matrix(u)
    u1, u2, u3, u4 = u.T
    clip = _interior
    c12 = copula_density(fams[0], th[0], u1, u2)
    c23 = copula_density(fams[1], th[1], u2, u3)
    c34 = copula_density(fams[2], th[2], u3, u4)
    f1_2 = clip(hfunc(transpose_family(fams[0]), th[0], u1, u2))
    f3_2 = clip(hfunc(fams[1], th[1], u3, u2))
    f2_3 = clip(hfunc(transpose_family(fams[1]), th[1], u2, u3))
    f4_3 = clip(hfunc(fams[2], th[2], u4, u3))
    c13_2 = copula_density(fams[3], th[3], f1_2, f3_2)
    c24_3 = copula_density(fams[4], th[4], f2_3, f4_3)
    f1_23 = clip(hfunc(transpose_family(fams[3]), th[3], f1_2, f3_2))
    f4_23 = clip(hfunc(fams[4], th[4], f4_3, f2_3))
    c14_23 = copula_density(fams[5], th[5], f1_23, f4_23)
    out = c12 * c23 * c34 * c13_2 * c24_3 * c14_23
    return float(out[0]) if squeeze else out


@dataclass(frozen=True)
class CorrelationMatrix4:
    """Pairwise correlations (rho12, rho13, rho14, rho23, rho24, rho34)."""

    rho: tuple

    @property
    def matrix(self):
        r12, r13, r14, r23, r24, r34 = self.rho
        return np.array([
            [1.0, r12, r13, r14],
            [r12, 1.0, r23, r24],
            [r13, r23, 1.0, r34],
            [r14, r24, r34, 1.0],
        ])


def partial_to_full(params, spec):
    """Correlation matrix of the equivalent quadrivariate normal (all-BVN vine).

    Tree-1 thetas are the pairwise correlations; trees 2-3 carry partial
    correlations, which map to unconditional ones through the recursive
    product-moment identities.
    """
    if any(f is not CopulaFamily.BVN for f in spec.pair_families):
        raise UnsupportedModelError(
            "partial-to-full correlation conversion requires all-BVN pairs")
    r12, r23, r34, p13_2, p24_3, p14_23 = params.theta
    r13 = p13_2 * np.sqrt((1 - r12 ** 2) * (1 - r23 ** 2)) + r12 * r23
    r24 = p24_3 * np.sqrt((1 - r23 ** 2) * (1 - r34 ** 2)) + r23 * r34
    r34_2 = (r34 - r23 * r24) / np.sqrt(1 - r23 ** 2) / np.sqrt(1 - r24 ** 2)
    r14_2 = p14_23 * np.sqrt((1 - p13_2 ** 2) * (1 - r34_2 ** 2)) + p13_2 * r34_2
    r14 = r14_2 * np.sqrt((1 - r12 ** 2) * (1 - r24 ** 2)) + r12 * r24
    return CorrelationMatrix4((r12, r13, r14, r23, r24, r34))


def vine_simulate(params, spec, count, seed):
    """Draw ``count`` rows from the vine via a seeded counter-based generator."""
    if count < 1:
        raise ParameterError("count must be >= 1")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    u = rng.random((int(count), 4))
    u = np.clip(u, 1e-12, 1.0 - 1e-12)
    return vine_transform(params, spec, u)


def sample_tau_bounds_check(spec, tau):
    """True when every tau lies inside its family's admissible range."""
    for fam, t in zip(spec.pair_families, tau):
        lo, hi = tau_range(fam)
        if not (lo < t < hi or t == 0.0):
            return False
    return True


def normal_scores(u):
    """Phi^{-1} applied elementwise (scores for QVN comparisons)."""
    return special.ndtri(np.asarray(u))
