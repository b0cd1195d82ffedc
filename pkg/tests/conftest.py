import numpy as np
import pytest

from dvinemeta.copulas import CopulaFamily
from dvinemeta.dvine import VineParams, VineSpec
from dvinemeta.likelihood import (ModelParams, ModelSpec, StudyRecord,
                                  gauss_legendre)
from dvinemeta.margins import (LinkFunction, MarginFamily, MarginParams,
                               MarginSpec)

TRUTH_PI = (0.7, 0.8, 0.7, 0.95)
TRUTH_SIGMA = (0.7, 1.0, 0.7, 0.8)
TRUTH_TAU = (-0.3, 0.1, -0.4, 0.5, 0.4, 0.2)


def normal_logit_spec(vine=None):
    m = MarginSpec(MarginFamily.NORMAL, LinkFunction.LOGIT)
    return ModelSpec((m,) * 4, vine or VineSpec.all_bvn())


def truth_params(spec, pis=TRUTH_PI, deltas=TRUTH_SIGMA, taus=TRUTH_TAU):
    return ModelParams(
        tuple(MarginParams(p, d) for p, d in zip(pis, deltas)),
        VineParams.from_tau(spec.vine, taus))


@pytest.fixture(scope="session")
def rule15():
    return gauss_legendre(15)


@pytest.fixture(scope="session")
def toy_data():
    return [StudyRecord((7, 9, 8, 10), (10, 12, 10, 12)),
            StudyRecord((4, 11, 5, 12), (8, 14, 8, 14)),
            StudyRecord((10, 13, 9, 14), (15, 16, 15, 16)),
            StudyRecord((3, 6, 4, 7), (6, 8, 6, 8)),
            StudyRecord((12, 10, 13, 11), (18, 12, 18, 12))]


@pytest.fixture(scope="session")
def arthritis_data():
    """One deterministic arthritis-preset replicate (N=22, n=100)."""
    from dvinemeta.simstudy import generate_dataset, mimic_presets
    cfg = mimic_presets("normal")["arthritis"]
    return generate_dataset(cfg, 0)


def all_families():
    return list(CopulaFamily)


def family_tau(fam, magnitude=0.4):
    """A representative tau with the right sign for the family."""
    from dvinemeta.copulas import tau_range
    lo, hi = tau_range(fam)
    return magnitude if hi > 0 else -magnitude
