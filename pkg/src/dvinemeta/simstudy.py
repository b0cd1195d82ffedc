"""Simulation-study engine: generate, refit under (mis)specified models, summarise.

Datasets are generated by drawing latent uniforms from the true vine,
back-transforming them to per-study sensitivities/specificities, splitting
each study's subjects into diseased/non-diseased by a binomial prevalence
draw, and sampling the four counts binomially.  Every study uses its own
counter-based generator keyed by (seed, replicate, study), so replicates are
reproducible independently of execution order.

Reports collect Bias, SD, RMSE and the square root of the mean theoretical
variance per parameter, in the classic block layout.  The SD uses the
sample (r - 1) denominator, so RMSE^2 = Bias^2 + SD^2 (r - 1) / r exactly.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import estimate
from .copulas import CopulaFamily
from .dvine import VineParams, VineSpec, vine_transform
from .errors import DataValidationError, ParameterError
from .likelihood import ModelParams, ModelSpec, StudyRecord, gauss_legendre
from .margins import (LinkFunction, MarginFamily, MarginParams, MarginSpec,
                      link_invert, margin_quantile)

MAX_REDRAWS = 10000


@dataclass(frozen=True)
class SimConfig:
    """A true model plus the sampling frame of the study."""

    n_studies: int
    study_size: int
    prevalence: float
    spec: ModelSpec
    params: ModelParams
    replicates: int
    seed: int
    n_q: int

    def __post_init__(self):
        if self.n_studies < 2:
            raise ParameterError("n_studies must be >= 2")
        if self.replicates < 1:
            raise ParameterError("replicates must be >= 1")
        if self.study_size < 2:
            raise ParameterError("study_size must be >= 2")
        if not 0.0 < self.prevalence < 1.0:
            raise ParameterError("prevalence must lie strictly inside (0, 1)")


def _study_rng(seed, replicate_index, study_index):
    ss = np.random.SeedSequence((int(seed), int(replicate_index),
                                 int(study_index)))
    return np.random.Generator(np.random.Philox(seed=ss))


def _generate_with_stats(cfg, replicate_index):
    records = []
    redraws = 0
    n = cfg.study_size
    for s in range(cfg.n_studies):
        rng = _study_rng(cfg.seed, replicate_index, s)
        u = np.clip(rng.random(4), 1e-12, 1.0 - 1e-12)
        v = vine_transform(cfg.params.vine, cfg.spec.vine, u)
        x = np.empty(4)
        for j in range(4):
            lat = margin_quantile(cfg.spec.margins[j], cfg.params.margins[j],
                                  v[j])
            x[j] = float(link_invert(cfg.spec.margins[j].link, lat))
        n1 = int(rng.binomial(n, cfg.prevalence))
        while n1 in (0, n):
            redraws += 1
            if redraws > MAX_REDRAWS:
                raise DataValidationError(
                    "prevalence draws keep degenerating; check prevalence")
            n1 = int(rng.binomial(n, cfg.prevalence))
        n2 = n - n1
        y = (int(rng.binomial(n1, x[0])), int(rng.binomial(n2, x[1])),
             int(rng.binomial(n1, x[2])), int(rng.binomial(n2, x[3])))
        records.append(StudyRecord(y, (n1, n2, n1, n2)))
    return records, redraws


def generate_dataset(cfg, replicate_index):
    """One replicate's studies; deterministic per (seed, replicate, study)."""
    return _generate_with_stats(cfg, replicate_index)[0]


# ---------------------------------------------------------------------------
# fitted-model menu

@dataclass(frozen=True)
class MenuEntry:
    name: str
    method: str  # "ml" or "hk"
    spec: ModelSpec


def menu_entry(token, truth_spec):
    """Build a menu entry from a token like ``true``, ``glmm``, ``hk`` or
    ``<copula>-<margin>`` (copula on edges 12/34, BVN elsewhere)."""
    token = token.strip().lower()
    if token == "true":
        return MenuEntry("true", "ml", truth_spec)
    if token == "glmm":
        return MenuEntry("glmm", "ml", ModelSpec.glmm())
    if token == "hk":
        beta = MarginSpec(MarginFamily.BETA, LinkFunction.IDENTITY)
        return MenuEntry("hk", "hk", ModelSpec((beta,) * 4, truth_spec.vine))
    if "-" in token:
        cop, margin = token.split("-", 1)
        fam = CopulaFamily.parse(cop)
        mspec = MarginSpec.parse(margin)
        return MenuEntry(token, "ml",
                         ModelSpec.per_test(mspec, mspec, fam, fam))
    raise ParameterError(f"unknown model token {token!r}")


def _truth_vector(fitted_spec, cfg):
    """True values aligned with the fitted parameter vector; NaN when the
    fitted parameter has no comparable truth (margin-family mismatch)."""
    truth = np.full(14, np.nan)
    x_true = estimate.pack_params(cfg.params)
    truth[0:4] = x_true[0:4]
    for j in range(4):
        if fitted_spec.margins[j].family is cfg.spec.margins[j].family:
            truth[4 + j] = x_true[4 + j]
    truth[8:14] = x_true[8:14]
    return truth


@dataclass
class SimModelSummary:
    name: str
    param_names: list
    truth: np.ndarray
    bias: np.ndarray
    sd: np.ndarray
    rmse: np.ndarray
    sqrt_vbar: np.ndarray
    convergence_rate: float
    replicates_used: int


@dataclass
class SimReport:
    """Per-model Bias/SD/RMSE/sqrt-Vbar blocks over the replicate sample."""

    config_label: str
    replicates: int
    models: list
    redraw_count: int = 0

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if self.models:
            header = ["block", "model"] + list(self.models[0].param_names)
            writer.writerow(header)
            for block in ("truth", "bias", "sd", "sqrt_vbar", "rmse"):
                for m in self.models:
                    vals = getattr(m, block if block != "truth" else "truth")
                    writer.writerow(
                        [block, m.name]
                        + [f"{v:.6f}" if np.isfinite(v) else "" for v in vals])
            writer.writerow([])
            writer.writerow(["convergence", "model", "rate", "used",
                             "replicates"])
            for m in self.models:
                writer.writerow(["convergence", m.name,
                                 f"{m.convergence_rate:.4f}",
                                 m.replicates_used, self.replicates])
        return buf.getvalue()

    def to_json(self):
        def arr(a):
            return [None if not np.isfinite(v) else float(v) for v in a]

        return json.dumps({
            "config": self.config_label,
            "replicates": self.replicates,
            "redraws": self.redraw_count,
            "models": [{
                "name": m.name,
                "param_names": list(m.param_names),
                "truth": arr(m.truth),
                "bias": arr(m.bias),
                "sd": arr(m.sd),
                "sqrt_vbar": arr(m.sqrt_vbar),
                "rmse": arr(m.rmse),
                "convergence_rate": m.convergence_rate,
                "replicates_used": m.replicates_used,
            } for m in self.models],
        }, indent=2)


def run_study(cfg, menu, progress=None):
    """Generate ``cfg.replicates`` datasets and refit every menu entry.

    Non-converged fits are excluded from the summaries; the exclusion rate
    is reported per model.
    """
    menu = list(menu)
    if not menu:
        raise ParameterError("fitted-model menu must be non-empty")
    rule = gauss_legendre(cfg.n_q)
    est_store = {e.name: [] for e in menu}
    se_store = {e.name: [] for e in menu}
    redraws_total = 0
    for rep in range(cfg.replicates):
        data, redraws = _generate_with_stats(cfg, rep)
        redraws_total += redraws
        for entry in menu:
            try:
                if entry.method == "hk":
                    fr = estimate.fit_hk(entry.spec, data)
                else:
                    fr = estimate.fit(entry.spec, data, rule)
            except Exception:
                continue
            if not (fr.converged and np.isfinite(fr.loglik_max)):
                continue
            est_store[entry.name].append(fr.estimates)
            se_store[entry.name].append(
                fr.se if fr.se is not None else np.full(14, np.nan))
        if progress is not None:
            progress(rep + 1, cfg.replicates)
    models = []
    for entry in menu:
        ests = np.asarray(est_store[entry.name])
        ses = np.asarray(se_store[entry.name])
        truth = _truth_vector(entry.spec, cfg)
        r = len(ests)
        if r == 0:
            nanv = np.full(14, np.nan)
            models.append(SimModelSummary(
                entry.name, estimate.param_names(entry.spec), truth,
                nanv, nanv, nanv, nanv, 0.0, 0))
            continue
        bias = ests.mean(axis=0) - truth
        sd = ests.std(axis=0, ddof=1) if r > 1 else np.full(14, np.nan)
        rmse = np.sqrt(np.mean((ests - truth[None, :]) ** 2, axis=0))
        with np.errstate(invalid="ignore"):
            vbar = np.nanmean(ses ** 2, axis=0)
        sqrt_vbar = np.sqrt(vbar)
        models.append(SimModelSummary(
            entry.name, estimate.param_names(entry.spec), truth,
            bias, sd, rmse, sqrt_vbar, r / cfg.replicates, r))
    return SimReport(config_label=f"N={cfg.n_studies},n={cfg.study_size},"
                                  f"prev={cfg.prevalence},nq={cfg.n_q}",
                     replicates=cfg.replicates, models=models,
                     redraw_count=redraws_total)


# ---------------------------------------------------------------------------
# presets

TRUTH_PI = (0.7, 0.8, 0.7, 0.95)
TRUTH_SIGMA = (0.7, 1.0, 0.7, 0.8)
TRUTH_GAMMA = (0.1, 0.15, 0.1, 0.02)
TRUTH_TAU = (-0.3, 0.1, -0.4, 0.5, 0.4, 0.2)
DEFAULT_SEED = 12345


def _truth_model(margin_family):
    vine = VineSpec.all_bvn()
    if margin_family == "beta":
        mspec = MarginSpec(MarginFamily.BETA, LinkFunction.IDENTITY)
        deltas = TRUTH_GAMMA
    else:
        mspec = MarginSpec(MarginFamily.NORMAL, LinkFunction.LOGIT)
        deltas = TRUTH_SIGMA
    spec = ModelSpec((mspec,) * 4, vine)
    params = ModelParams(
        tuple(MarginParams(p, d) for p, d in zip(TRUTH_PI, deltas)),
        VineParams.from_tau(vine, TRUTH_TAU))
    return spec, params


def mimic_presets(margin_family="normal", replicates=100, seed=DEFAULT_SEED):
    """Named configurations mimicking the two example meta-analyses.

    ``arthritis``: few small studies with large per-study probabilities
    (strong discreteness); ``diabetes``: more and larger studies with small
    per-study probabilities, where the quadrature needs more nodes.
    """
    spec, params = _truth_model(margin_family)
    return {
        "arthritis": SimConfig(n_studies=22, study_size=100, prevalence=0.4,
                               spec=spec, params=params,
                               replicates=replicates, seed=seed, n_q=15),
        "diabetes": SimConfig(n_studies=38, study_size=1000, prevalence=0.1,
                              spec=spec, params=params,
                              replicates=replicates, seed=seed, n_q=30),
    }
