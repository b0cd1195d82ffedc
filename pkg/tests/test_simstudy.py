import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from dvinemeta.copulas import CopulaFamily
from dvinemeta.errors import ParameterError
from dvinemeta.likelihood import ModelParams, ModelSpec
from dvinemeta.margins import (LinkFunction, MarginFamily, MarginParams,
                               MarginSpec)
from dvinemeta.dvine import VineParams, VineSpec
from dvinemeta.simstudy import (MenuEntry, SimConfig, _truth_model,
                                generate_dataset, menu_entry, mimic_presets,
                                run_study)

from conftest import TRUTH_TAU


def _config(margin="normal", **kw):
    spec, params = _truth_model(margin)
    base = dict(n_studies=8, study_size=50, prevalence=0.4, spec=spec,
                params=params, replicates=2, seed=7, n_q=6)
    base.update(kw)
    return SimConfig(**base)


def test_generate_deterministic():
    cfg = _config()
    a = generate_dataset(cfg, 0)
    b = generate_dataset(cfg, 0)
    assert a == b
    c = generate_dataset(cfg, 1)
    assert a != c


def test_generate_respects_denominators():
    cfg = _config(n_studies=40)
    for s in generate_dataset(cfg, 3):
        assert s.n[0] == s.n[2] and s.n[1] == s.n[3]
        assert s.n[0] + s.n[1] == cfg.study_size
        assert all(0 <= y <= n for y, n in zip(s.y, s.n))
        assert s.n[0] not in (0, cfg.study_size)


def test_config_validation():
    with pytest.raises(ParameterError):
        _config(prevalence=1.0)
    with pytest.raises(ParameterError):
        _config(prevalence=0.0)
    with pytest.raises(ParameterError):
        _config(n_studies=1)
    with pytest.raises(ParameterError):
        _config(replicates=0)


def test_generate_law_of_large_numbers():
    spec, params = _truth_model("normal")
    params = ModelParams(
        tuple(MarginParams(0.5, 1e-6) for _ in range(4)),
        VineParams.from_tau(spec.vine, [0.0] * 6))
    cfg = SimConfig(n_studies=20, study_size=10000, prevalence=0.5, spec=spec,
                    params=params, replicates=1, seed=3, n_q=6)
    data = generate_dataset(cfg, 0)
    y = np.array([s.y for s in data], float)
    n = np.array([s.n for s in data], float)
    pooled = y.sum(axis=0) / n.sum(axis=0)
    assert np.all(np.abs(pooled - 0.5) < 0.01)


def test_generated_latent_kendall_tau():
    """Tree-1 sample taus of near-noiseless proportions match the truth."""
    cfg = _config(n_studies=2000, study_size=10000, seed=11)
    data = generate_dataset(cfg, 0)
    y = np.array([s.y for s in data], float)
    n = np.array([s.n for s in data], float)
    phat = y / n
    mc_se = np.sqrt(2.0 * (2 * 2000 + 5) / (9.0 * 2000 * 1999))
    for k, (a, b) in enumerate([(0, 1), (1, 2), (2, 3)]):
        t, _ = stats.kendalltau(phat[:, a], phat[:, b])
        assert abs(t - TRUTH_TAU[k]) < 3 * mc_se + 0.01


def test_menu_entries():
    truth_spec, _ = _truth_model("normal")
    glmm = menu_entry("glmm", truth_spec)
    assert glmm.method == "ml"
    assert all(f is CopulaFamily.BVN for f in glmm.spec.vine.pair_families)
    hk = menu_entry("hk", truth_spec)
    assert hk.method == "hk"
    assert all(m.family is MarginFamily.BETA for m in hk.spec.margins)
    tok = menu_entry("cln270-normal", truth_spec)
    assert tok.spec.vine.pair_families[0] is CopulaFamily.CLAYTON270
    assert tok.spec.vine.pair_families[1] is CopulaFamily.BVN
    with pytest.raises(ParameterError):
        menu_entry("nonsense", truth_spec)


def test_run_study_report_identities():
    cfg = _config(replicates=3, n_studies=8)
    report = run_study(cfg, [menu_entry("true", cfg.spec)])
    m = report.models[0]
    assert 0.0 <= m.convergence_rate <= 1.0
    if m.replicates_used >= 2:
        r = m.replicates_used
        lhs = m.rmse ** 2
        rhs = m.bias ** 2 + m.sd ** 2 * (r - 1) / r
        mask = np.isfinite(lhs)
        assert_allclose(lhs[mask], rhs[mask], atol=1e-10)


def test_run_study_margin_mismatch_masks_dispersion():
    cfg = _config("beta", replicates=1, n_studies=8)
    report = run_study(cfg, [menu_entry("glmm", cfg.spec)])
    m = report.models[0]
    # fitted sigma has no comparable beta-margin truth
    assert np.all(np.isnan(m.truth[4:8]))
    assert np.all(np.isfinite(m.truth[0:4]))


def test_report_serialisation_round_trip():
    cfg = _config(replicates=2, n_studies=8)
    report = run_study(cfg, [menu_entry("true", cfg.spec)])
    text = report.to_csv()
    assert text.startswith("block,model,pi1")
    assert "bias,true" in text
    assert "convergence,true" in text
    import json
    payload = json.loads(report.to_json())
    assert payload["replicates"] == 2
    assert payload["models"][0]["name"] == "true"


def test_mimic_presets_values():
    normal = mimic_presets("normal")
    assert normal["arthritis"].n_studies == 22
    assert normal["arthritis"].params.margins[3].pi == 0.95
    assert normal["arthritis"].params.margins[1].delta == 1.0
    assert normal["diabetes"].n_studies == 38
    assert normal["diabetes"].n_q == 30
    beta = mimic_presets("beta")
    assert beta["arthritis"].params.margins[3].delta == 0.02
    assert tuple(beta["arthritis"].params.vine.tau) == TRUTH_TAU
