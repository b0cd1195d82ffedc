"""Command-line interface: fit, scan, sroc, sim, diagnose.

Exit codes: 0 success, 2 validation error, 3 convergence failure, 4 I/O
error.  All outputs are written atomically and are byte-deterministic for a
fixed ``--seed``.  The environment variables ``DVINEMETA_NUMBA`` (``0`` to
force the pure-numpy kernels) and ``DVINEMETA_THREADS`` (numba thread cap)
control the compute backend.
"""

import io
import sys

import click
import numpy as np

from . import dataio, estimate, simstudy, sroc
from .copulas import CopulaFamily
from .errors import DataValidationError, ParameterError, UnsupportedModelError
from .likelihood import ModelSpec, gauss_legendre
from .margins import MarginSpec
from .simstudy import DEFAULT_SEED

_EXIT_VALIDATION = 2
_EXIT_CONVERGENCE = 3
_EXIT_IO = 4


def _fail(code, message):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guard(fn):
    try:
        fn()
    except (DataValidationError, ParameterError, UnsupportedModelError) as exc:
        _fail(_EXIT_VALIDATION, exc)
    except OSError as exc:
        _fail(_EXIT_IO, exc)


@click.group()
def main():
    """D-vine copula mixed models for joint meta-analysis of two diagnostic tests."""


def _fit_table(fit):
    lines = ["Param.      Estimate        SE"]
    ses = fit.se if fit.se is not None else [float("nan")] * len(fit.estimates)
    for name, est, se in zip(fit.param_names, fit.estimates, ses):
        se_txt = f"{se:9.3f}" if np.isfinite(se) else "        -"
        lines.append(f"{name:<10s} {est:9.3f} {se_txt}")
    lines.append(f"-log L     {-fit.loglik_max:9.1f}")
    return "\n".join(lines)


@main.command("fit")
@click.option("--data", "data_path", required=True,
              type=click.Path(exists=True), help="Study-count CSV.")
@click.option("--margin1", default="normal-logit", show_default=True,
              help="Margin for test 1 (normal-logit/-probit/-cloglog, beta).")
@click.option("--margin2", default="normal-logit", show_default=True)
@click.option("--copula12", default="bvn", show_default=True,
              help="Copula family for the test-1 (sens, spec) edge.")
@click.option("--copula34", default="bvn", show_default=True)
@click.option("--nq", default=15, show_default=True,
              help="Gauss-Legendre nodes per dimension.")
@click.option("--seed", default=DEFAULT_SEED, show_default=True)
@click.option("--out", default="fit.json", show_default=True,
              type=click.Path())
def cmd_fit(data_path, margin1, margin2, copula12, copula34, nq, seed, out):
    """Fit one D-vine copula mixed model by exact maximum likelihood."""

    def run():
        _, records = dataio.read_data_csv(data_path)
        spec = ModelSpec.per_test(
            MarginSpec.parse(margin1), MarginSpec.parse(margin2),
            CopulaFamily.parse(copula12), CopulaFamily.parse(copula34))
        rule = gauss_legendre(nq)
        fit = estimate.fit(spec, records, rule)
        dataio.write_json(out, dataio.fit_to_dict(fit))
        click.echo(_fit_table(fit))
        click.echo(f"written: {out}")
        if not fit.converged:
            _fail(_EXIT_CONVERGENCE,
                  f"fit did not converge (gradient norm {fit.gradient_norm:.3g},"
                  f" {fit.iterations} iterations): {fit.message}")

    _guard(run)


@main.command("scan")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--margins", default="normal-logit,beta", show_default=True,
              help="Comma list of margin choices per test.")
@click.option("--copulas", default="bvn,frank,cln0,cln90,cln180,cln270",
              show_default=True, help="Comma list of families for edges 12/34.")
@click.option("--nq", default=15, show_default=True)
@click.option("--seed", default=DEFAULT_SEED, show_default=True)
@click.option("--out", default="scan.json", show_default=True, type=click.Path())
def cmd_scan(data_path, margins, copulas, nq, seed, out):
    """Scan margin/copula choices; always adds the GLMM reference and the
    independent-pairs comparison."""

    def run():
        _, records = dataio.read_data_csv(data_path)
        margin_menu = [MarginSpec.parse(tok) for tok in margins.split(",")]
        copula_menu = [CopulaFamily.parse(tok) for tok in copulas.split(",")]
        rule = gauss_legendre(nq)
        report = estimate.scan(records, rule, margin_menu, copula_menu)
        glmm_fit = estimate.fit(ModelSpec.glmm(), records, rule)
        if report.best is None:
            dataio.write_json(out, {"kind": "scan_report",
                                    "scan": dataio.scan_to_dict(report),
                                    "glmm": dataio.fit_to_dict(glmm_fit),
                                    "pairs": None,
                                    "dependence_delta": None})
            _fail(_EXIT_CONVERGENCE, "no scan cell converged")
        best = report.entries[report.best]
        pair1, pair2 = estimate.fit_independent_pairs(
            records, rule,
            (best.spec.margins[0], best.spec.margins[2]),
            (best.spec.vine.pair_families[0], best.spec.vine.pair_families[2]))
        indep_ll = pair1.loglik_max + pair2.loglik_max
        delta = best.fit.loglik_max - indep_ll
        payload = {
            "kind": "scan_report",
            "scan": dataio.scan_to_dict(report),
            "glmm": dataio.fit_to_dict(glmm_fit),
            "pairs": [dataio.pair_fit_to_dict(pair1),
                      dataio.pair_fit_to_dict(pair2)],
            "independent_loglik": indep_ll,
            "dependence_delta": delta,
        }
        dataio.write_json(out, payload)
        click.echo("rank  -logL      spec")
        for rank, idx in enumerate(report.ranked(), start=1):
            e = report.entries[idx]
            click.echo(f"{rank:>4d}  {-e.fit.loglik_max:9.1f}  {e.spec.label}")
        failures = [e for e in report.entries if e.fit is None]
        for e in failures:
            click.echo(f"  failed: {e.spec.label}: {e.error}")
        click.echo(f"GLMM    {-glmm_fit.loglik_max:9.1f}")
        click.echo(f"independent pairs {-indep_ll:9.1f}")
        click.echo(f"dependence delta {delta:9.2f}")
        click.echo(f"written: {out}")

    _guard(run)


def _curves_csv(fit, test, qs, grid):
    buf = io.StringIO()
    buf.write("cond_value,curve_value,q,direction,scale\n")
    for q in qs:
        for direction in ("x1_given_x2", "x2_given_x1"):
            for scale in ("transformed", "original"):
                curve = sroc.quantile_curve(fit, test, q, direction, grid,
                                            scale)
                for spec_v, sens_v in curve.points:
                    cond, val = ((spec_v, sens_v)
                                 if direction == "x1_given_x2"
                                 else (sens_v, spec_v))
                    buf.write(f"{cond:.10g},{val:.10g},{q:g},"
                              f"{direction},{scale}\n")
    return buf.getvalue()


def _contour_csv(grid_obj):
    buf = io.StringIO()
    buf.write("spec_value,sens_value,density\n")
    for i, sv in enumerate(grid_obj.spec_values):
        for j, nv in enumerate(grid_obj.sens_values):
            buf.write(f"{sv:.10g},{nv:.10g},{grid_obj.density[i, j]:.10g}\n")
    return buf.getvalue()


def _sroc_svg(fit, grid):
    """Quick-look overlay: per-test median sens-given-spec curves, ROC axes."""
    size, pad = 480, 40
    span = size - 2 * pad

    def sx(fpr):
        return pad + fpr * span

    def sy(tpr):
        return size - pad - tpr * span

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
        f'height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" '
        'fill="none" stroke="black"/>',
        f'<text x="{size // 2}" y="{size - 8}" text-anchor="middle" '
        'font-size="12">1 - specificity</text>',
        f'<text x="12" y="{size // 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 12 {size // 2})">sensitivity</text>',
    ]
    colours = {1: "#c22", 2: "#272"}
    for test in (1, 2):
        curve = sroc.quantile_curve(fit, test, 0.5, "x1_given_x2", grid,
                                    "original")
        pts = " ".join(f"{sx(1.0 - sp):.2f},{sy(se):.2f}"
                       for sp, se in curve.points)
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{colours[test]}" stroke-width="1.5"/>')
        sens, spec = sroc.summary_point(fit, test)
        parts.append(f'<circle cx="{sx(1.0 - spec):.2f}" cy="{sy(sens):.2f}" '
                     f'r="4" fill="{colours[test]}"/>')
        parts.append(f'<text x="{pad + 8}" y="{pad + 16 * test}" '
                     f'font-size="12" fill="{colours[test]}">test {test}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


@main.command("sroc")
@click.option("--fit", "fit_path", required=True, type=click.Path(exists=True),
              help="Fit JSON produced by the fit command.")
@click.option("--q", "qs", multiple=True, type=float,
              help="Quantile levels (default 0.01, 0.5, 0.99).")
@click.option("--grid", default=101, show_default=True)
@click.option("--nq", default=15, show_default=True)
@click.option("--seed", default=DEFAULT_SEED, show_default=True)
@click.option("--out-prefix", default="sroc", show_default=True)
def cmd_sroc(fit_path, qs, grid, nq, seed, out_prefix):
    """Export quantile-curve, contour and summary-point files plus a quick SVG."""

    def run():
        payload = dataio.read_json(fit_path)
        if payload.get("kind") != "fit":
            raise DataValidationError(f"{fit_path}: not a fit file")
        fit = dataio.fit_from_dict(payload)
        levels = list(qs) if qs else [0.01, 0.5, 0.99]
        for test in (1, 2):
            dataio.write_text(f"{out_prefix}_test{test}_curves.csv",
                              _curves_csv(fit, test, levels, grid))
            cg = sroc.re_density_contour(fit, test, max(grid, 10))
            dataio.write_text(f"{out_prefix}_test{test}_contour.csv",
                              _contour_csv(cg))
        level_lines = ["test,coverage,density_level"]
        for test in (1, 2):
            cg = sroc.re_density_contour(fit, test, max(grid, 10))
            for cov in sorted(cg.levels):
                level_lines.append(f"{test},{cov:g},{cg.levels[cov]:.10g}")
        dataio.write_text(f"{out_prefix}_contour_levels.csv",
                          "\n".join(level_lines) + "\n")
        point_lines = ["test,sensitivity,specificity"]
        for test in (1, 2):
            sens, spec = sroc.summary_point(fit, test)
            point_lines.append(f"{test},{sens:.10g},{spec:.10g}")
        dataio.write_text(f"{out_prefix}_summary_points.csv",
                          "\n".join(point_lines) + "\n")
        dataio.write_text(f"{out_prefix}.svg", _sroc_svg(fit, grid))
        click.echo(f"written: {out_prefix}_test[12]_curves.csv, "
                   f"{out_prefix}_test[12]_contour.csv, "
                   f"{out_prefix}_contour_levels.csv, "
                   f"{out_prefix}_summary_points.csv, {out_prefix}.svg")

    _guard(run)


def _config_from_json(d):
    margin_family = d.get("margin_family", "normal")
    spec, params = simstudy._truth_model(margin_family)
    from .dvine import VineParams, VineSpec
    from .likelihood import ModelParams
    from .margins import MarginParams
    if "copulas" in d:
        vine = VineSpec(tuple(CopulaFamily.parse(f) for f in d["copulas"]))
        spec = ModelSpec(spec.margins, vine)
    pi = d.get("pi", [m.pi for m in params.margins])
    delta = d.get("delta", [m.delta for m in params.margins])
    tau = d.get("tau", list(params.vine.tau))
    params = ModelParams(
        tuple(MarginParams(float(p), float(g)) for p, g in zip(pi, delta)),
        VineParams.from_tau(spec.vine, [float(t) for t in tau]))
    try:
        return simstudy.SimConfig(
            n_studies=int(d["n_studies"]), study_size=int(d["study_size"]),
            prevalence=float(d["prevalence"]), spec=spec, params=params,
            replicates=int(d.get("replicates", 100)),
            seed=int(d.get("seed", DEFAULT_SEED)),
            n_q=int(d.get("n_q", 15)))
    except KeyError as exc:
        raise DataValidationError(
            f"simulation config is missing required field {exc}") from None


@main.command("sim")
@click.option("--preset",
              type=click.Choice(["arthritis-normal", "arthritis-beta",
                                 "diabetes-normal", "diabetes-beta"]),
              help="Named configuration (alternative to --config).")
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="JSON simulation config.")
@click.option("--replicates", default=None, type=int,
              help="Override the configured replicate count.")
@click.option("--models", default="true", show_default=True,
              help="Comma list: true, glmm, hk, or <copula>-<margin> tokens.")
@click.option("--nq", default=None, type=int, help="Override quadrature size.")
@click.option("--seed", default=DEFAULT_SEED, show_default=True)
@click.option("--out", default="sim.csv", show_default=True, type=click.Path())
def cmd_sim(preset, config_path, replicates, models, nq, seed, out):
    """Run a simulation study and write the Bias/SD/sqrt-Vbar/RMSE table."""

    def run():
        if (preset is None) == (config_path is None):
            raise ParameterError("provide exactly one of --preset or --config")
        if preset is not None:
            name, margin_family = preset.rsplit("-", 1)
            cfg = simstudy.mimic_presets(margin_family, seed=seed)[name]
        else:
            cfg = _config_from_json(dataio.read_json(config_path))
        updates = {"seed": seed}
        if replicates is not None:
            updates["replicates"] = replicates
        if nq is not None:
            updates["n_q"] = nq
        from dataclasses import replace
        cfg = replace(cfg, **updates)
        menu = [simstudy.menu_entry(tok, cfg.spec)
                for tok in models.split(",")]
        report = simstudy.run_study(cfg, menu)
        dataio.write_text(out, report.to_csv())
        json_out = out.rsplit(".", 1)[0] + ".json"
        dataio.write_text(json_out, report.to_json() + "\n")
        click.echo(report.to_csv())
        click.echo(f"written: {out}, {json_out}")

    _guard(run)


@main.command("diagnose")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--nq", default=15, show_default=True)
@click.option("--seed", default=DEFAULT_SEED, show_default=True)
@click.option("--out", default="diagnose.csv", show_default=True,
              type=click.Path())
def cmd_diagnose(data_path, nq, seed, out):
    """Per-study discrete-probability diagnostic for HK reliability."""

    def run():
        ids, records = dataio.read_data_csv(data_path)
        rep = estimate.discreteness_diagnostic(records)
        lines = ["study_id,test,outcome,probability"]
        outcome_names = ("sensitivity", "specificity")
        for s, sid in enumerate(ids):
            for j in range(4):
                test = 1 if j < 2 else 2
                outcome = outcome_names[j % 2]
                lines.append(f"{sid},{test},{outcome},"
                             f"{rep.probabilities[s, j]:.10g}")
        dataio.write_text(out, "\n".join(lines) + "\n")
        hist_lines = ["bin_lo,bin_hi,count"]
        for k in range(len(rep.hist_counts)):
            hist_lines.append(f"{rep.hist_edges[k]:.6g},"
                              f"{rep.hist_edges[k + 1]:.6g},"
                              f"{rep.hist_counts[k]}")
        hist_out = out.rsplit(".", 1)[0] + "_hist.csv"
        dataio.write_text(hist_out, "\n".join(hist_lines) + "\n")
        click.echo(f"max per-study probability: {rep.max_probability:.4f}")
        if rep.hk_reliable:
            click.echo("HK approximation looks reliable for this dataset")
        else:
            click.echo("advisory: HK likely unreliable (large discrete "
                       "probabilities)")
        click.echo(f"written: {out}, {hist_out}")

    _guard(run)


if __name__ == "__main__":
    main()
