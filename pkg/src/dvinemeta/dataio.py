"""File formats: study-count CSV, fit/scan JSON, atomic writes.

The data CSV carries one row per study with both tests' 2x2 tables:

    study_id, tp1, fn1, tn1, fp1, tp2, fn2, tn2, fp2

Diseased and non-diseased denominators are derived (tp + fn, tn + fp) and
must agree across the two tests (shared gold standard).  Fit files are JSON
and round-trip losslessly.
"""

import csv
import json
import os
import tempfile

import numpy as np

from .copulas import CopulaFamily
from .dvine import VineSpec
from .errors import DataValidationError
from .estimate import FitResult, PairFitResult, ScanEntry, ScanReport, param_names, unpack_params
from .likelihood import ModelSpec, StudyRecord
from .margins import MarginSpec

DATA_COLUMNS = ("study_id", "tp1", "fn1", "tn1", "fp1",
                "tp2", "fn2", "tn2", "fp2")


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text(path, text):
    _atomic_write(path, text)


def read_data_csv(path):
    """Parse and validate a study-count CSV; returns (study_ids, records)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file") from None
        header = [h.strip().lower() for h in header]
        if header != list(DATA_COLUMNS):
            raise DataValidationError(
                f"{path}: header must be {','.join(DATA_COLUMNS)}")
        ids = []
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 9:
                raise DataValidationError(
                    f"{path}: row {lineno} has {len(row)} fields, expected 9")
            study_id = row[0].strip()
            counts = {}
            for name, cell in zip(DATA_COLUMNS[1:], row[1:]):
                try:
                    val = int(cell)
                except ValueError:
                    raise DataValidationError(
                        f"{path}: row {lineno}, column {name}: "
                        f"{cell!r} is not an integer") from None
                if val < 0:
                    raise DataValidationError(
                        f"{path}: row {lineno}, column {name}: "
                        f"counts must be non-negative")
                counts[name] = val
            n_dis1 = counts["tp1"] + counts["fn1"]
            n_dis2 = counts["tp2"] + counts["fn2"]
            n_non1 = counts["tn1"] + counts["fp1"]
            n_non2 = counts["tn2"] + counts["fp2"]
            if n_dis1 != n_dis2:
                raise DataValidationError(
                    f"{path}: row {lineno}: tp1+fn1={n_dis1} differs from "
                    f"tp2+fn2={n_dis2} (shared gold standard)")
            if n_non1 != n_non2:
                raise DataValidationError(
                    f"{path}: row {lineno}: tn1+fp1={n_non1} differs from "
                    f"tn2+fp2={n_non2} (shared gold standard)")
            ids.append(study_id)
            records.append(StudyRecord(
                (counts["tp1"], counts["tn1"], counts["tp2"], counts["tn2"]),
                (n_dis1, n_non1, n_dis2, n_non2)))
    if not records:
        raise DataValidationError(f"{path}: no data rows")
    return ids, records


def write_data_csv(path, ids, records):
    lines = [",".join(DATA_COLUMNS)]
    for sid, rec in zip(ids, records):
        tp1, tn1, tp2, tn2 = rec.y
        nd, nn = rec.n[0], rec.n[1]
        lines.append(",".join(map(str, (
            sid, tp1, nd - tp1, tn1, nn - tn1,
            tp2, nd - tp2, tn2, nn - tn2))))
    _atomic_write(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# model/fit serialisation

def spec_to_dict(spec):
    return {"margins": [m.label for m in spec.margins],
            "vine": [f.value for f in spec.vine.pair_families]}


def spec_from_dict(d):
    margins = tuple(MarginSpec.parse(m) for m in d["margins"])
    vine = VineSpec(tuple(CopulaFamily.parse(f) for f in d["vine"]))
    return ModelSpec(margins, vine)


def _opt_array(a):
    return None if a is None else [float(v) for v in a]


def fit_to_dict(fit):
    return {
        "kind": "fit",
        "method": fit.method,
        "spec": spec_to_dict(fit.spec),
        "param_names": list(fit.param_names),
        "estimates": [float(v) for v in fit.estimates],
        "se": _opt_array(fit.se),
        "loglik_max": float(fit.loglik_max),
        "n_q": fit.n_q,
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
        "gradient_norm": float(fit.gradient_norm),
        "hessian_pd": bool(fit.hessian_pd),
        "message": fit.message,
    }


def fit_from_dict(d):
    spec = spec_from_dict(d["spec"])
    estimates = np.asarray(d["estimates"], dtype=float)
    se = d.get("se")
    return FitResult(
        spec=spec,
        params_hat=unpack_params(spec, estimates),
        param_names=list(d["param_names"]),
        estimates=estimates,
        se=None if se is None else np.asarray(se, dtype=float),
        loglik_max=float(d["loglik_max"]),
        n_q=int(d["n_q"]),
        converged=bool(d["converged"]),
        iterations=int(d["iterations"]),
        gradient_norm=float(d["gradient_norm"]),
        hessian_pd=bool(d["hessian_pd"]),
        method=d.get("method", "ml"),
        message=d.get("message", ""),
    )


def pair_fit_to_dict(fit):
    return {
        "kind": "pair_fit",
        "margin": fit.margin.label,
        "family": fit.family.value,
        "param_names": list(fit.param_names),
        "estimates": [float(v) for v in fit.estimates],
        "se": _opt_array(fit.se),
        "loglik_max": float(fit.loglik_max),
        "n_q": fit.n_q,
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
        "gradient_norm": float(fit.gradient_norm),
        "hessian_pd": bool(fit.hessian_pd),
    }


def pair_fit_from_dict(d):
    return PairFitResult(
        margin=MarginSpec.parse(d["margin"]),
        family=CopulaFamily.parse(d["family"]),
        param_names=list(d["param_names"]),
        estimates=np.asarray(d["estimates"], dtype=float),
        se=None if d.get("se") is None else np.asarray(d["se"], dtype=float),
        loglik_max=float(d["loglik_max"]),
        n_q=int(d["n_q"]),
        converged=bool(d["converged"]),
        iterations=int(d["iterations"]),
        gradient_norm=float(d["gradient_norm"]),
        hessian_pd=bool(d["hessian_pd"]),
    )


def scan_to_dict(report):
    return {
        "kind": "scan",
        "entries": [{
            "spec": spec_to_dict(e.spec),
            "fit": None if e.fit is None else fit_to_dict(e.fit),
            "error": e.error,
        } for e in report.entries],
        "best": report.best,
    }


def scan_from_dict(d):
    entries = []
    for e in d["entries"]:
        fit = None if e["fit"] is None else fit_from_dict(e["fit"])
        entries.append(ScanEntry(spec_from_dict(e["spec"]), fit,
                                 e.get("error", "")))
    return ScanReport(entries, d.get("best"))


def write_json(path, obj):
    _atomic_write(path, json.dumps(obj, indent=2) + "\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
