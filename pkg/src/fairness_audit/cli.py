"""Command-line front end: ``fairness-audit {synth,face,fact,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .balance import QQData, balance_report, jitter_data, qq_data, render_svg
from .dataset import prepare, load_schema, write_csv, write_schema
from .errors import (
    AuditError,
    DegenerateDataset,
    EmptyMatch,
    FingerprintMismatch,
    InternalFlowError,
    NoCommonSupport,
    NoControlsAvailable,
    NoInformativePairs,
    NumericalCovarianceFailure,
    PositivityViolation,
    ProtectedNotBinary,
    SchemaMismatch,
    SeparationDetected,
    SingularDesign,
    WriteError,
    ZeroVarianceFeature,
)
from .face import estimate_face, interpret_face_for
from .fact import estimate_fact, interpret_fact_for
from .matching import MatchConfig, match
from .propensity import fit_propensity, positivity_report
from .sensitivity import gamma_grid, sensitivity_for_match
from .synthgen import SynthConfig, generate

log = logging.getLogger("fairness_audit")

SPEC_VERSION = "1.0"
METHOD_FLAGS = {
    "exact": "exact",
    "nn": "nn",
    "nn-caliper": "nn_caliper",
    "mahal-caliper": "mahalanobis_caliper",
    "full": "full",
}
EXIT_CODES = [
    ((SchemaMismatch, ProtectedNotBinary, DegenerateDataset), 2),
    ((PositivityViolation, NoCommonSupport), 3),
    ((SingularDesign, SeparationDetected, NumericalCovarianceFailure, InternalFlowError,
      ZeroVarianceFeature), 4),
    ((NoControlsAvailable,), 5),
    ((FingerprintMismatch,), 6),
]


def exit_code_for(exc: AuditError) -> int:
    for kinds, code in EXIT_CODES:
        if isinstance(exc, kinds):
            return code
    return 1


def _dump(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, ensure_ascii=False)
    try:
        Path(path).write_text(text + "\n", encoding="utf-8")
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc}") from exc


def _load(args):
    if not Path(args.data).is_file():
        raise SchemaMismatch(f"data file not found: {args.data}")
    return prepare(args.data, load_schema(args.schema), delimiter=args.delimiter)


def _dataset_block(d) -> dict:
    return {
        "sha256": d.metadata.get("sha256"),
        "source": d.metadata.get("source"),
        "n_rows": d.n,
        "rows_dropped_missing": d.metadata.get("rows_dropped_missing", 0),
        "protected": d.protected.name,
        "treated_level": d.protected.treated_level,
        "outcome": d.outcome_column.name,
        "outcome_kind": d.outcome_kind,
    }


def cmd_synth(args) -> int:
    try:
        cfg = SynthConfig(n=args.n, seed=args.seed, tau=args.tau, noise_sd=args.noise_sd)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    d = generate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(d, out / "data.csv")
    write_schema(d.schema, out / "schema.json")
    _dump(d.metadata, out / "generator.json")
    return 0


def cmd_face(args) -> int:
    d = _load(args)
    p = fit_propensity(d)
    e = estimate_face(d, p, alpha=args.alpha, covariance=args.covariance)
    sw = p.stabilized_weight
    report = {
        "spec_version": SPEC_VERSION,
        "command": "face",
        "dataset": _dataset_block(d),
        "alpha": args.alpha,
        "covariance": args.covariance,
        "propensity": {
            "marginal_treated": float(p.marginal_treated),
            "near_positivity_rows": len(positivity_report(p)),
            "stabilized_weight": {"min": float(sw.min()), "mean": float(sw.mean()), "max": float(sw.max())},
        },
        "estimate": e.to_dict(),
        "interpretation": interpret_face_for(d, e),
    }
    _dump(report, args.out)
    return 0


def _safe_name(s: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", s)


def _write_plots(d, p, m, plot_dir, seed) -> list[str]:
    out = Path(plot_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise WriteError(f"cannot create {out}: {exc}") from exc
    written = []
    x = d.features()
    for j, name in enumerate(d.feature_names):
        pts = qq_data(x[:, j], p.treated, m.match_weight, n_quantiles=50)
        path = out / f"qq_{_safe_name(name)}.svg"
        render_svg(QQData(name, tuple(pts)), path)
        written.append(path.name)
    path = out / "jitter.svg"
    render_svg(jitter_data(p, m, seed=seed), path)
    written.append(path.name)
    return written


def cmd_fact(args) -> int:
    d = _load(args)
    method = METHOD_FLAGS[args.method]
    cfg = MatchConfig(
        method=method,
        caliper_sd=args.caliper,
        discard="none" if method == "exact" else args.discard,
    )
    p = None if method == "exact" else fit_propensity(d)
    m = match(d, p, cfg)
    if args.matches_out:
        _dump(m.to_dict(), args.matches_out)
    report = {
        "spec_version": SPEC_VERSION,
        "command": "fact",
        "dataset": _dataset_block(d),
        "alpha": args.alpha,
        "covariance": "cluster" if args.cluster else args.covariance,
        "method": args.method,
        "match": {
            "n_treated_matched": m.n_treated_matched,
            "n_control_matched": m.n_control_matched,
            "n_discarded": int(np.count_nonzero(m.discarded)),
            "caliper": m.caliper,
            "n_subclasses": len(m.subclasses),
        },
    }
    try:
        e = estimate_fact(d, m, alpha=args.alpha, covariance=args.covariance, cluster=args.cluster)
    except EmptyMatch as exc:
        report.update({"empty_match": True, "message": str(exc), "estimate": None,
                       "balance": None, "sensitivity": None, "interpretation": None})
        _dump(report, args.out)
        return 0
    report["empty_match"] = False
    if p is not None:
        report["balance"] = balance_report(d, p, m).to_dict()
    else:
        report["balance"] = None
    report["estimate"] = e.to_dict()
    report["interpretation"] = interpret_fact_for(d, e, m)
    grid = gamma_grid(args.gamma_max, args.gamma_step)
    try:
        sens = sensitivity_for_match(m, d.outcome, d.outcome_kind, e.estimate, grid)
        report["sensitivity"] = sens.to_dict(args.alpha)
    except NoInformativePairs as exc:
        report["sensitivity"] = {"error": str(exc), "gammas": [float(g) for g in grid]}
    if args.plots:
        report["plots"] = _write_plots(d, p, m, args.plots, args.seed) if p is not None else []
    _dump(report, args.out)
    return 0


def _summary_row(rep: dict) -> dict:
    est = rep.get("estimate") or {}
    bal = rep.get("balance") or {}
    sens = rep.get("sensitivity") or {}
    match_block = rep.get("match") or {}
    return {
        "estimand": "FACE" if rep["command"] == "face" else "FACT",
        "method": rep.get("method", "ipw"),
        "n_treated_matched": match_block.get("n_treated_matched"),
        "n_control_matched": match_block.get("n_control_matched"),
        "d_bar_before": bal.get("d_bar_before"),
        "d_bar_after": bal.get("d_bar_after"),
        "estimate": est.get("estimate"),
        "std_error": est.get("std_error"),
        "p_value": est.get("p_value"),
        "significant": est.get("significant"),
        "critical_gamma": sens.get("critical_gamma"),
    }


def cmd_report(args) -> int:
    reports = []
    for path in args.inputs:
        try:
            reports.append(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaMismatch(f"cannot read report {path}: {exc}") from exc
    prints = {r["dataset"]["sha256"] for r in reports}
    if len(prints) != 1:
        raise FingerprintMismatch(f"reports come from {len(prints)} different datasets")
    summary = {
        "spec_version": SPEC_VERSION,
        "command": "report",
        "dataset": reports[0]["dataset"],
        "rows": [_summary_row(r) for r in reports],
    }
    _dump(summary, args.out)
    return 0


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _alpha(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fairness-audit", description="Causal group-fairness audits.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic benchmark data set")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tau", type=float, default=0.0)
    s.add_argument("--noise-sd", type=float, default=0.0)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    def data_args(q):
        q.add_argument("--data", required=True)
        q.add_argument("--schema", required=True)
        q.add_argument("--delimiter", default=",")
        q.add_argument("--alpha", type=_alpha, default=0.05)
        q.add_argument("--covariance", choices=("hc3", "sandwich", "model"), default="hc3")
        q.add_argument("--out", required=True, help="report JSON path")

    f = sub.add_parser("face", help="population-level effect via weighting")
    data_args(f)
    f.set_defaults(func=cmd_face)

    t = sub.add_parser("fact", help="effect on the treated via matching")
    data_args(t)
    t.add_argument("--method", choices=tuple(METHOD_FLAGS), default="full")
    t.add_argument("--caliper", type=_positive_float, default=0.25,
                   help="caliper in pooled SDs of the linear propensity score")
    t.add_argument("--discard", choices=("common_support", "none"), default="common_support")
    t.add_argument("--cluster", action="store_true", help="subclass-clustered variance (full/exact)")
    t.add_argument("--gamma-max", type=float, default=10.0)
    t.add_argument("--gamma-step", type=_positive_float, default=0.5)
    t.add_argument("--plots", help="directory for QQ and jitter SVGs")
    t.add_argument("--seed", type=int, default=0, help="jitter-plot seed")
    t.add_argument("--matches-out", help="write the match structure as JSON")
    t.set_defaults(func=cmd_fact)

    r = sub.add_parser("report", help="merge face and fact reports")
    r.add_argument("--inputs", nargs="+", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except AuditError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
