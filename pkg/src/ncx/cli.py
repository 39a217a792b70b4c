"""Command-line entry point ``ncx``.

Exit codes: 0 success, 2 validation error (bad input files or arguments),
3 numerical failure (fit, LP or constraint breakdown).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .gpt_core import DataMatrix
from .inequality import (MAIN_MEAS, MAIN_PREPS, BoundError, OntologicalModel,
                         check_model_noncontextuality, compute_A, max_noncontextual_A,
                         model_statistics, model_table, noncontextual_bound)
from .pipeline import (ConfigError, NumericalError, RunConfig, export_plot_data, run_pipeline,
                       simulate_raw, verify_suite)
from .secondary import SecondaryLPError, construct
from .tomo_fit import FitError, fit_hyperplane

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _out_dir(args, default="."):
    return Path(args.out if args.out is not None else default)


def _matrix_from(data) -> DataMatrix:
    # accept a bare DataMatrix or a FitResult carrying one under "primary"
    if isinstance(data, dict) and "values" not in data and "primary" in data:
        data = data["primary"]
    try:
        return DataMatrix.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"not a data matrix: {exc}") from None


def cmd_simulate(args):
    config = RunConfig.from_dict(_read_json(args.config))
    counts, raw = simulate_raw(config, args.run)
    out = _out_dir(args, config.output_dir)
    _write_json(out / "raw.json", raw.to_dict())
    print(f"raw matrix written to {out / 'raw.json'}")
    if args.counts_out:
        if counts is None:
            raise ConfigError("exact mode draws no counts; drop --counts-out or set exact to false")
        _write_json(Path(args.counts_out), counts.to_dict())
        print(f"counts written to {args.counts_out}")
    return EXIT_OK


def cmd_fit(args):
    raw = _matrix_from(_read_json(args.raw))
    result = fit_hyperplane(raw)
    out = _out_dir(args)
    _write_json(out / "fit.json", result.to_dict())
    h = result.hyperplane
    print(f"hyperplane a={h.a:.9g} b={h.b:.9g} c={h.c:.9g} d={h.d:.9g}")
    print(f"chi2 = {result.chi2_total:.6g} (dof {result.dof}), p = {result.p_value:.4g}")
    return EXIT_OK


def cmd_secondary(args):
    primary = _matrix_from(_read_json(args.primary))
    result = construct(primary, args.full_candidates)
    a = compute_A(result.Ds)
    out = _out_dir(args)
    payload = result.to_dict()
    payload["A"] = float(a.value)
    payload["per_term"] = [float(x) for x in a.per_term]
    _write_json(out / "secondary.json", payload)
    print(f"C_P = {result.C_P:.6f}  C_M = {result.C_M:.6f}  A = {float(a.value):.6f}")
    return EXIT_OK


def cmd_analyze(args):
    config = RunConfig.from_dict(_read_json(args.config))
    report = run_pipeline(config)
    out = _out_dir(args, config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json(indent=2) + "\n")
    agg = report.aggregate
    if agg["n_ok"] == 0:
        print(f"all {agg['n_runs']} runs failed; first error: {report.per_run[0]['error']}", file=sys.stderr)
        return EXIT_NUMERICAL
    export_plot_data(report, out)
    sigma = agg["sigma_violation"]
    print(f"runs {agg['n_ok']}/{agg['n_runs']} ok")
    print(f"A = {agg['A_mean']:.6f} +- {agg['A_stderr']:.6f}  (bound 5/6"
          + (f", {sigma:.1f} sigma)" if sigma is not None else ")"))
    print(f"chi2 = {agg['chi2_mean']:.3f} +- {agg['chi2_stderr']:.3f}")
    print(f"C_P = {agg['C_P_mean']:.6f}  C_M = {agg['C_M_mean']:.6f}")
    print(f"outputs in {out}")
    return EXIT_OK


def cmd_bound(args):
    exact = noncontextual_bound()
    lp_value, _ = max_noncontextual_A(args.n_lambda)
    if args.json:
        print(json.dumps({"bound": str(exact), "lp_value": lp_value}))
    else:
        print(exact)
        print(f"LP tightness search over {args.n_lambda} ontic states: {lp_value:.12f}")
    if abs(lp_value - float(exact)) > 1e-9:
        print("LP optimum disagrees with the vertex enumeration", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_model_check(args):
    try:
        model = OntologicalModel.from_dict(_read_json(args.model))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed model: {exc}") from None
    prep_nc, meas_nc, residuals = check_model_noncontextuality(model)
    table = model_table(model)
    a = compute_A(model_statistics(model, MAIN_PREPS, MAIN_MEAS)).value
    print(json.dumps({
        "A": str(a),
        "preparation_noncontextual": prep_nc,
        "measurement_noncontextual": meas_nc,
        "residuals": residuals,
        "table": {"preps": table["preps"], "meas": table["meas"],
                  "cells": [[str(x) for x in row] for row in table["cells"]]},
    }, indent=2))
    return EXIT_OK


def cmd_verify(args):
    return verify_suite(args.fixtures)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncx", description="Noncontextuality-test analysis pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw one raw data matrix from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--counts-out")
    p.add_argument("--run", type=int, default=0, help="run index (seed offset)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a raw matrix to the three-fiducial GPT")
    p.add_argument("--raw", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("secondary", help="build secondary procedures from a primary matrix")
    p.add_argument("--primary", required=True)
    p.add_argument("--out")
    p.add_argument("--full-candidates", action="store_true",
                   help="also allow flipped M1..M3 in the measurement mixtures")
    p.set_defaults(func=cmd_secondary)

    p = sub.add_parser("analyze", help="full multi-run pipeline with CSV export")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bound", help="print the noncontextual bound on A")
    p.add_argument("--n-lambda", type=int, default=6)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("model-check", help="statistics and noncontextuality of an ontological model")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_model_check)

    p = sub.add_parser("verify", help="run the built-in self checks")
    p.add_argument("--fixtures", help="directory holding saturating_table.json and contextual_table.json")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FitError, SecondaryLPError, NumericalError, BoundError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
