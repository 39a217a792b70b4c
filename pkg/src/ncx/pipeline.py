"""Batch orchestration: simulate -> fit -> secondary -> A, repeated over runs,
plus plot-data export and the self-check suite behind ``ncx verify``."""
from __future__ import annotations

import csv
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from . import MEAS_IDS, PREP_IDS
from .gpt_core import DataMatrix, check_coinflip_equivalence, check_prep_equivalence
from .inequality import (MAIN_MEAS, MAIN_PREPS, check_model_noncontextuality, compute_A,
                         contextual_example_model, max_noncontextual_A, model_statistics, model_table, noncontextual_bound,
                         saturating_model, table_from_fixture)
from .quantum_sim import (DEFAULT_NOISE, NoiseModel, apply_noise, ideal_procedures, make_rng,
                          random_procedures, sample_counts, true_matrix, uncertainty_floor)
from .secondary import SecondaryLPError, candidate_rows, construct
from .tomo_fit import DegenerateDataWarning, FitError, fit_hyperplane

BOUND = Fraction(5, 6)
DEFAULT_TOLERANCES = {"hyperplane": 1e-9, "equivalence": 1e-9}
PLOT_FILES = ("raw_vs_primary.csv", "prep_equivalence.csv", "meas_equivalence.csv",
              "correlations.csv", "runs.csv")
TERM_LABELS = ("M1|P1,0", "M1|P1,1", "M2|P2,0", "M2|P2,1", "M3|P3,0", "M3|P3,1")


class ConfigError(ValueError):
    pass


class NumericalError(RuntimeError):
    """A run produced data violating a constraint the construction guarantees."""


def _noise_from(spec) -> NoiseModel:
    if isinstance(spec, NoiseModel):
        return spec
    if spec is None or spec == "none":
        return NoiseModel()
    if spec == "default":
        return DEFAULT_NOISE
    if isinstance(spec, dict):
        try:
            return NoiseModel.from_dict(spec)
        except TypeError as exc:
            raise ConfigError(f"bad noise block: {exc}") from None
    raise ConfigError(f"noise must be 'default', 'none' or an object, got {spec!r}")


@dataclass(frozen=True)
class RunConfig:
    noise: NoiseModel = DEFAULT_NOISE
    mean_total: int = 100_000
    n_runs: int = 100
    seed: int = 0
    noise_seed: int | None = None
    exact: bool = False
    rng: str = "PCG64"
    on_zero: str = "resample"
    full_measurement_candidates: bool = False
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    output_dir: str = "ncx_out"

    def __post_init__(self):
        object.__setattr__(self, "noise", _noise_from(self.noise))
        for name in ("mean_total", "n_runs", "seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer")
        if self.n_runs < 1:
            raise ConfigError("n_runs must be at least 1")
        if self.mean_total < 1:
            raise ConfigError("mean_total must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.on_zero not in ("resample", "error"):
            raise ConfigError("on_zero must be 'resample' or 'error'")
        try:
            make_rng(0, self.rng)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(self.tolerances or {})
        unknown = set(tol) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"unknown tolerances: {sorted(unknown)}")
        if any(not (isinstance(v, (int, float)) and v > 0) for v in tol.values()):
            raise ConfigError("tolerances must be positive numbers")
        object.__setattr__(self, "tolerances", tol)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        data = dict(data)
        if "noise" in data:
            data["noise"] = _noise_from(data["noise"])
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "noise": self.noise.to_dict(),
            "mean_total": int(self.mean_total),
            "n_runs": int(self.n_runs),
            "seed": int(self.seed),
            "noise_seed": self.noise_seed,
            "exact": self.exact,
            "rng": self.rng,
            "on_zero": self.on_zero,
            "full_measurement_candidates": self.full_measurement_candidates,
            "tolerances": dict(self.tolerances),
            "output_dir": self.output_dir,
        }

    @property
    def effective_noise_seed(self) -> int:
        return self.seed if self.noise_seed is None else self.noise_seed


@dataclass
class RunDetail:
    """Matrices behind one successful run, kept for plot export."""
    raw: DataMatrix
    primary: DataMatrix
    prep_u: np.ndarray
    meas_rows: np.ndarray
    Ds: DataMatrix


@dataclass
class RunReport:
    config: RunConfig
    per_run: list
    aggregate: dict
    true: DataMatrix | None = None
    details: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "aggregate": self.aggregate, "per_run": self.per_run}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _mean_stderr(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return None, None
    mean = math.fsum(values) / values.size
    if values.size < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / math.sqrt(values.size))


def aggregate_runs(per_run) -> dict:
    """Means and standard errors of the mean over the successful runs."""
    ok = [r for r in per_run if r["error"] is None]
    agg = {"n_runs": len(per_run), "n_ok": len(ok), "n_failed": len(per_run) - len(ok)}
    a_mean, a_err = _mean_stderr([r["A"] for r in ok])
    chi_mean, chi_err = _mean_stderr([r["chi2"] for r in ok])
    agg.update({
        "A_mean": a_mean,
        "A_stderr": a_err,
        "chi2_mean": chi_mean,
        "chi2_stderr": chi_err,
        "C_P_mean": _mean_stderr([r["C_P"] for r in ok])[0],
        "C_M_mean": _mean_stderr([r["C_M"] for r in ok])[0],
        "per_term_mean": [_mean_stderr([r["per_term"][k] for r in ok])[0] for k in range(6)] if ok else None,
        "bound": float(BOUND),
    })
    if a_mean is not None and a_err:
        agg["sigma_violation"] = (a_mean - float(BOUND)) / a_err
    else:
        agg["sigma_violation"] = None
    return agg


def _raw_exact(true: DataMatrix, mean_total: int) -> DataMatrix:
    r = true.as_float()
    return DataMatrix(r, uncertainty_floor(r, mean_total), true.row_ids, true.col_ids)


def _one_run(raw: DataMatrix, config: RunConfig):
    tol = config.tolerances
    fit = fit_hyperplane(raw, floor_n=config.mean_total)
    plane_res = float(np.max(np.abs(fit.hyperplane.residual(fit.primary.as_float()))))
    if plane_res > tol["hyperplane"]:
        raise NumericalError(f"primary columns miss the hyperplane by {plane_res:.3g}")
    sec = construct(fit.primary, config.full_measurement_candidates)
    prep_res = check_prep_equivalence(sec.Ds)
    coin_res = check_coinflip_equivalence(sec.Ds.as_float())
    if max(prep_res, coin_res) > tol["equivalence"]:
        raise NumericalError(
            f"secondary procedures break equivalence (prep {prep_res:.3g}, coin-flip {coin_res:.3g})")
    a = compute_A(sec.Ds)
    record = {
        "chi2": fit.chi2_total,
        "p_value": fit.p_value,
        "C_P": sec.C_P,
        "C_M": sec.C_M,
        "A": float(a.value),
        "per_term": [float(x) for x in a.per_term],
        "hyperplane": fit.hyperplane.coeffs.tolist(),
    }
    full = len(sec.meas_weights.candidates) > 7
    meas_rows = sec.meas_weights.v @ candidate_rows(fit.primary.as_float(), full)
    detail = RunDetail(raw, fit.primary, np.array(sec.prep_weights.u), meas_rows, sec.Ds)
    return record, detail


def simulate_true(config: RunConfig) -> DataMatrix:
    """Noisy ground-truth probabilities; the noise draw is systematic, shared by all runs."""
    states, effects = ideal_procedures()
    states, effects = apply_noise(states, effects, config.noise, seed=config.effective_noise_seed)
    m = true_matrix(states, effects)
    return DataMatrix(m.values, None, MEAS_IDS, PREP_IDS)


def simulate_raw(config: RunConfig, run_index: int = 0, true: DataMatrix | None = None):
    """(counts or None, raw matrix) for one run."""
    true = simulate_true(config) if true is None else true
    if config.exact:
        return None, _raw_exact(true, config.mean_total)
    return sample_counts(true, config.mean_total, config.seed + run_index,
                         on_zero=config.on_zero, rng_name=config.rng)


def run_pipeline(config: RunConfig, keep_details: bool = True) -> RunReport:
    """Deterministic given the config: run i samples with seed + i."""
    true = simulate_true(config)
    per_run, details = [], []
    for i in range(config.n_runs):
        record = {"run": i, "seed": int(config.seed + i), "error": None}
        try:
            _, raw = simulate_raw(config, i, true)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateDataWarning)
                result, detail = _one_run(raw, config)
        except (FitError, SecondaryLPError, NumericalError, ValueError, np.linalg.LinAlgError) as exc:
            record["error"] = f"{type(exc).__name__}: {exc}"
            detail = None
        else:
            record.update(result)
        per_run.append(record)
        if keep_details and detail is not None:
            details.append(detail)
    return RunReport(config, per_run, aggregate_runs(per_run), true, details)


# -- plot data ---------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])


def export_plot_data(report: RunReport, out_dir) -> list:
    """Write the CSV tables behind the raw/primary, equivalence and correlation plots.

    raw_vs_primary.csv    run, measurement, preparation, raw, raw_uncertainty, primary, gap
    prep_equivalence.csv  measurement, mixture, primary, secondary (run averages)
    meas_equivalence.csv  preparation, Mstar_primary, Mstar_secondary (run averages)
    correlations.csv      term, mean, stderr
    runs.csv              run, seed, A, chi2, p_value, C_P, C_M, error
    """
    if not report.details:
        raise ValueError("report has no successful runs with retained matrices")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ok_runs = [r for r in report.per_run if r["error"] is None]

    rows3 = []
    for rec, d in zip(ok_runs, report.details):
        raw, dr, prim = d.raw.as_float(), d.raw.uncertainties, d.primary.as_float()
        for i, m in enumerate(MEAS_IDS):
            for j, p in enumerate(PREP_IDS):
                rows3.append([rec["run"], m, p, raw[i, j], float(dr[i, j]), prim[i, j],
                              abs(raw[i, j] - prim[i, j])])
    _write_csv(out / "raw_vs_primary.csv",
               ["run", "measurement", "preparation", "raw", "raw_uncertainty", "primary", "gap"], rows3)

    prim_mix, sec_mix = [], []
    for d in report.details:
        P = d.primary.as_float()
        S = P @ d.prep_u.T
        prim_mix.append(0.5 * (P[:, 0:6:2] + P[:, 1:6:2]))
        sec_mix.append(0.5 * (S[:, 0::2] + S[:, 1::2]))
    prim_mix, sec_mix = np.mean(prim_mix, axis=0), np.mean(sec_mix, axis=0)
    rows4a = [[m, f"P{t + 1}", prim_mix[i, t], sec_mix[i, t]]
              for i, m in enumerate(MEAS_IDS) for t in range(3)]
    _write_csv(out / "prep_equivalence.csv",
               ["measurement", "mixture", "primary", "secondary"], rows4a)

    mstar_p = np.mean([d.primary.as_float()[:3].mean(axis=0) for d in report.details], axis=0)
    mstar_s = np.mean([d.meas_rows.mean(axis=0) for d in report.details], axis=0)
    _write_csv(out / "meas_equivalence.csv", ["preparation", "Mstar_primary", "Mstar_secondary"],
               [[p, mstar_p[j], mstar_s[j]] for j, p in enumerate(PREP_IDS)])

    rows5a = []
    for k, label in enumerate(TERM_LABELS):
        mean, err = _mean_stderr([r["per_term"][k] for r in ok_runs])
        rows5a.append([label, mean, err])
    _write_csv(out / "correlations.csv", ["term", "mean", "stderr"], rows5a)

    rows5b = [[r["run"], r["seed"], r.get("A", ""), r.get("chi2", ""), r.get("p_value", ""),
               r.get("C_P", ""), r.get("C_M", ""), r["error"] or ""] for r in report.per_run]
    _write_csv(out / "runs.csv", ["run", "seed", "A", "chi2", "p_value", "C_P", "C_M", "error"],
               rows5b)
    return sorted(out / name for name in PLOT_FILES)


# -- self checks -------------------------------------------------------------

def load_fixture(name: str, fixture_dir=None) -> dict:
    if fixture_dir is not None:
        return json.loads((Path(fixture_dir) / name).read_text())
    return json.loads(resources.files("ncx.data").joinpath(name).read_text())


def compare_table(model, fixture: dict) -> list:
    """Cells where the model's table differs from the fixture, as messages."""
    expected = table_from_fixture(fixture)
    got = model_table(model)
    problems = []
    if got["preps"] != expected["preps"] or got["meas"] != expected["meas"]:
        return [f"layout mismatch: rows {got['preps']} cols {got['meas']}"]
    for i, p in enumerate(expected["preps"]):
        for j, m in enumerate(expected["meas"]):
            want, have = expected["cells"][i][j], Fraction(got["cells"][i][j])
            if want != have:
                problems.append(f"cell ({p}, {m}): expected {want}, got {have}")
    return problems


def _check_table(model, fixture):
    problems = compare_table(model, fixture)
    a = compute_A(model_statistics(model, MAIN_PREPS, MAIN_MEAS)).value
    if a != Fraction(fixture["A"]):
        problems.append(f"A: expected {fixture['A']}, got {a}")
    flags = check_model_noncontextuality(model)[:2]
    want = (fixture["noncontextual"]["preparation"], fixture["noncontextual"]["measurement"])
    if flags != want:
        problems.append(f"noncontextuality flags: expected {want}, got {flags}")
    return not problems, f"A = {a}" if not problems else "; ".join(problems)


def _check_bound():
    exact = noncontextual_bound()
    lp_value, _ = max_noncontextual_A(6)
    ok = exact == BOUND and abs(lp_value - float(BOUND)) <= 1e-9
    return ok, f"{exact} (LP {lp_value:.12f})"


def completeness_check(n_experiments: int = 20, seed: int = 2024, tol: float = 1e-8):
    """Noise-free random qubit experiments always fit with chi2 ~ 0.

    Returns (passed, worst chi2, message)."""
    rng = make_rng(seed)
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateDataWarning)
        for _ in range(n_experiments):
            states, effects = random_procedures(rng)
            r = true_matrix(states, effects).as_float()
            raw = DataMatrix(r, uncertainty_floor(r, 100_000))
            worst = max(worst, fit_hyperplane(raw).chi2_total)
    return worst <= tol, worst, f"max chi2 {worst:.3g}"


def noise_curve_check(vs=(0.5, 0.7, Fraction(2, 3), 0.9), tol: float = 1e-9):
    """Exact-mode A under uniform depolarization against (1 + v)/2."""
    worst = 0.0
    for v in vs:
        cfg = RunConfig(noise=NoiseModel(depolarize_v=float(v)), exact=True, n_runs=1)
        rep = run_pipeline(cfg, keep_details=False)
        a = rep.aggregate["A_mean"]
        if a is None:
            return False, math.inf, f"pipeline failed at v = {v}"
        worst = max(worst, abs(a - (1 + float(v)) / 2))
    return worst <= tol, worst, f"max |A - (1+v)/2| {worst:.3g}"


def verify_suite(fixture_dir=None, stream=None) -> int:
    """Run the built-in checks, print a pass/fail table, return 0 iff all pass."""
    stream = sys.stdout if stream is None else stream
    checks = []

    def record(name, fn):
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        checks.append((name, ok, detail))

    record("noncontextual bound", _check_bound)
    record("saturating model table", lambda: _check_table(saturating_model(), load_fixture("saturating_table.json", fixture_dir)))
    record("contextual model table",
           lambda: _check_table(contextual_example_model(), load_fixture("contextual_table.json", fixture_dir)))
    record("tomographic completeness", lambda: completeness_check()[::2])
    record("depolarization curve", lambda: noise_curve_check()[::2])

    width = max(len(name) for name, _, _ in checks)
    for name, ok, detail in checks:
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}", file=stream)
    return 0 if all(ok for _, ok, _ in checks) else 1
