"""Command-line driver.

Each subcommand resolves its parameters (flags over config file over
defaults), validates them, computes everything, then writes its artifacts
into ``<output_dir>/<subcommand>/<run_name>/``::

    fracsobolev oracle-rates --theta 1.5 --family exp --r 1.2
    fracsobolev fredholm --replicates 5 --run-name quick
    fracsobolev finite-rank --K 1 --eps-norm 0.1

Exit codes: 0 all checks pass, 1 a check failed (see ``failures.json``),
2 usage error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import math
import os
import platform
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from . import experiments as ex
from . import io
from .estimators import finite_rank_bias_demo
from .fredholm import build_problem
from .selection import GCV, LCURVE, ORACLE, LambdaGrid, gcv_function, lcurve_points, lcurve_lambda
from .series import dominating_terms, verify_dominating_order
from .spectrum import EXPONENTIAL, POLYNOMIAL, beta_of, build_spectrum, build_true_function, normalize_family

log = logging.getLogger("fracsobolev")

OUTPUT_ENV = "FRACSOBOLEV_OUTPUT_DIR"
EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

SUBCOMMANDS = ("spectrum", "oracle-rates", "fredholm", "series-check", "finite-rank", "rate-fit")


class UsageError(Exception):
    """Invalid parameter; the message names the violated precondition."""


@dataclass(frozen=True)
class Param:
    name: str
    type: type
    default: object
    help: str
    multiple: bool = False
    flag: str | None = None
    choices: tuple | None = None


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    text = str(v).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _optional_float(v):
    if v is None or (isinstance(v, str) and v.lower() == "none"):
        return None
    return float(v)


COMMON = [
    Param("master_seed", int, 0, "master seed; every cell seed is derived from it"),
    Param("run_name", str, None, "run directory name (default: timestamp)"),
    Param("jobs", int, 1, "worker processes for independent cells"),
    Param("lambda_lo", float, None, "smallest lambda of the grid"),
    Param("lambda_hi", float, None, "largest lambda of the grid"),
    Param("lambda_count", int, None, "number of log-spaced lambda grid points"),
]

_SPECTRUM_PARAMS = [
    Param("family", str, "exponential", "eigenvalue decay family (exponential|exp|polynomial|poly)"),
    Param("theta", float, 1.5, "decay parameter"),
    Param("N", int, 200, "number of retained modes", flag="--N"),
    Param("p_lo", float, 1.0, "lower bound of eigenvalue perturbations p_i^{-1}"),
    Param("p_hi", float, 1.0, "upper bound of eigenvalue perturbations p_i^{-1}"),
]

PARAMS: dict[str, list[Param]] = {
    "spectrum": _SPECTRUM_PARAMS + [
        Param("r", _optional_float, 1.2, "smoothness of the true function ('none' for eigenvalues only)"),
        Param("coef_lo", float, 1.0, "lower bound of coefficient perturbations"),
        Param("coef_hi", float, 1.0, "upper bound of coefficient perturbations"),
        Param("null", float, [], "null-space components d_j", multiple=True),
    ],
    "oracle-rates": _SPECTRUM_PARAMS + [
        Param("r", float, [0.7, 1.2, 1.7], "smoothness values", multiple=True),
        Param("s", float, [0.25 * k for k in range(13)], "penalty orders", multiple=True),
        Param("sigma_lo", float, 1e-7, "smallest noise level"),
        Param("sigma_hi", float, 1e-1, "largest noise level"),
        Param("sigma_count", int, 15, "number of log-spaced noise levels"),
        Param("tol", float, 0.05, "allowed |fitted - theoretical| rate difference"),
    ],
    "fredholm": [
        Param("M", int, 500, "quadrature points", flag="--M"),
        Param("tau", float, 1e-13, "relative eigenvalue cutoff for the numerical rank"),
        Param("rule", str, "midpoint", "quadrature rule", choices=("midpoint", "trapezoid")),
        Param("export_modes", int, 10, "eigenvectors written to eigenvectors.csv"),
        Param("practical", _bool, True, "run the selector comparison"),
        Param("r", float, 1.5, "smoothness of the true function"),
        Param("beta", float, 1.25, "decay constant used to check admissibility of r"),
        Param("s", float, [0.0, 1.0, 2.0], "penalty orders", multiple=True),
        Param("sigma_lo", float, 1e-3, "smallest nominal noise level"),
        Param("sigma_hi", float, 10**-0.5, "largest nominal noise level"),
        Param("sigma_count", int, 11, "number of log-spaced noise levels"),
        Param("methods", str, [ORACLE, LCURVE, GCV], "selectors", multiple=True),
        Param("replicates", int, 20, "noise replicates"),
        Param("noise_scaling", str, ex.RELATIVE, "sigma relative to ||L phi*|| or absolute",
              choices=(ex.RELATIVE, ex.ABSOLUTE)),
        Param("ratio_limit", float, 10.0, "allowed median L-curve/oracle error ratio at s=1"),
        Param("trace_replicate", int, 0, "replicate whose selector curves go to traces.csv"),
    ],
    "series-check": _SPECTRUM_PARAMS + [
        Param("r", float, 1.2, "smoothness of the true function"),
        Param("s", float, 1.0, "penalty order"),
        Param("tol_a", float, 0.02, "allowed slope deviation for A and -A'/2"),
        Param("tol_b", float, 0.05, "allowed slope deviation for B and B1"),
    ],
    "finite-rank": [
        Param("K", int, 1, "rank of the operator", flag="--K"),
        Param("eps_norm", float, 0.1, "norm of the null-space perturbation of the data"),
        Param("phi_norm", float, 1.0, "norm of the true function"),
        Param("theta", float, 1.5, "eigenvalues are exp(-theta (i-1)), i = 1..K"),
        Param("s", float, 1.0, "order of the fractional Sobolev penalty"),
        Param("sigma", float, [1e-1, 1e-2, 1e-3, 1e-4, 1e-5], "noise levels", multiple=True),
        Param("l2_floor", float, 0.2, "claimed lower bound of the minimal L2 error"),
    ],
    "rate-fit": [
        Param("input", str, None, "CSV file to fit"),
        Param("x_column", str, "sigma", "abscissa column"),
        Param("y_column", str, "error", "ordinate column"),
        Param("where", str, [], "row filters column=value", multiple=True),
        Param("expect_slope", _optional_float, None, "expected slope (adds a check)"),
        Param("tol", float, 0.05, "allowed slope deviation"),
    ],
}

LAMBDA_DEFAULTS = {
    "spectrum": (1e-25, 1e2, 271),
    "oracle-rates": (1e-25, 1e2, 271),
    "fredholm": (1e-25, 1e2, 271),
    "series-check": (1e-10, 1e-6, 41),
    "finite-rank": (1e-12, 1e4, 321),
    "rate-fit": (1e-25, 1e2, 271),
}


def _flag(p: Param) -> str:
    return p.flag or "--" + p.name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="YAML config file")
    common.add_argument("--output-dir", dest="output_dir", default=argparse.SUPPRESS,
                        help=f"root of run directories (default: ${OUTPUT_ENV} or ./runs)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    for p in COMMON:
        common.add_argument(_flag(p), dest=p.name, type=p.type, default=argparse.SUPPRESS, help=p.help)

    parser = argparse.ArgumentParser(
        prog="fracsobolev",
        description="Fractional Sobolev regularization experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[common], help=_SUB_HELP[name])
        for p in PARAMS[name]:
            kw = dict(dest=p.name, type=p.type, default=argparse.SUPPRESS, help=p.help)
            if p.multiple:
                kw["nargs"] = "+"
            if p.choices:
                kw["choices"] = p.choices
            sp.add_argument(_flag(p), **kw)
    return parser


_SUB_HELP = {
    "spectrum": "build a parametric spectrum and true function, export them",
    "oracle-rates": "oracle convergence-rate sweep over (r, s, sigma)",
    "fredholm": "Fredholm testbed eigensystem and selector comparison",
    "series-check": "bias/variance series against their small-lambda asymptotics",
    "finite-rank": "L2 versus H^s regularization for a finite-rank operator",
    "rate-fit": "log-log rate fit of two columns of a CSV file",
}


def _coerce(p: Param, value, source: str):
    try:
        if p.multiple:
            items = value if isinstance(value, (list, tuple)) else [value]
            out = [p.type(v) for v in items]
        else:
            out = p.type(value) if value is not None else None
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{source}: bad value for {p.name}: {exc}") from None
    if p.choices and out is not None and out not in p.choices:
        raise UsageError(f"{source}: {p.name} must be one of {p.choices}, got {out!r}")
    return out


def _load_config(path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"config file {path} is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a mapping")
    return data


def _norm_keys(d: dict) -> dict:
    return {str(k).replace("-", "_"): v for k, v in d.items()}


def parse_config(argv=None, environ=None) -> dict:
    """Resolve the full parameter set of one invocation.

    Precedence is command-line flag, then the subcommand section of the
    config file, then its top level, then the documented default.
    """
    environ = os.environ if environ is None else environ
    ns = vars(build_parser().parse_args(argv))
    subcommand = ns.pop("subcommand")
    cli = ns
    file_cfg: dict = {}
    if "config" in cli:
        raw = _load_config(cli["config"])
        top = _norm_keys({k: v for k, v in raw.items() if k not in SUBCOMMANDS})
        section = raw.get(subcommand) or {}
        if not isinstance(section, dict):
            raise UsageError(f"config section {subcommand!r} must be a mapping")
        file_cfg = {**top, **_norm_keys(section)}

    params = COMMON + PARAMS[subcommand]
    known = {p.name for p in params} | {"output_dir", "verbose"}
    unknown = sorted(set(file_cfg) - known)
    if unknown:
        raise UsageError(f"unknown config key(s) for {subcommand}: {', '.join(unknown)}")

    cfg: dict = {"subcommand": subcommand}
    for p in params:
        if p.name in cli:
            cfg[p.name] = cli[p.name]
        elif p.name in file_cfg:
            cfg[p.name] = _coerce(p, file_cfg[p.name], "config file")
        else:
            cfg[p.name] = list(p.default) if isinstance(p.default, list) else p.default
    lo, hi, count = LAMBDA_DEFAULTS[subcommand]
    for key, default in (("lambda_lo", lo), ("lambda_hi", hi), ("lambda_count", count)):
        if cfg[key] is None:
            cfg[key] = default
    out = cli.get("output_dir", file_cfg.get("output_dir")) or environ.get(OUTPUT_ENV) or "runs"
    cfg["output_dir"] = str(out)
    cfg["verbose"] = bool(cli.get("verbose", file_cfg.get("verbose", False)))
    validate(cfg)
    return cfg


def _require(cond: bool, module: str, message: str):
    if not cond:
        raise UsageError(f"[{module}] {message}")


def validate(cfg: dict) -> None:
    """Check every parameter against its module's preconditions."""
    sub = cfg["subcommand"]
    _require(cfg["lambda_lo"] > 0, "hyperparam_selection", "lambda grid needs lambda-lo > 0")
    _require(cfg["lambda_lo"] < cfg["lambda_hi"], "hyperparam_selection",
             f"lambda grid needs lo < hi, got lo={cfg['lambda_lo']} >= hi={cfg['lambda_hi']}")
    _require(cfg["lambda_count"] >= 3, "hyperparam_selection", "lambda grid needs at least 3 points")
    _require(cfg["jobs"] >= 1, "cli_runner", "jobs must be >= 1")
    _require(cfg["master_seed"] >= 0, "cli_runner", "master seed must be non-negative")
    if cfg["run_name"] is not None:
        _require(bool(cfg["run_name"]) and "/" not in cfg["run_name"] and cfg["run_name"] not in (".", ".."),
                 "cli_runner", "run name must be a plain directory name")

    if "family" in cfg:
        try:
            fam = normalize_family(cfg["family"])
        except ValueError as exc:
            raise UsageError(f"[spectrum_models] {exc}") from None
        _require(fam in (EXPONENTIAL, POLYNOMIAL), "spectrum_models",
                 "family must be exponential or polynomial")
        _require(cfg["theta"] > (0 if fam == EXPONENTIAL else 1), "spectrum_models",
                 "theta must be > 0 (exponential) or > 1 (polynomial)")
        _require(cfg["N"] >= 1, "spectrum_models", "N must be >= 1")
        _require(0 < cfg["p_lo"] <= cfg["p_hi"], "spectrum_models", "perturbation bounds need 0 < p-lo <= p-hi")
        if cfg["N"] > 1:
            max_ratio = math.exp(cfg["theta"]) if fam == EXPONENTIAL else (cfg["N"] / (cfg["N"] - 1)) ** cfg["theta"]
            _require(cfg["p_hi"] / cfg["p_lo"] <= max_ratio * (1 + 1e-12), "spectrum_models",
                     f"p-hi/p-lo must not exceed {max_ratio:.6g} or eigenvalues may lose their order")
        beta = 1.0 if fam == EXPONENTIAL else 1.0 / cfg["theta"] + 1.0
        rs = cfg["r"] if isinstance(cfg["r"], list) else [cfg["r"]]
        for r in rs:
            if r is not None:
                _require(r > (beta - 1) / 2, "spectrum_models",
                         f"smoothness r={r} must exceed (beta-1)/2={(beta - 1) / 2:.6g}")

    if sub == "spectrum":
        _require(0 < cfg["coef_lo"] <= cfg["coef_hi"], "spectrum_models",
                 "coefficient bounds need 0 < coef-lo <= coef-hi")
    if sub in ("oracle-rates", "fredholm"):
        ss = cfg["s"]
        _require(len(ss) > 0 and min(ss) >= 0, "spectral_estimators", "penalty orders s must be >= 0")
        _require(0 < cfg["sigma_lo"] < cfg["sigma_hi"], "rate_experiments", "sigma range needs 0 < lo < hi")
        _require(cfg["sigma_count"] >= 3, "rate_experiments", "rate fits need at least 3 noise levels")
    if sub == "oracle-rates":
        _require(len(cfg["r"]) > 0, "rate_experiments", "at least one r is required")
    if sub == "fredholm":
        _require(cfg["M"] >= 2, "fredholm_testbed", "M must be >= 2")
        _require(0 < cfg["tau"] < 1, "fredholm_testbed", "rank threshold tau must lie in (0, 1)")
        _require(cfg["export_modes"] >= 0, "fredholm_testbed", "export-modes must be >= 0")
        _require(cfg["beta"] >= 1, "rate_experiments", "beta must be >= 1")
        _require(cfg["r"] > (cfg["beta"] - 1) / 2, "spectrum_models",
                 f"smoothness r={cfg['r']} must exceed (beta-1)/2")
        bad = sorted(set(cfg["methods"]) - {ORACLE, LCURVE, GCV})
        _require(not bad, "hyperparam_selection", f"unknown selector(s): {', '.join(bad)}")
        _require(cfg["replicates"] >= 1, "rate_experiments", "replicates must be >= 1")
        _require(0 <= cfg["trace_replicate"] < cfg["replicates"], "cli_runner",
                 "trace-replicate must index an existing replicate")
    if sub == "series-check":
        _require(cfg["s"] >= 0, "asymptotic_series", "s must be >= 0")
        _require(cfg["lambda_hi"] < 1, "asymptotic_series", "series lambda grid must lie in (0, 1)")
        _require(math.log10(cfg["lambda_hi"] / cfg["lambda_lo"]) >= 3, "asymptotic_series",
                 "series lambda grid must span at least three decades")
    if sub == "finite-rank":
        _require(cfg["K"] >= 1, "spectral_estimators", "K must be >= 1")
        _require(cfg["eps_norm"] >= 0, "spectral_estimators", "eps-norm must be >= 0")
        _require(cfg["phi_norm"] > 0, "spectral_estimators", "phi-norm must be > 0")
        _require(cfg["theta"] > 0, "spectral_estimators", "theta must be > 0")
        _require(cfg["s"] >= 0, "spectral_estimators", "s must be >= 0")
        _require(all(x > 0 for x in cfg["sigma"]), "spectral_estimators", "noise levels must be > 0")
    if sub == "rate-fit":
        _require(cfg["input"] is not None, "rate_experiments", "--input is required")
        for w in cfg["where"]:
            _require("=" in w, "cli_runner", f"filter {w!r} must look like column=value")
        _require(cfg["tol"] > 0, "rate_experiments", "tol must be > 0")


# ---------------------------------------------------------------- drivers


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class Outcome:
    """Everything a subcommand produces, written out by a single writer."""

    tables: dict  # file name -> (header, rows)
    checks: list
    notes: list
    spectra: dict  # file name -> (spectrum, true_function)


def _grid(cfg) -> LambdaGrid:
    return LambdaGrid(cfg["lambda_lo"], cfg["lambda_hi"], cfg["lambda_count"])


def _spectrum_and_truth(cfg, r, coef_bounds=(1.0, 1.0), null=(), signs=None):
    seed = cfg["master_seed"]
    spec = build_spectrum(cfg["family"], cfg["theta"], cfg["N"], (cfg["p_lo"], cfg["p_hi"]),
                          seed=ex.derive_seed(seed, "spectrum"))
    tf = None
    if r is not None:
        tf = build_true_function(spec, r, coef_bounds, seed=ex.derive_seed(seed, "truth", r),
                                 null_components=null, signs=signs)
    return spec, tf


def run_spectrum(cfg) -> Outcome:
    spec, tf = _spectrum_and_truth(cfg, cfg["r"], (cfg["coef_lo"], cfg["coef_hi"]), cfg["null"])
    notes = [f"modes: {spec.N}", f"beta: {beta_of(spec)!r}"]
    if tf is not None:
        notes.append(f"||phi*||^2 on identifiable modes: {float(np.sum(tf.coefficients**2))!r}")
        notes.append(f"null-space energy: {tf.null_energy!r}")
    checks = [Check("eigenvalues positive and non-increasing",
                    bool(np.all(spec.eigenvalues > 0) and np.all(np.diff(spec.eigenvalues) <= 0)),
                    f"min {float(spec.eigenvalues.min())!r}")]
    return Outcome({}, checks, notes, {"spectrum.csv": (spec, tf)})


def run_oracle_rates(cfg) -> Outcome:
    config = ex.OracleRateConfig(
        family=cfg["family"], theta=cfg["theta"], N=cfg["N"],
        perturbation_bounds=(cfg["p_lo"], cfg["p_hi"]),
        r_values=tuple(cfg["r"]), s_values=tuple(cfg["s"]),
        sigma_lo=cfg["sigma_lo"], sigma_hi=cfg["sigma_hi"], sigma_count=cfg["sigma_count"],
        lambda_lo=cfg["lambda_lo"], lambda_hi=cfg["lambda_hi"], lambda_count=cfg["lambda_count"],
        master_seed=cfg["master_seed"],
    )
    rows = ex.run_oracle_rate_experiment(config)
    sigmas = config.sigmas
    rates, curves, checks, notes = [], [], [], []
    for w in rows:
        rates.append((w.r, w.s, w.lambda_rate_fit, w.lambda_rate_theory, w.err_rate_fit,
                      w.err_rate_theory, w.r2, w.n_points))
        for j, sg in enumerate(sigmas):
            curves.append((w.r, w.s, sg, w.lambda_star[j], w.error_star[j], j in w.excluded))
        if w.excluded:
            notes.append(f"r={w.r!r} s={w.s!r}: excluded sigma indices {sorted(w.excluded)} "
                         f"({'; '.join(sorted(set(w.excluded.values())))})")
        if w.err_rate_theory is None:
            notes.append(f"r={w.r!r} s={w.s!r}: threshold regime, no theoretical rate")
            continue
        for label, fit, theory in (("error", w.err_rate_fit, w.err_rate_theory),
                                   ("lambda", w.lambda_rate_fit, w.lambda_rate_theory)):
            dev = abs(fit - theory)
            checks.append(Check(f"{label} rate r={w.r!r} s={w.s!r}", dev <= cfg["tol"],
                                f"fit {fit:.4f} theory {theory:.4f} |diff| {dev:.4f} ({w.regime})"))
    tables = {
        "oracle_rates.csv": (["r", "s", "lambda_rate_fit", "lambda_rate_theory", "err_rate_fit",
                              "err_rate_theory", "r2", "n_points"], rates),
        "oracle_curves.csv": (["r", "s", "sigma", "lambda_star", "error", "excluded"], curves),
    }
    return Outcome(tables, checks, notes, {})


def _practical_config(cfg) -> ex.PracticalConfig:
    return ex.PracticalConfig(
        M=cfg["M"], tau=cfg["tau"], rule=cfg["rule"], r=cfg["r"], beta=cfg["beta"],
        s_values=tuple(cfg["s"]), sigma_lo=cfg["sigma_lo"], sigma_hi=cfg["sigma_hi"],
        sigma_count=cfg["sigma_count"], methods=tuple(cfg["methods"]), replicates=cfg["replicates"],
        lambda_lo=cfg["lambda_lo"], lambda_hi=cfg["lambda_hi"], lambda_count=cfg["lambda_count"],
        master_seed=cfg["master_seed"], jobs=cfg["jobs"], noise_scaling=cfg["noise_scaling"],
    )


def _traces(cfg, config: ex.PracticalConfig, spec, tf):
    """L-curve and GCV curves of one replicate, for every (s, sigma)."""
    from .estimators import observe, sample_noise

    grid = _grid(cfg)
    pts = grid.points
    scale = ex.noise_scale(config, spec, tf)
    rows = []
    k = cfg["trace_replicate"]
    for j, nominal in enumerate(config.sigmas):
        noise = sample_noise(nominal * scale, spec.N, ex.derive_seed(config.master_seed, "noise", k, j))
        obs = observe(spec, tf, noise)
        for s in config.s_values:
            resid, sol = lcurve_points(spec, obs, s, pts)
            if LCURVE in config.methods:
                try:
                    crit = lcurve_lambda(spec, obs, s, grid).criterion_values
                except Exception:  # degenerate curve: record residuals only
                    crit = np.full(pts.shape, np.nan)
                for i, L in enumerate(pts):
                    if np.isfinite(crit[i]):
                        rows.append((s, nominal, LCURVE, L, crit[i], resid[i], sol[i]))
            if GCV in config.methods:
                G, _ = gcv_function(spec, obs, s, pts)
                for i, L in enumerate(pts):
                    if np.isfinite(G[i]):
                        rows.append((s, nominal, GCV, L, G[i], resid[i], sol[i]))
    return rows


def run_fredholm(cfg) -> Outcome:
    problem = build_problem(cfg["M"], cfg["tau"], cfg["rule"])
    meta = problem.metadata()
    notes = [f"{k}: {meta[k]!r}" for k in sorted(meta)]
    n_exp = min(cfg["export_modes"], problem.rank_cutoff)
    x = problem.mesh.points
    vec_rows = [(x[m],) + tuple(problem.eigenvectors[m, :n_exp]) for m in range(problem.mesh.M)]
    tables = {"eigenvectors.csv": (["x"] + [f"psi_{i + 1}" for i in range(n_exp)], vec_rows)}
    gram = problem.eigenvectors.T @ (problem.mesh.weights[:, None] * problem.eigenvectors)
    defect = float(np.max(np.abs(gram - np.eye(problem.rank_cutoff))))
    checks = [Check("eigenvector orthonormality defect < 1e-8", defect < 1e-8, f"defect {defect:.3e}")]
    spectra = {"spectrum.csv": (problem.spectrum, None)}

    if cfg["practical"]:
        config = _practical_config(cfg)
        _, spec, tf = ex._practical_setup(config)
        spectra["spectrum.csv"] = (spec, tf)
        rows = ex.run_practical_experiment(config)
        failures = [w for w in rows if w.failure]
        for w in failures:
            notes.append(f"selector failure s={w.s!r} sigma={w.sigma!r} {w.method} "
                         f"replicate {w.replicate}: {w.failure}")
        tables["practical.csv"] = (["s", "sigma", "method", "replicate", "lambda", "error"],
                                   [(w.s, w.sigma, w.method, w.replicate, w.lam, w.error)
                                    for w in rows if not w.failure])
        tables["traces.csv"] = (["s", "sigma", "method", "lambda", "criterion", "residual",
                                 "solution_norm"], _traces(cfg, config, spec, tf))
        notes.append(f"noise scaling: {config.noise_scaling} "
                     f"(factor {ex.noise_scale(config, spec, tf)!r})")
        checks += _practical_checks(ex.summarize_practical(rows, config), config, cfg["ratio_limit"])
    return Outcome(tables, checks, notes, spectra)


def _practical_checks(summary, config, ratio_limit) -> list:
    checks = []
    sv = set(config.s_values)
    ms = set(config.methods)
    if 1.0 in sv and {LCURVE, ORACLE} <= ms:
        ratio = summary.median_ratio[1.0]
        checks.append(Check(f"s=1 median L-curve/oracle error <= {ratio_limit:g} at every sigma",
                            bool(np.all(ratio <= ratio_limit)), f"max median ratio {np.nanmax(ratio):.3f}"))
    if {1.0, 2.0} <= sv and LCURVE in ms:
        a, b = summary.lambda_spread[(2.0, LCURVE)], summary.lambda_spread[(1.0, LCURVE)]
        checks.append(Check("s=2 L-curve lambda spread exceeds s=1 spread", a > b,
                            f"log10 spread s=2 {a:.3f} vs s=1 {b:.3f}"))
    if 0.0 in sv and {LCURVE, ORACLE} <= ms:
        lc, orc = summary.median_lambda[(0.0, LCURVE)], summary.median_lambda[(0.0, ORACLE)]
        checks.append(Check("s=0 median L-curve lambda <= oracle lambda at every sigma",
                            bool(np.all(lc <= orc)),
                            f"max log10(L-curve/oracle) {np.nanmax(np.log10(lc / orc)):.3f}"))
    return checks


def run_series_check(cfg) -> Outcome:
    spec, tf = _spectrum_and_truth(cfg, cfg["r"], signs=np.ones(cfg["N"]))
    lam = np.logspace(math.log10(cfg["lambda_lo"]), math.log10(cfg["lambda_hi"]), cfg["lambda_count"])
    terms = dominating_terms(spec, tf, cfg["s"], lam)
    pa = terms.estimates["A"].asymptotic
    pb = terms.estimates["B"].asymptotic
    branch = terms.estimates["B"].branch
    rows = [(lam[i], terms.A[i], terms.A_prime[i], terms.B[i], terms.B1[i],
             None if pa is None else pa[i], None if pb is None else pb[i], branch)
            for i in range(lam.size)]
    report = verify_dominating_order(spec, tf, cfg["s"], lam)
    checks = []
    for name, chk in report.checks.items():
        tol = cfg["tol_a"] if name in ("A", "neg_half_A_prime") else cfg["tol_b"]
        if chk.deviation is None:
            continue
        checks.append(Check(f"{name} log-log slope", chk.deviation <= tol,
                            f"fit {chk.fitted_slope:.4f} predicted {chk.predicted_slope:.4f} tol {tol:g}"))
    notes = [f"regime: {report.regime}"]
    if report.truncation_change is not None:
        notes.append(f"relative change from doubling N: {report.truncation_change:.3e}")
    tables = {"series.csv": (["lambda", "A", "Aprime", "B", "B1", "pred_A", "pred_B", "branch"], rows)}
    return Outcome(tables, checks, notes, {})


def run_finite_rank(cfg) -> Outcome:
    K = cfg["K"]
    ev = np.exp(-cfg["theta"] * np.arange(K))
    c = np.full(K, cfg["phi_norm"] / math.sqrt(K))
    lam = np.logspace(math.log10(cfg["lambda_lo"]), math.log10(cfg["lambda_hi"]), cfg["lambda_count"])
    rep = finite_rank_bias_demo(ev, c, cfg["eps_norm"], cfg["sigma"], s=cfg["s"], lambda_grid=lam)
    rows = [(rep.sigmas[i], rep.l2_min_error[i], rep.l2_argmin[i], rep.l2_lower_bound,
             rep.hs_min_error[i], rep.hs_error_at_sigma[i], rep.hs_upper_bound[i])
            for i in range(rep.sigmas.size)]
    floor = cfg["l2_floor"]
    checks = [
        Check(f"L2 minimal error >= {floor:g} at every sigma", bool(np.all(rep.l2_min_error >= floor)),
              f"smallest {rep.l2_min_error.min():.6f}"),
        Check("H^s error at lambda=sigma within its upper bound", bool(np.all(rep.hs_bound_holds)),
              f"largest ratio {np.max(rep.hs_error_at_sigma / rep.hs_upper_bound):.4f}"),
    ]
    notes = [f"2 sqrt(K)/lambda_K ||phi*|| ||eps||: {rep.l2_lower_bound!r}",
             f"noiseless limit of the minimal L2 error: {rep.l2_noiseless_floor!r}"]
    tables = {"finite_rank.csv": (["sigma", "l2_min_error", "l2_argmin", "l2_lower_bound", "hs_min_error",
                                   "hs_error_at_sigma", "hs_upper_bound"], rows)}
    return Outcome(tables, checks, notes, {})


def run_rate_fit(cfg) -> Outcome:
    path = Path(cfg["input"])
    if not path.is_file():
        raise FileNotFoundError(f"input CSV {path} not found")
    cols = io.read_csv_columns(path)
    for key in (cfg["x_column"], cfg["y_column"]):
        if key not in cols:
            raise ValueError(f"column {key!r} not in {path.name} (have {', '.join(cols)})")
    n = len(cols[cfg["x_column"]])
    keep = np.ones(n, dtype=bool)
    for w in cfg["where"]:
        col, val = w.split("=", 1)
        if col not in cols:
            raise ValueError(f"filter column {col!r} not in {path.name}")
        vals = cols[col]
        try:
            keep &= np.isclose(np.array(vals, dtype=float), float(val), rtol=1e-12, atol=0)
        except ValueError:
            keep &= np.array([v == val for v in vals])
    x = np.array(cols[cfg["x_column"]], dtype=float)[keep]
    y = np.array(cols[cfg["y_column"]], dtype=float)[keep]
    fit = ex.fit_rate(x, y)
    rows = [(fit.slope, fit.intercept, fit.r_squared, fit.points_used)]
    checks = []
    if cfg["expect_slope"] is not None:
        dev = abs(fit.slope - cfg["expect_slope"])
        checks.append(Check(f"slope within {cfg['tol']:g} of {cfg['expect_slope']:g}", dev <= cfg["tol"],
                            f"fit {fit.slope:.4f} |diff| {dev:.4f}"))
    tables = {"rate_fit.csv": (["slope", "intercept", "r2", "points_used"], rows)}
    return Outcome(tables, checks, [f"input: {path.name}", f"rows used: {fit.points_used}"], {})


DRIVERS = {
    "spectrum": run_spectrum,
    "oracle-rates": run_oracle_rates,
    "fredholm": run_fredholm,
    "series-check": run_series_check,
    "finite-rank": run_finite_rank,
    "rate-fit": run_rate_fit,
}


# ---------------------------------------------------------------- output


def resolved_view(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if k != "verbose"}


def _run_dir(cfg: dict) -> Path:
    root = Path(cfg["output_dir"]) / cfg["subcommand"]
    name = cfg["run_name"] or _dt.datetime.now().strftime("%Y%m%dT%H%M%S")
    path = root / name
    if cfg["run_name"] is None:
        k = 1
        while path.exists():
            path = root / f"{name}-{k}"
            k += 1
    return path


def write_outcome(cfg: dict, outcome: Outcome, argv) -> Path:
    """Write every artifact; formatting happens first so a non-finite value
    aborts before the run directory is touched."""
    for fname, (header, rows) in outcome.tables.items():
        for k, row in enumerate(rows):
            for v in row:
                io.format_value(v, f"{fname} row {k}")
    run_dir = _run_dir(cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    for fname, (header, rows) in outcome.tables.items():
        io.write_csv(run_dir / fname, header, rows)
    for fname, (spec, tf) in outcome.spectra.items():
        io.write_spectrum_csv(run_dir / fname, spec, tf)
    io.write_yaml(run_dir / "config_resolved.yaml", resolved_view(cfg))

    lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}" for c in outcome.checks]
    n_fail = sum(not c.passed for c in outcome.checks)
    lines.append(f"{len(outcome.checks) - n_fail}/{len(outcome.checks)} checks passed")
    if outcome.notes:
        lines += [""] + [f"note: {n}" for n in outcome.notes]
    (run_dir / "summary.txt").write_text("\n".join(lines) + "\n")

    failures = [{"check": c.name, "detail": c.detail} for c in outcome.checks if not c.passed]
    if failures:
        io.write_json(run_dir / "failures.json", failures)
    io.write_json(run_dir / "metadata.json", {
        "created": _dt.datetime.now().isoformat(timespec="seconds"),
        "argv": list(argv),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    })
    return run_dir


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        print(f"fracsobolev: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if cfg["verbose"] else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    sub = cfg["subcommand"]
    try:
        outcome = DRIVERS[sub](cfg)
        run_dir = write_outcome(cfg, outcome, argv)
    except (ValueError, RuntimeError, ArithmeticError, OSError) as exc:
        print(f"fracsobolev: {sub} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    failed = [c for c in outcome.checks if not c.passed]
    log.info("%s: %d/%d checks passed, artifacts in %s", sub, len(outcome.checks) - len(failed),
             len(outcome.checks), run_dir)
    for c in failed:
        log.warning("FAIL %s: %s", c.name, c.detail)
    return EXIT_CHECK if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
