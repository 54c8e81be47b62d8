"""Command line driver: ``isospec run <config>`` and ``isospec sweep <config>``.

The config is a JSON object. Recognized keys::

    experiment      framework_random | d1_cauchy | d1_antiperiodic | laplace2d
    n / n_list      grid size (run) or ascending sizes (sweep)
    seed            unsigned int, numpy PCG64 seed for framework_random
    sigma           "affine(1,-1)" or {"family": "affine", "params": [1, -1]}
    omega           {"kind": "constant"|"re_power"|"im_power", "degree": p, "amplitude": a}
    zeros           [[re, im, multiplicity], ...]
    kernel_source   explicit | poisson_logF
    kernel_scale    multiplies g (default 1)
    tolerances      {"match_tol": ..., "transfer_tol": ...}
    output          {"directory": ..., "format": "csv"|"json"}
    scheme          left_rectangle | trapezoid (1D only)
    modes           eigenvectors used by the transfer check (default 20)
    rank            rank of K for framework_random (default 1)

Exit codes: 0 all checks passed, 1 a check failed, 2 invalid input.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from . import laplace2d as l2
from . import volterra1d as v1
from .framework import (
    InadmissibleModelError,
    MatchedPair,
    eigvec_transfer_check,
    identity_suite,
    make_perturbed,
    random_model,
    riesz_diagnostic,
    spectra_match,
)
from .numcore import TOL, norm2

log = logging.getLogger("isospec")

EXPERIMENTS = ("framework_random", "d1_cauchy", "d1_antiperiodic", "laplace2d")
FORMATS = ("csv", "json")
TOP_KEYS = {
    "experiment", "n", "n_list", "seed", "sigma", "omega", "zeros", "kernel_source",
    "kernel_scale", "tolerances", "output", "scheme", "modes", "rank",
}
REPORT_COLUMNS = (
    "index", "lambda_ref_re", "lambda_ref_im", "lambda_pert_re", "lambda_pert_im",
    "abs_diff", "vec_residual",
)
CONVERGENCE_COLUMNS = ("n", "max_abs_diff", "riesz_condition", "greens_discrepancy", "verdict")
DEFAULT_SIGMA = {"d1_cauchy": "affine(1,-1)", "d1_antiperiodic": "cos(1,0.25)"}
DEFAULT_SCHEME = {"d1_cauchy": "left_rectangle", "d1_antiperiodic": "trapezoid"}
MIN_N = {"framework_random": 2, "d1_cauchy": 4, "d1_antiperiodic": 4, "laplace2d": 2}
DENSE_LIMIT_2D = 40  # largest n for which laplace2d assembles n^2 x n^2 matrices
RIESZ_RATIO = 1.2
ANTIPERIODIC_RATIO = 0.3  # O(h^2): error should drop ~4x per doubling
REFERENCE_REL_TOL = 5e-3

EXIT_PASS, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key '{key}': {message}")


class InputRefused(ValueError):
    """Valid config whose model is refused (admissibility, zero placement)."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n: Optional[int] = None
    n_list: tuple[int, ...] = ()
    seed: int = 0
    sigma: Optional[str] = None
    omega: dict = field(default_factory=lambda: {"kind": "constant", "degree": 1, "amplitude": 1.0})
    zeros: tuple[tuple[float, float, int], ...] = ()
    kernel_source: str = "poisson_logF"
    kernel_scale: float = 1.0
    match_tol: Optional[float] = None
    transfer_tol: Optional[float] = None
    directory: str = "isospec_out"
    format: str = "csv"
    scheme: Optional[str] = None
    modes: int = 20
    rank: int = 1


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _size(key: str, v, experiment: str) -> int:
    lo = MIN_N[experiment]
    if not _is_int(v) or v < lo:
        raise ConfigError(key, f"must be an integer >= {lo}, got {v!r}")
    return v


def _sigma(raw) -> str:
    if isinstance(raw, str):
        text = raw
    elif isinstance(raw, dict):
        extra = set(raw) - {"family", "params"}
        if extra:
            raise ConfigError(f"sigma.{sorted(extra)[0]}", "unknown key")
        fam = raw.get("family")
        params = raw.get("params", [])
        if not isinstance(fam, str):
            raise ConfigError("sigma.family", "must be a string")
        if not isinstance(params, list) or not all(_is_num(p) for p in params):
            raise ConfigError("sigma.params", "must be a list of finite numbers")
        text = f"{fam}({','.join(repr(float(p)) for p in params)})" if params else fam
    else:
        raise ConfigError("sigma", "must be a string like 'affine(1,-1)' or an object")
    try:
        # validates name and arity on a throwaway grid
        v1.sigma_family(v1.Grid1D(4), text)
    except ValueError as exc:
        raise ConfigError("sigma", str(exc)) from None
    return text


def _omega(raw) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("omega", "must be an object with 'kind' (and 'degree')")
    extra = set(raw) - {"kind", "degree", "amplitude"}
    if extra:
        raise ConfigError(f"omega.{sorted(extra)[0]}", "unknown key")
    out = {"kind": raw.get("kind", "constant"), "degree": raw.get("degree", 1), "amplitude": raw.get("amplitude", 1.0)}
    if out["kind"] not in l2.OMEGA_KINDS:
        raise ConfigError("omega.kind", f"must be one of {l2.OMEGA_KINDS}, got {out['kind']!r}")
    if not _is_int(out["degree"]) or out["degree"] < 1:
        raise ConfigError("omega.degree", f"must be an integer >= 1, got {out['degree']!r}")
    if not _is_num(out["amplitude"]) or out["amplitude"] == 0:
        raise ConfigError("omega.amplitude", f"must be a nonzero finite number, got {out['amplitude']!r}")
    return out


def _zeros(raw) -> tuple:
    if not isinstance(raw, list):
        raise ConfigError("zeros", "must be a list of [re, im, multiplicity] triples")
    out = []
    for i, item in enumerate(raw):
        key = f"zeros[{i}]"
        if not isinstance(item, list) or len(item) != 3:
            raise ConfigError(key, "must be a [re, im, multiplicity] triple")
        re_, im_, m = item
        if not (_is_num(re_) and _is_num(im_)):
            raise ConfigError(key, "coordinates must be finite numbers")
        if not (0 < re_ < 1 and 0 < im_ < 1):
            raise ConfigError(key, f"({re_}, {im_}) is not inside the unit square")
        if not _is_int(m) or m < 1:
            raise ConfigError(key, f"multiplicity must be a positive integer, got {m!r}")
        out.append((float(re_), float(im_), int(m)))
    return tuple(out)


def _tolerances(raw) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("tolerances", "must be an object")
    out = {}
    for key, v in raw.items():
        if key not in ("match_tol", "transfer_tol"):
            raise ConfigError(f"tolerances.{key}", "unknown key")
        if not _is_num(v) or v <= 0:
            raise ConfigError(f"tolerances.{key}", f"must be a positive number, got {v!r}")
        out[key] = float(v)
    return out


def _output(raw) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("output", "must be an object with 'directory' and 'format'")
    extra = set(raw) - {"directory", "format"}
    if extra:
        raise ConfigError(f"output.{sorted(extra)[0]}", "unknown key")
    out = {}
    if "directory" in raw:
        if not isinstance(raw["directory"], str) or not raw["directory"]:
            raise ConfigError("output.directory", "must be a non-empty string")
        out["directory"] = raw["directory"]
    if "format" in raw:
        if raw["format"] not in FORMATS:
            raise ConfigError("output.format", f"must be one of {FORMATS}, got {raw['format']!r}")
        out["format"] = raw["format"]
    return out


def parse_config(raw: Any, verb: str = "run") -> ExperimentConfig:
    """Validate a decoded config object; raises :class:`ConfigError`."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    for key in raw:
        if key not in TOP_KEYS:
            raise ConfigError(key, "unknown key")
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {EXPERIMENTS}, got {exp!r}")
    kw: dict[str, Any] = {"experiment": exp}

    if "n" in raw and "n_list" in raw:
        raise ConfigError("n_list", "give either 'n' or 'n_list', not both")
    if verb == "sweep":
        if "n_list" not in raw:
            raise ConfigError("n_list", "sweep needs an ascending list of at least two sizes")
        nl = raw["n_list"]
        if not isinstance(nl, list) or len(nl) < 2:
            raise ConfigError("n_list", f"must list at least two sizes, got {nl!r}")
        sizes = tuple(_size("n_list", v, exp) for v in nl)
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigError("n_list", f"must be strictly ascending, got {list(sizes)}")
        kw["n_list"] = sizes
    else:
        if "n" not in raw:
            raise ConfigError("n", "run needs a grid size 'n'")
        kw["n"] = _size("n", raw["n"], exp)

    if "seed" in raw:
        if not _is_int(raw["seed"]) or raw["seed"] < 0:
            raise ConfigError("seed", f"must be an unsigned integer, got {raw['seed']!r}")
        kw["seed"] = raw["seed"]
    if exp.startswith("d1_"):
        kw["sigma"] = _sigma(raw.get("sigma", DEFAULT_SIGMA[exp]))
        scheme = raw.get("scheme", DEFAULT_SCHEME[exp])
        if scheme not in v1.SCHEMES:
            raise ConfigError("scheme", f"must be one of {v1.SCHEMES}, got {scheme!r}")
        kw["scheme"] = scheme
    elif "sigma" in raw:
        _sigma(raw["sigma"])
    if "scheme" in raw and not exp.startswith("d1_"):
        raise ConfigError("scheme", "only applies to the 1D experiments")
    if "omega" in raw:
        kw["omega"] = _omega(raw["omega"])
    if "zeros" in raw:
        kw["zeros"] = _zeros(raw["zeros"])
    if "kernel_source" in raw:
        if raw["kernel_source"] not in l2.KERNEL_SOURCES:
            raise ConfigError("kernel_source", f"must be one of {l2.KERNEL_SOURCES}, got {raw['kernel_source']!r}")
        kw["kernel_source"] = raw["kernel_source"]
    if "kernel_scale" in raw:
        if not _is_num(raw["kernel_scale"]):
            raise ConfigError("kernel_scale", f"must be a finite number, got {raw['kernel_scale']!r}")
        kw["kernel_scale"] = float(raw["kernel_scale"])
    if "tolerances" in raw:
        kw.update(_tolerances(raw["tolerances"]))
    if "output" in raw:
        kw.update(_output(raw["output"]))
    for key in ("modes", "rank"):
        if key in raw:
            if not _is_int(raw[key]) or raw[key] < 1:
                raise ConfigError(key, f"must be a positive integer, got {raw[key]!r}")
            kw[key] = raw[key]
    return ExperimentConfig(**kw)


def load_config(path: str | os.PathLike, verb: str = "run") -> tuple[ExperimentConfig, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    return parse_config(raw, verb), raw


# -- pipelines -------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    value: Any = None
    threshold: Any = None


@dataclass
class Outcome:
    n: int
    pairs: list[MatchedPair] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)
    max_abs_diff: float = math.nan
    riesz_condition: float = math.nan
    greens_discrepancy: float = math.nan
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name, passed, value=None, threshold=None):
        self.checks.append(Check(name, bool(passed), _jsonable(value), _jsonable(threshold)))


class Stages:
    def __init__(self):
        self.records: list[dict] = []

    @contextmanager
    def __call__(self, name: str):
        t0 = time.perf_counter()
        log.info("stage %s", name)
        try:
            yield
        finally:
            self.records.append({"stage": name, "seconds": time.perf_counter() - t0})


def _run_framework_random(cfg: ExperimentConfig, n: int, stage: Stages) -> Outcome:
    out = Outcome(n)
    with stage(f"model n={n}"):
        rng = np.random.default_rng(cfg.seed)
        model = random_model(rng, n, rank=min(cfg.rank, n))
        pair = make_perturbed(model)
    with stage(f"spectra n={n}"):
        tol = (cfg.match_tol or TOL.match_tol) * norm2(pair.reference_l)
        rep = spectra_match(pair.reference_l, pair.bk, tol)
        out.pairs, out.max_abs_diff = rep.pairs, rep.max_abs_diff
        out.check("spectra_match", rep.passed, rep.max_abs_diff, tol)
    with stage(f"identities n={n}"):
        for ic in identity_suite(model):
            out.check(f"identity: {ic.name}", ic.passed, ic.residual, TOL.identity_tol * ic.scale)
    with stage(f"transfer n={n}"):
        tr = eigvec_transfer_check(pair, cfg.modes, cfg.transfer_tol)
        worst = max((p.vec_residual for p in tr.pairs), default=0.0)
        out.check("eigvec_transfer", tr.passed, worst, tr.notes["transfer_tol"])
    with stage(f"riesz n={n}"):
        out.riesz_condition = riesz_diagnostic(pair)
        out.check("riesz_finite", math.isfinite(out.riesz_condition), out.riesz_condition)
    return out


def _sigma_spec(cfg: ExperimentConfig, grid: v1.Grid1D, kind: str) -> v1.SigmaSpec:
    spec = v1.sigma_family(grid, cfg.sigma, kind=kind)
    try:
        spec.check(grid)
    except v1.SigmaAdmissibilityError as exc:
        raise InputRefused(f"sigma {spec.name}: {exc}") from None
    return spec


def _run_d1(cfg: ExperimentConfig, n: int, stage: Stages, kind: str) -> Outcome:
    out = Outcome(n)
    with stage(f"model n={n}"):
        grid = v1.Grid1D(n, cfg.scheme)
        spec = _sigma_spec(cfg, grid, kind)
        try:
            pair = v1.perturbed_pair(grid, spec)
        except InadmissibleModelError as exc:
            raise InputRefused(str(exc)) from None
    out.extra["sigma"] = spec.name
    out.extra["scheme"] = grid.scheme
    if kind == "cauchy" and grid.scheme == "left_rectangle":
        with stage(f"volterra certificate n={n}"):
            cert = v1.volterra_certificate(grid, spec)
            out.pairs, out.max_abs_diff = cert.pairs, cert.max_abs_diff
            out.check("volterra_certificate", cert.passed, cert.notes["spectral_radius"], 1e-10)
            seq = cert.quasinilpotence
            out.check("power_norm_hits_zero_at_n", cert.notes["hits_zero_at_n"], seq[-1])
            out.extra["certificate"] = _jsonable(cert.notes)
    else:
        with stage(f"spectra n={n}"):
            tol = (cfg.match_tol or TOL.match_tol) * norm2(pair.l_inv)
            rep = spectra_match(pair.l_inv, pair.bk_inv, tol)
            out.pairs, out.max_abs_diff = rep.pairs, rep.max_abs_diff
            out.check("spectra_match(bk_inv, l_inv)", rep.passed, rep.max_abs_diff, tol)
    if kind == "antiperiodic":
        with stage(f"reference eigenvalues n={n}"):
            top = v1.top_eigenvalues(pair.l_inv, 4)
            ref = v1.antiperiodic_reference_eigenvalues(4)
            err = max(float(np.min(np.abs(top - r)) / abs(r)) for r in ref)
            out.extra["reference_error"] = err
            out.check("top4_vs_closed_form", err <= REFERENCE_REL_TOL, err, REFERENCE_REL_TOL)
    with stage(f"riesz n={n}"):
        out.riesz_condition = riesz_diagnostic(pair)
    with stage(f"k sampling n={n}"):
        out.extra["k_sampling_defect"] = v1.k_sampling_defect(grid, spec, v1.build_model(grid, spec))
    return out


def _run_laplace(cfg: ExperimentConfig, n: int, stage: Stages) -> Outcome:
    out = Outcome(n)
    with stage(f"model n={n}"):
        grid = l2.RectGrid(n)
        zeros = l2.ZeroSet.from_triples(cfg.zeros)
        omega = l2.HarmonicWeight(**cfg.omega)
        try:
            kernel = l2.default_kernel(grid, zeros, cfg.kernel_source, cfg.kernel_scale)
        except l2.ZeroPlacementError as exc:
            raise InputRefused(str(exc)) from None
        out.extra["poisson_residual"] = l2.poisson_residual(grid, kernel)
        out.extra["omega_harmonic_defect"] = omega.harmonic_defect(grid)
    with stage(f"greens split n={n}"):
        if len(zeros):
            split = l2.greens_split(grid, zeros, l2.sine_mode, l2.sine_mode_laplacian)
            out.greens_discrepancy = split.discrepancy
            out.extra["greens_split"] = split._asdict()
        else:
            out.greens_discrepancy = 0.0
    if n > DENSE_LIMIT_2D:
        out.extra["dense_stages"] = f"skipped: n > {DENSE_LIMIT_2D}"
        return out
    with stage(f"admissibility n={n}"):
        adm = l2.admissibility_2d(grid, omega, kernel)
        out.extra["s_general"] = [adm.s_general.real, adm.s_general.imag]
        out.extra["s_log"] = [adm.s_log.real, adm.s_log.imag]
        out.extra["density_sigma_min"] = adm.density.smallest_singular_value
        if not adm.admissible:
            raise InputRefused(
                f"density condition fails: sigma_min(I + L*K*) = {adm.density.smallest_singular_value:.3e}"
            )
        pair = l2.laplace_pair(grid, omega, kernel)
    with stage(f"spectra n={n}"):
        tol = (cfg.match_tol or TOL.match_tol) * norm2(pair.reference_l)
        rep = spectra_match(pair.reference_l, pair.bk, tol)
        out.pairs, out.max_abs_diff = rep.pairs, rep.max_abs_diff
        out.check("spectra_match(bk, A_D)", rep.passed, rep.max_abs_diff, tol)
        err = l2.closed_form_spectrum_error(grid, pair.bk)
        out.check("closed_form_spectrum", err <= TOL.match_tol, err, TOL.match_tol)
    with stage(f"transfer n={n}"):
        tt = cfg.transfer_tol or TOL.transfer_tol
        modes = min(cfg.modes, grid.size)
        signs = l2.transfer_sign_check(grid, omega, kernel, pair, modes)
        s = l2.resolved_sign(signs)
        out.extra["transfer_sign"] = s
        out.extra["transfer_residuals"] = {str(k): v for k, v in signs.items()}
        out.check("eigvec_transfer", signs[s] <= tt, signs[s], tt)
        fwd = l2.forward_action_check(grid, omega, kernel, pair, np.ones(grid.size))
        s = l2.resolved_sign(fwd)
        out.extra["forward_sign"] = s
        out.extra["forward_residuals"] = {str(k): v for k, v in fwd.items()}
    with stage(f"riesz n={n}"):
        out.riesz_condition = riesz_diagnostic(pair)
        out.check("riesz_finite", math.isfinite(out.riesz_condition), out.riesz_condition)
    return out


def run_pipeline(cfg: ExperimentConfig, n: int, stage: Stages) -> Outcome:
    if cfg.experiment == "framework_random":
        return _run_framework_random(cfg, n, stage)
    if cfg.experiment == "d1_cauchy":
        return _run_d1(cfg, n, stage, "cauchy")
    if cfg.experiment == "d1_antiperiodic":
        return _run_d1(cfg, n, stage, "antiperiodic")
    return _run_laplace(cfg, n, stage)


# -- serialization ---------------------------------------------------------------------


def fmt(x: float) -> str:
    """17 significant digits, lowercase scientific; 'nan'/'inf' spelled out."""
    return format(float(x), ".16e")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, complex):
        return [_jsonable(v.real), _jsonable(v.imag)]
    return v


def report_rows(pairs: list[MatchedPair]) -> list[list[str]]:
    rows = []
    for i, p in enumerate(pairs):
        rows.append([
            str(i),
            fmt(p.lambda_ref.real), fmt(p.lambda_ref.imag),
            fmt(p.lambda_pert.real), fmt(p.lambda_pert.imag),
            fmt(p.abs_diff), fmt(p.vec_residual),
        ])
    return rows


def _json_number(text: str) -> str:
    return text if text not in ("nan", "inf", "-inf") else "null"


def write_table(path: Path, columns, rows: list[list[str]], fmt_: str, numeric=None) -> None:
    """CSV, or JSON with numbers emitted verbatim from their formatted text."""
    numeric = numeric or set(columns)
    if fmt_ == "csv":
        lines = [",".join(columns)] + [",".join(r) for r in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return
    items = []
    for r in rows:
        fields = []
        for c, v in zip(columns, r):
            val = _json_number(v) if c in numeric and v != "" else json.dumps(v)
            fields.append(f"{json.dumps(c)}: {val}")
        items.append("  {" + ", ".join(fields) + "}")
    path.write_text("[\n" + ",\n".join(items) + "\n]\n", encoding="utf-8")


def write_manifest(path: Path, manifest: dict) -> None:
    path.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _outcome_summary(out: Outcome) -> dict:
    return {
        "n": out.n,
        "passed": out.passed,
        "max_abs_diff": out.max_abs_diff,
        "riesz_condition": out.riesz_condition,
        "greens_discrepancy": out.greens_discrepancy,
        "checks": [asdict(c) for c in out.checks],
        "extra": out.extra,
    }


def _trend_rows(cfg: ExperimentConfig, outs: list[Outcome]) -> list[tuple[str, bool, list]]:
    """(name, passed, values) for each refinement trend that applies."""
    trends = []
    g = [o.greens_discrepancy for o in outs]
    if cfg.experiment == "laplace2d" and cfg.zeros and all(math.isfinite(x) for x in g):
        ok = all(b < a for a, b in zip(g, g[1:]))
        trends.append(("greens_discrepancy decreasing", ok, g))
    r = [o.riesz_condition for o in outs]
    # random models change with n and the trapezoid inverse is not normal
    # (eigenbasis condition sqrt(2(n-1)) before any perturbation): no trend
    riesz_trend = cfg.experiment == "laplace2d" or (
        cfg.experiment.startswith("d1_") and cfg.scheme == "left_rectangle"
    )
    if riesz_trend and all(math.isfinite(x) for x in r):
        ratios = [b / a for a, b in zip(r, r[1:])]
        trends.append((f"riesz_condition ratio <= {RIESZ_RATIO}", all(x <= RIESZ_RATIO for x in ratios), ratios))
    if cfg.experiment == "d1_antiperiodic":
        e = [o.extra["reference_error"] for o in outs]
        ratios = [b / a for a, b in zip(e, e[1:])]
        trends.append((f"reference_error ratio <= {ANTIPERIODIC_RATIO}", all(x <= ANTIPERIODIC_RATIO for x in ratios), ratios))
    return trends


# -- entry points ----------------------------------------------------------------------


def _configure_logging() -> None:
    level = os.environ.get("ISOSPEC_LOG", "quiet")
    levels = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        raise ConfigError("ISOSPEC_LOG", f"must be one of {sorted(levels)}, got {level!r}")
    logging.basicConfig(level=levels[level], format="%(levelname)s %(name)s: %(message)s", force=True)


def _execute(verb: str, config_path: str, out_dir: Optional[str]) -> int:
    stage = Stages()
    manifest: dict[str, Any] = {
        "artifact": "isospec",
        "version": __version__,
        "verb": verb,
        "config_path": str(config_path),
        "config": None,
        "stages": stage.records,
        "checks": [],
        "passed": False,
    }
    target: Optional[Path] = Path(out_dir) if out_dir else None

    def finish(code: int, error: Optional[str] = None) -> int:
        manifest["exit_code"] = code
        if error:
            manifest["error"] = error
            print(f"isospec: {error}", file=sys.stderr)
        if target is not None:
            target.mkdir(parents=True, exist_ok=True)
            write_manifest(target / "manifest.json", manifest)
        return code

    try:
        _configure_logging()
        cfg, raw = load_config(config_path, verb)
    except ConfigError as exc:
        return finish(EXIT_INPUT, str(exc))
    manifest["config"] = raw
    target = Path(out_dir) if out_dir else Path(cfg.directory)
    target.mkdir(parents=True, exist_ok=True)
    sizes = cfg.n_list if verb == "sweep" else (cfg.n,)
    outs: list[Outcome] = []
    try:
        for n in sizes:
            out = run_pipeline(cfg, n, stage)
            outs.append(out)
            name = "spectral_report" if verb == "run" else f"spectral_report_n{n}"
            write_table(target / f"{name}.{cfg.format}", REPORT_COLUMNS, report_rows(out.pairs), cfg.format)
    except InputRefused as exc:
        manifest["results"] = [_outcome_summary(o) for o in outs]
        return finish(EXIT_INPUT, f"input refused: {exc}")
    except Exception as exc:  # noqa: BLE001 - the manifest must still be written
        log.exception("pipeline failed")
        manifest["results"] = [_outcome_summary(o) for o in outs]
        return finish(EXIT_FAIL, f"{type(exc).__name__}: {exc}")

    manifest["results"] = [_outcome_summary(o) for o in outs]
    manifest["checks"] = [
        {"n": o.n, **asdict(c)} for o in outs for c in o.checks
    ]
    passed = all(o.passed for o in outs)
    if verb == "sweep":
        rows = [
            [str(o.n), fmt(o.max_abs_diff), fmt(o.riesz_condition), fmt(o.greens_discrepancy),
             "pass" if o.passed else "fail"]
            for o in outs
        ]
        for name, ok, values in _trend_rows(cfg, outs):
            rows.append(["trend", "", "", "", f"{name}: {'pass' if ok else 'fail'}"])
            manifest["checks"].append({"n": None, "name": f"trend: {name}", "passed": ok, "value": values, "threshold": None})
            passed = passed and ok
        write_table(target / f"convergence.{cfg.format}", CONVERGENCE_COLUMNS, rows, cfg.format,
                    numeric={"max_abs_diff", "riesz_condition", "greens_discrepancy"})
    manifest["passed"] = passed
    for c in manifest["checks"]:
        log.info("%s %s", "PASS" if c["passed"] else "FAIL", c["name"])
    return finish(EXIT_PASS if passed else EXIT_FAIL)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isospec", description="Isospectral perturbation experiments.")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, text in (("run", "run one configuration"), ("sweep", "run a refinement sweep over n_list")):
        sp = sub.add_parser(verb, help=text)
        sp.add_argument("config", help="path to a JSON config file")
        sp.add_argument("--out", help="output directory (overrides output.directory)")
    return p


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors already
        return int(exc.code or 0)
    return _execute(args.verb, args.config, args.out)


if __name__ == "__main__":
    sys.exit(main())
