"""Experiment configurations, suites and their on-disk outputs.

A run writes ``results.csv`` (one row per lambda or check), optionally
``profile.csv`` (per-distance or per-pair curves) and ``summary.json``.  CSV
files depend only on the configuration and code version; wall time and the
timestamp appear only in ``summary.json``.
"""

import csv
import io
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from . import embedding, kernels, oracles, spectra
from .errors import DomainError
from .manifolds import FlatTorus, RoundSphere
from .specfun import (
    BesselOrder,
    bessel_j,
    fourier_bessel_sphere_integral,
)
from .spectra import SpectralWindow

EXPERIMENTS = (
    "specfun-check",
    "weyl-remainder",
    "scaling-limit",
    "mehler-heine",
    "embedding-scan",
    "distance-asymptotics",
    "hessian-check",
    "weyl-counting",
)

CACHE_ENV = "WEYL_LAB_CACHE"


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


# Thresholds default to the acceptance criteria.
DEFAULT_THRESHOLDS = {
    "specfun-check": {"fourier_bessel_max_error": 1e-8, "bessel_max_error": 1e-12, "recurrence_max_residual": 1e-9},
    "weyl-remainder": {"max_last_over_first": 0.5, "control_floor": 0.05},
    "scaling-limit": {"max_error": 0.2},
    "mehler-heine": {"max_halving_factor": 0.6, "final_max_error": 0.01},
    "embedding-scan": {"min_dist_sq": 1.0, "near_ratio_low": math.pi / 4, "near_ratio_high": 3 * math.pi / 4},
    "distance-asymptotics": {},
    "hessian-check": {"model_max_rel_error": 0.05, "fd_max_rel_error": 1e-3, "off_diagonal_over_trace": 1e-2},
    "weyl-counting": {"max_normalized_remainder": 4.0, "expected_counts": [[10, 317]]},
}

DEFAULT_PARAMETERS = {
    "specfun-check": {},
    "weyl-remainder": {"lambdas": (50.0, 100.0, 200.0, 400.0)},
    "scaling-limit": {"lambdas": (50.0, 200.0)},
    "mehler-heine": {"manifold": {"kind": "sphere", "dimension": 2}, "degrees": (50, 100, 200, 400), "samples": 401},
    "embedding-scan": {"lambdas": (40.0, 60.0, 100.0)},
    "distance-asymptotics": {"lambdas": (50.0, 100.0, 200.0), "pair_count": 4096},
    "hessian-check": {"lambdas": (200.0,)},
    "weyl-counting": {},
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    manifold: dict = field(default_factory=lambda: {"kind": "torus", "dimension": 2})
    lambdas: tuple = ()
    degrees: tuple = ()
    delta: float = 1.0
    ball_exponent: float = 0.5
    off_spectrum: bool = True
    base_point: tuple = None
    min_offsets: int = 9
    resolution: float = 0.25
    refine_rtol: float = 0.02
    max_doublings: int = 4
    samples: int = 201
    max_scaled_dist: float = 10.0
    direction: tuple = None
    pair_count: int = 10000
    near_pairs: int = 1000
    separation: float = 0.1
    scaled_range: tuple = (0.5, 50.0)
    lambda_max: int = 500
    dimensions: tuple = (2, 3, 4, 5)
    r_count: int = 200
    r_max: float = 40.0
    bessel_orders: tuple = (0.0, 0.5, 1.0, 1.5, 2.0)
    x_count: int = 101
    x_max: float = 50.0
    seed: int = 0
    threads: int = 1
    out_dir: str = "weyl-lab-out"
    cache_dir: str = None
    profile: bool = True
    thresholds: dict = field(default_factory=dict)

    def echo(self):
        out = asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in out.items()}


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_FLOAT_LISTS = {"lambdas", "base_point", "direction", "scaled_range", "bessel_orders"}
_INT_LISTS = {"degrees", "dimensions"}


def _coerce(name, value):
    kind = _FIELD_TYPES[name]
    try:
        if name in _FLOAT_LISTS:
            return None if value is None else tuple(float(v) for v in value)
        if name in _INT_LISTS:
            out = tuple(int(v) for v in value)
            if any(o != v for o, v in zip(out, value)):
                raise ValueError("expected integers")
            return out
        if kind is bool or kind == "bool":
            if not isinstance(value, bool):
                raise ValueError("expected a boolean")
            return value
        if kind is int or kind == "int":
            if isinstance(value, bool) or int(value) != value:
                raise ValueError("expected an integer")
            return int(value)
        if kind is float or kind == "float":
            if isinstance(value, bool):
                raise ValueError("expected a number")
            return float(value)
        if name in ("manifold", "thresholds"):
            if not isinstance(value, dict):
                raise ValueError("expected a table")
            return dict(value)
        return None if value is None else str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, str(exc)) from None


def _strictly_increasing(seq):
    return all(a < b for a, b in zip(seq, seq[1:]))


def validate(config: ExperimentConfig) -> ExperimentConfig:
    if config.experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {config.experiment!r}")
    man = config.manifold
    if man.get("kind") not in ("torus", "sphere"):
        raise ConfigError("manifold.kind", "must be 'torus' or 'sphere'")
    unknown = set(man) - {"kind", "dimension", "basis", "side"}
    if unknown:
        raise ConfigError(f"manifold.{sorted(unknown)[0]}", "unknown key")
    try:
        build_manifold(man)
    except (DomainError, TypeError, ValueError) as exc:
        raise ConfigError("manifold", str(exc)) from None
    if not _strictly_increasing(config.lambdas):
        raise ConfigError("lambdas", "must be strictly increasing")
    if any(lam <= 0 or not math.isfinite(lam) for lam in config.lambdas):
        raise ConfigError("lambdas", "must be positive and finite")
    if not _strictly_increasing(config.degrees) or any(k < 1 for k in config.degrees):
        raise ConfigError("degrees", "must be positive and strictly increasing")
    if not config.delta > 0:
        raise ConfigError("delta", "must be positive")
    if not (0 < config.ball_exponent <= 1):
        raise ConfigError("ball_exponent", "must lie in (0, 1]")
    if config.threads < 1:
        raise ConfigError("threads", "must be at least 1")
    for name in ("min_offsets", "pair_count", "near_pairs", "lambda_max", "r_count", "x_count"):
        if getattr(config, name) < 1:
            raise ConfigError(name, "must be positive")
    if config.samples < 100:
        raise ConfigError("samples", "must be at least 100")
    if not config.separation > 0:
        raise ConfigError("separation", "must be positive")
    if len(config.scaled_range) != 2 or not 0 < config.scaled_range[0] < config.scaled_range[1]:
        raise ConfigError("scaled_range", "must be [low, high] with 0 < low < high")
    if config.experiment == "mehler-heine" and man["kind"] != "sphere":
        raise ConfigError("manifold.kind", "mehler-heine runs on the sphere")
    if config.experiment in ("embedding-scan", "distance-asymptotics", "hessian-check", "weyl-counting"):
        if man["kind"] != "torus":
            raise ConfigError("manifold.kind", f"{config.experiment} runs on a torus")
    needs_lambdas = config.experiment in ("scaling-limit", "embedding-scan", "distance-asymptotics", "hessian-check")
    if config.experiment == "weyl-remainder":
        if man["kind"] == "torus" and not config.lambdas:
            raise ConfigError("lambdas", "must not be empty")
        if man["kind"] == "sphere" and not (config.lambdas or config.degrees):
            raise ConfigError("degrees", "give degrees or lambdas for the sphere")
    elif needs_lambdas and not config.lambdas:
        raise ConfigError("lambdas", "must not be empty")
    if config.experiment == "mehler-heine" and not config.degrees:
        raise ConfigError("degrees", "must not be empty")
    unknown = set(config.thresholds) - set(DEFAULT_THRESHOLDS[config.experiment])
    if unknown:
        raise ConfigError(f"thresholds.{sorted(unknown)[0]}", "unknown threshold")
    return config


def make_config(experiment, values=None, overrides=None) -> ExperimentConfig:
    """Build and validate a config: built-in defaults for ``experiment``, then
    ``values`` (e.g. parsed TOML), then ``overrides``."""
    values = dict(values or {})
    file_kind = values.pop("experiment", experiment)
    if file_kind != experiment:
        raise ConfigError("experiment", f"config is for {file_kind!r}, not {experiment!r}")
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}")
    merged = dict(DEFAULT_PARAMETERS[experiment])
    for source in (values, overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            if key not in _FIELD_TYPES or key == "experiment":
                raise ConfigError(key, "unknown field")
            merged[key] = value
    coerced = {k: _coerce(k, v) for k, v in merged.items()}
    thresholds = dict(DEFAULT_THRESHOLDS[experiment])
    unknown = set(coerced.get("thresholds", {})) - set(thresholds)
    if unknown:
        raise ConfigError(f"thresholds.{sorted(unknown)[0]}", "unknown threshold")
    thresholds.update(coerced.get("thresholds", {}))
    coerced["thresholds"] = thresholds
    return validate(ExperimentConfig(experiment=experiment, **coerced))


def load_config(path, experiment, overrides=None) -> ExperimentConfig:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            values = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"invalid TOML: {exc}") from None
    return make_config(experiment, values, overrides)


def build_manifold(spec):
    n = int(spec.get("dimension", 2))
    if spec["kind"] == "sphere":
        return RoundSphere(n)
    if "basis" in spec:
        basis = np.array(spec["basis"], dtype=float)
        if basis.shape != (n, n):
            raise DomainError(f"basis must be {n}x{n}")
        return FlatTorus(basis)
    return FlatTorus.square(n, float(spec.get("side", 2.0 * math.pi)))


# -- results ------------------------------------------------------------------


@dataclass
class Flag:
    criterion: str
    passed: bool
    value: object
    threshold: object
    description: str


@dataclass
class RunSummary:
    experiment: str
    columns: list
    rows: list
    flags: dict
    config: ExperimentConfig
    profile_columns: list = None
    profile_rows: list = None
    wall_time: float = 0.0

    @property
    def passed(self):
        return all(f.passed for f in self.flags.values())

    def metrics(self):
        return [dict(zip(self.columns, [_jsonable(v) for v in row])) for row in self.rows]

    def to_json(self, timestamp):
        return {
            "experiment": self.experiment,
            "code_version": code_version(),
            "timestamp": timestamp,
            "wall_time_s": self.wall_time,
            "passed": self.passed,
            "flags": {k: _jsonable(asdict(v)) for k, v in self.flags.items()},
            "metrics": self.metrics(),
            "config": _jsonable(self.config.echo()),
        }


SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["experiment", "code_version", "timestamp", "wall_time_s", "passed", "flags", "metrics", "config"],
    "additionalProperties": False,
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "code_version": {"type": "string"},
        "timestamp": {"type": "string"},
        "wall_time_s": {"type": "number", "minimum": 0},
        "passed": {"type": "boolean"},
        "flags": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["criterion", "passed", "value", "threshold", "description"],
                "additionalProperties": False,
                "properties": {
                    "criterion": {"type": "string"},
                    "passed": {"type": "boolean"},
                    "value": {},
                    "threshold": {},
                    "description": {"type": "string"},
                },
            },
        },
        "metrics": {"type": "array", "items": {"type": "object"}},
        "config": {"type": "object", "required": ["experiment", "manifold", "thresholds"]},
    },
}


def code_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else str(v)
    return value


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def csv_bytes(columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue().encode("ascii")


def _is_strictly_decreasing(values):
    return all(b < a for a, b in zip(values, values[1:]))


# -- suites -------------------------------------------------------------------


def _cache(config):
    return config.cache_dir or None


def _specfun_check(config):
    t = config.thresholds
    rows = []
    r = np.linspace(config.r_max / config.r_count, config.r_max, config.r_count)
    fb_worst = 0.0
    for n in config.dimensions:
        ref = np.array([oracles.sphere_fourier_quadrature(n, x) for x in r])
        err = np.abs(np.asarray(fourier_bessel_sphere_integral(n, r)) - ref)
        i = int(np.argmax(err))
        fb_worst = max(fb_worst, float(err[i]))
        rows.append(("fourier-bessel", float(n), float(r[i]), float(err[i])))
    x = np.linspace(0.0, config.x_max, config.x_count)
    bj_worst = rec_worst = 0.0
    for nu in config.bessel_orders:
        order = BesselOrder.of(nu)
        ref = np.array([oracles.bessel_series(nu, v) for v in x])
        err = np.abs(np.asarray(bessel_j(order, x)) - ref)
        i = int(np.argmax(err))
        bj_worst = max(bj_worst, float(err[i]))
        rows.append(("bessel", float(nu), float(x[i]), float(err[i])))
        xp = x[x > 0]
        lower = np.asarray(bessel_j(BesselOrder.of(nu - 1), xp)) if nu >= 1 else None
        if lower is not None:
            upper = np.asarray(bessel_j(BesselOrder.of(nu + 1), xp))
            res = np.abs(lower + upper - 2 * nu / xp * np.asarray(bessel_j(order, xp)))
            j = int(np.argmax(res))
            rec_worst = max(rec_worst, float(res[j]))
            rows.append(("recurrence", float(nu), float(xp[j]), float(res[j])))
    flags = {
        "fourier_bessel": Flag("1", fb_worst <= t["fourier_bessel_max_error"], fb_worst, t["fourier_bessel_max_error"], "sphere integral vs quadrature"),
        "bessel_series": Flag("2", bj_worst <= t["bessel_max_error"], bj_worst, t["bessel_max_error"], "J_nu vs interval series"),
        "bessel_recurrence": Flag("2", rec_worst <= t["recurrence_max_residual"], rec_worst, t["recurrence_max_residual"], "three-term recurrence residual"),
    }
    return ["check", "parameter", "worst_x", "max_abs_error"], rows, flags, None, None


def _base_point(config, manifold):
    if config.base_point is not None:
        return np.array(config.base_point)
    if isinstance(manifold, RoundSphere):
        p = np.zeros(manifold.n + 1)
        p[-1] = 1.0
        return p
    return np.zeros(manifold.n)


def remainder_lambdas(config, manifold):
    """The lambdas a remainder sweep actually uses."""
    if isinstance(manifold, RoundSphere):
        if config.degrees:
            return [spectra.sphere_frequency(manifold.n, k) for k in config.degrees]
        return list(config.lambdas)
    if config.off_spectrum:
        return [spectra.off_spectrum(manifold, lam) for lam in config.lambdas]
    return list(config.lambdas)


def _weyl_remainder(config):
    t = config.thresholds
    manifold = build_manifold(config.manifold)
    lams = remainder_lambdas(config, manifold)
    records = kernels.remainder_sweep(
        manifold,
        _base_point(config, manifold),
        lams,
        config.ball_exponent,
        min_offsets=config.min_offsets,
        resolution=config.resolution,
        rtol=config.refine_rtol,
        max_doublings=config.max_doublings,
        workers=config.threads,
        cache_dir=_cache(config),
    )
    rows = [
        (r.lam, r.ball_radius, r.argmax_distance, r.kernel_value, r.weyl_value, r.sup_abs_R, r.normalized, r.sample_count, r.grid_offsets, r.refinements)
        for r in records
    ]
    norm = [r.normalized for r in records]
    if isinstance(manifold, FlatTorus):
        ratio = norm[-1] / norm[0]
        flags = {
            "strictly_decreasing": Flag("4", _is_strictly_decreasing(norm), norm, None, "normalized sup |R| decreases with lambda"),
            "decay_ratio": Flag("4", ratio < t["max_last_over_first"], ratio, t["max_last_over_first"], "last / first normalized sup"),
        }
    else:
        low = min(norm)
        flags = {
            "no_decay_control": Flag("7", low >= t["control_floor"], low, t["control_floor"], "normalized sup stays above the floor"),
        }
    columns = ["lambda", "r_ball", "argmax_dist", "kernel_value", "weyl_value", "sup_abs_R", "normalized", "sample_count", "grid_offsets", "refinements"]
    return columns, rows, flags, None, None


def _profile_rows(res):
    return [
        (res.lam, s, v, m, a, e)
        for s, v, m, a, e in zip(res.scaled_dist, res.value, res.model, res.abs_error, res.normalized_error)
    ]


_PROFILE_COLUMNS = ["lambda", "scaled_dist", "value", "model_value", "abs_error", "normalized_error"]


def _scaling_limit(config):
    t = config.thresholds
    manifold = build_manifold(config.manifold)
    base = _base_point(config, manifold)
    rows, profile = [], []
    for lam in config.lambdas:
        window = SpectralWindow(lam, lam + config.delta)
        res = kernels.scaling_limit_error(
            manifold, window, base, config.max_scaled_dist,
            samples=config.samples, direction=config.direction, workers=config.threads, cache_dir=_cache(config),
        )
        rows.append((lam, config.delta, res.sup_normalized))
        profile += _profile_rows(res)
    errs = [r[2] for r in rows]
    flags = {
        "decreasing": Flag("5", errs[-1] < errs[0], errs, None, "error at the largest lambda is below the smallest"),
        "bounded": Flag("5", max(errs) < t["max_error"], max(errs), t["max_error"], "all normalized errors below the bound"),
    }
    return ["lambda", "delta", "sup_normalized_error"], rows, flags, _PROFILE_COLUMNS, profile


def _mehler_heine(config):
    t = config.thresholds
    n = build_manifold(config.manifold).n
    rows, profile = [], []
    for k in config.degrees:
        res = kernels.mehler_heine_error(k, config.max_scaled_dist, config.samples, n=n)
        rows.append((k, res.lam, res.sup_normalized))
        profile += _profile_rows(res)
    errs = [r[2] for r in rows]
    factors = [b / a for a, b in zip(errs, errs[1:])]
    worst = max(factors) if factors else 0.0
    flags = {
        "halving": Flag("6", worst <= t["max_halving_factor"], factors, t["max_halving_factor"], "error ratio per degree doubling"),
        "final": Flag("6", errs[-1] <= t["final_max_error"], errs[-1], t["final_max_error"], "error at the largest degree"),
    }
    return ["degree", "lambda", "sup_normalized_error"], rows, flags, _PROFILE_COLUMNS, profile


def _embedding_scan(config):
    t = config.thresholds
    torus = build_manifold(config.manifold)
    rows, profile = [], []
    for lam in config.lambdas:
        basis = embedding.build_window_basis(torus, SpectralWindow(lam, lam + config.delta), _cache(config))
        rep = embedding.injectivity_scan(basis, config.separation, config.pair_count, config.seed, config.near_pairs)
        rows.append((lam, basis.m_lambda, rep.pair_count, rep.min_dist_sq, rep.argmin_geodesic, rep.near_diag_ratio_min, rep.near_diag_ratio_max))
        profile += [(lam,) + row for row in rep.rows]
    mins = [r[3] for r in rows]
    lo = min(r[5] for r in rows)
    hi = max(r[6] for r in rows)
    flags = {
        "separated": Flag("8", min(mins) >= t["min_dist_sq"], min(mins), t["min_dist_sq"], "minimum dist_lambda^2 over separated pairs"),
        "near_diagonal": Flag(
            "8", t["near_ratio_low"] <= lo and hi <= t["near_ratio_high"], [lo, hi],
            [t["near_ratio_low"], t["near_ratio_high"]], "dist_lambda^2 / (lambda d)^2 for lambda d < 1",
        ),
    }
    columns = ["lambda", "m_lambda", "pair_count", "min_dist_lambda_sq", "argmin_dist_g", "near_ratio_min", "near_ratio_max"]
    return columns, rows, flags, ["lambda", "pair_id", "dist_g", "lambda_dist", "dist_lambda_sq"], profile


def _distance_asymptotics(config):
    torus = build_manifold(config.manifold)
    rows, profile = [], []
    for lam in config.lambdas:
        basis = embedding.build_window_basis(torus, SpectralWindow(lam, lam + config.delta), _cache(config))
        pairs = embedding.scaled_pair_set(torus, lam, config.pair_count, config.seed, config.scaled_range)
        rep = embedding.distance_asymptotics_residual(basis, pairs)
        rows.append((lam, basis.m_lambda, len(rep.rows), rep.sup_residual))
        profile += [(lam,) + row for row in rep.rows]
    sups = [r[3] for r in rows]
    flags = {"strictly_decreasing": Flag("9", _is_strictly_decreasing(sups), sups, None, "sup residual decreases with lambda")}
    columns = ["lambda", "m_lambda", "pair_count", "sup_residual"]
    return columns, rows, flags, ["lambda", "pair_id", "dist_g", "lambda_dist", "dist_lambda_sq", "f_model", "residual"], profile


def _hessian_check(config):
    t = config.thresholds
    torus = build_manifold(config.manifold)
    rows = []
    model_err = fd_err = off_ratio = 0.0
    for lam in config.lambdas:
        basis = embedding.build_window_basis(torus, SpectralWindow(lam, lam + config.delta), _cache(config))
        rep = embedding.hessian_report(basis)
        for i in range(torus.n):
            for j in range(torus.n):
                rows.append((lam, i, j, rep.exact[i, j], rep.model[i, j], rep.finite_difference[i, j]))
        model_err = max(model_err, rep.model_rel_error)
        fd_err = max(fd_err, rep.fd_rel_error)
        off_ratio = max(off_ratio, rep.off_diagonal_over_trace)
    flags = {
        "model": Flag("10", model_err <= t["model_max_rel_error"], model_err, t["model_max_rel_error"], "exact second moment vs C_n lambda^(n+1) I"),
        "finite_difference": Flag("10", fd_err <= t["fd_max_rel_error"], fd_err, t["fd_max_rel_error"], "finite-difference cross-derivative"),
        "isotropy": Flag("10", off_ratio <= t["off_diagonal_over_trace"], off_ratio, t["off_diagonal_over_trace"], "off-diagonal entries over trace"),
    }
    return ["lambda", "i", "j", "exact", "model", "finite_difference"], rows, flags, None, None


def _weyl_counting(config):
    t = config.thresholds
    torus = build_manifold(config.manifold)
    lams = np.arange(1, config.lambda_max + 1, dtype=float)
    counts = spectra.counting_function(torus, lams)
    weyl = np.asarray(spectra.weyl_count(torus, lams))
    normalized = np.abs(counts - weyl) / lams
    rows = [(int(l), int(c), float(w), float(c - w), float(e)) for l, c, w, e in zip(lams, counts, weyl, normalized)]
    worst = float(normalized.max())
    flags = {"remainder": Flag("3", worst <= t["max_normalized_remainder"], worst, t["max_normalized_remainder"], "|N - weyl| / lambda")}
    expected = [(float(l), int(c)) for l, c in t["expected_counts"]]
    if expected:
        got = spectra.counting_function(torus, [l for l, _ in expected])
        ok = all(int(g) == c for g, (_, c) in zip(got, expected))
        flags["exact_counts"] = Flag("3", ok, [int(g) for g in got], [c for _, c in expected], "exact lattice counts")
    return ["lambda", "count", "weyl", "remainder", "normalized"], rows, flags, None, None


_SUITES = {
    "specfun-check": _specfun_check,
    "weyl-remainder": _weyl_remainder,
    "scaling-limit": _scaling_limit,
    "mehler-heine": _mehler_heine,
    "embedding-scan": _embedding_scan,
    "distance-asymptotics": _distance_asymptotics,
    "hessian-check": _hessian_check,
    "weyl-counting": _weyl_counting,
}


def run(config: ExperimentConfig, write=True) -> RunSummary:
    """Execute the suite named by ``config``; write outputs unless ``write`` is False."""
    config = validate(config)
    start = time.perf_counter()
    columns, rows, flags, pcols, prows = _SUITES[config.experiment](config)
    summary = RunSummary(config.experiment, columns, rows, flags, config, pcols, prows)
    summary.wall_time = time.perf_counter() - start
    if write:
        write_outputs(summary, config.out_dir, profile=config.profile)
    return summary


def write_outputs(summary: RunSummary, out_dir, profile=True):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_bytes(csv_bytes(summary.columns, summary.rows))
    if profile and summary.profile_rows is not None:
        (out / "profile.csv").write_bytes(csv_bytes(summary.profile_columns, summary.profile_rows))
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    text = json.dumps(summary.to_json(stamp), indent=2, sort_keys=True) + "\n"
    (out / "summary.json").write_text(text, encoding="utf-8")


def resolve_cache_dir(config_value, flag_value):
    """Flag beats environment, environment beats the config file."""
    if flag_value:
        return flag_value
    return os.environ.get(CACHE_ENV) or config_value
