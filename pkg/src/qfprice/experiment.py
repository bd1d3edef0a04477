"""Experiment plans, sweep execution and the results CSV.

Config files are ``key = value`` lines; ``#`` starts a comment. Lists are
comma separated. Recognised keys and their types are listed in ``SCHEMA``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import qamc, training
from .ansatz import AnsatzSpec, spectrum_size
from .fourier import payoff_coeffs_pdf, price_pdf
from .market import MarketParams, analytic_put_price, exact_density_coeffs, truncation_interval

log = logging.getLogger(__name__)

CSV_VERSION = "qfprice-results v1"
METHODS = ("I", "II", "III", "exact")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (exit code 2)."""


class SchemaError(ValueError):
    """Input file lacks required columns (exit code 4)."""


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _parse_dim(text: str) -> tuple[int, int]:
    q, sep, lay = text.lower().partition("x")
    if not sep:
        raise ValueError(f"expected QUBITSxLAYERS, got {text!r}")
    return int(q), int(lay)


def _list_of(parse):
    def parse_list(text: str):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if not items:
            raise ValueError("empty list")
        return tuple(parse(t) for t in items)
    return parse_list


SCHEMA = {
    # plan
    "method": str,
    "strikes": _list_of(float),
    "dims": _list_of(_parse_dim),
    "data_sizes": _list_of(int),
    "epsilons": _list_of(float),
    "repetitions": int,
    "seed_base": int,
    "workers": int,
    "record_wall_time": _parse_bool,
    # market
    "s0": float,
    "r": float,
    "sigma": float,
    "maturity": float,
    "t0": float,
    # training
    "learning_rate": float,
    "epochs": int,
    "supervised_weight": float,
    "differential_weight": float,
    "n_test": int,
    "grid_inputs": _parse_bool,
    "window": str,
    "quadrature_points": int,
    "boundary_group": str,
    "truncation_width": float,
    "train_affine": _parse_bool,
    "init_scale": float,
    "init_bias": float,
    # amplitude estimation
    "gamma": float,
    "shots_per_round": int,
    "max_rounds": int,
    "qae_points": int,
    "qae_truncation_width": float,
    "exact_terms": int,
}

MARKET_KEYS = ("s0", "r", "sigma", "maturity", "t0")
TRAINING_KEYS = ("learning_rate", "epochs", "supervised_weight", "differential_weight", "n_test",
                 "grid_inputs", "window", "quadrature_points", "boundary_group", "truncation_width",
                 "train_affine", "init_scale", "init_bias")
QAE_KEYS = ("gamma", "shots_per_round", "max_rounds")


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into typed values; errors name the offending line."""
    values = {}
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = SCHEMA[key](val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return values


def parse_overrides(items) -> dict:
    """``key=value`` command-line overrides, validated like config lines."""
    return parse_config("\n".join(items or ()), source="--set")


@dataclass(frozen=True)
class ExperimentPlan:
    method: str = "I"
    strikes: tuple = (90.0, 100.0, 110.0)
    dims: tuple = ((7, 7),)
    data_sizes: tuple = (250, 1000, 2500)
    epsilons: tuple = (0.08, 0.04, 0.02, 0.01)
    repetitions: int = 10
    seed_base: int = 0
    workers: int = 1
    record_wall_time: bool = False
    market: dict = field(default_factory=dict)
    training: dict = field(default_factory=dict)
    qae: dict = field(default_factory=dict)
    qae_points: int = qamc.DEFAULT_GRID
    qae_truncation_width: float = 10.0
    exact_terms: int = 64

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {', '.join(METHODS)}, got {self.method!r}")
        for name in ("strikes", "dims", "data_sizes", "epsilons"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be a nonempty list")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            for k in self.strikes:
                self.market_for(k)
            for dim in self.dims:
                AnsatzSpec(*dim)
            if self.method in ("I", "II"):
                for size in self.data_sizes:
                    training.TrainingConfig.for_method(self.method, n_train=size, **self.training)
            if self.method == "III":
                for eps in self.epsilons:
                    qamc.QaeConfig(epsilon=eps, **self.qae)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_values(cls, values: dict) -> "ExperimentPlan":
        kwargs = {"market": {}, "training": {}, "qae": {}}
        for key, val in values.items():
            if key in MARKET_KEYS:
                kwargs["market"][key] = val
            elif key in TRAINING_KEYS:
                kwargs["training"][key] = val
            elif key in QAE_KEYS:
                kwargs["qae"][key] = val
            else:
                kwargs[key] = val
        return cls(**kwargs)

    def market_for(self, strike: float) -> MarketParams:
        return MarketParams(strike=strike, **self.market)

    @property
    def sizes(self) -> tuple:
        """The swept axis: data sizes, epsilons (method III) or a single placeholder (exact)."""
        if self.method == "III":
            return self.epsilons
        if self.method == "exact":
            return (self.exact_terms,)
        return self.data_sizes

    def cells(self):
        """(strike, dim, size) in plan order."""
        for strike in self.strikes:
            for dim in self.dims:
                for size in self.sizes:
                    yield strike, dim, size


def cell_seed(seed_base: int, method: str, strike: float, dim, size, rep: int) -> int:
    """seed_base XOR a stable hash of the cell coordinates (63 bits)."""
    key = f"{method}|{float(strike)!r}|{dim[0]}x{dim[1]}|{size!r}|{rep}".encode()
    digest = int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")
    return (int(seed_base) ^ digest) & ((1 << 63) - 1)


@dataclass
class ResultRow:
    method: str
    strike: float
    dim: str
    data_size_or_eps: float
    seed: int | None
    price: float
    abs_error: float
    rel_error: float
    shots: float
    wall_time_seconds: float
    row_type: str = "data"
    status: str = "ok"
    rel_error_q25: float | None = None
    rel_error_q75: float | None = None


COLUMNS = [f.name for f in fields(ResultRow)]


def _price_cell(plan: ExperimentPlan, strike, dim, size, seed) -> tuple[float, int]:
    market = plan.market_for(strike)
    spec = AnsatzSpec(*dim)
    if plan.method in ("I", "II"):
        cfg = training.TrainingConfig.for_method(plan.method, n_train=int(size), seed=seed, **plan.training)
        trained = training.train(plan.method, market, spec, cfg)
        return training.price_with_model(plan.method, trained, market).price, 0
    if plan.method == "III":
        cfg = qamc.QaeConfig(epsilon=float(size), **plan.qae)
        res = qamc.pipeline_method3(market, spectrum_size(spec), cfg, seed,
                                    plan.qae_truncation_width, plan.qae_points)
        return res.price, res.total_shots
    interval = truncation_interval(market)
    series = exact_density_coeffs(market, interval, int(size))
    return price_pdf(series, payoff_coeffs_pdf(market, interval, int(size)), market), 0


def run_cell(plan: ExperimentPlan, strike, dim, size, rep) -> tuple[ResultRow, float]:
    """One repetition of one cell; failures become a status, not an exception."""
    seed = cell_seed(plan.seed_base, plan.method, strike, dim, size, rep)
    oracle = analytic_put_price(plan.market_for(strike))
    start = time.perf_counter()
    try:
        price, shots = _price_cell(plan, strike, dim, size, seed)
        status = "ok"
    except Exception as exc:  # recorded per cell so the sweep continues
        price, shots = math.nan, 0
        status = "error: " + " ".join(f"{type(exc).__name__} {exc}".replace(",", ";").split())
    elapsed = time.perf_counter() - start
    abs_err = abs(price - oracle)
    row = ResultRow(plan.method, float(strike), f"{dim[0]}x{dim[1]}", float(size), seed, price,
                    abs_err, abs_err / oracle, float(shots),
                    elapsed if plan.record_wall_time else math.nan, status=status)
    return row, elapsed


def _run_task(args):
    return run_cell(*args)


def run_plan(plan: ExperimentPlan) -> tuple[list[ResultRow], list[tuple]]:
    """All data rows in plan order followed by one summary row per cell; also per-row timings."""
    tasks = [(plan, strike, dim, size, rep)
             for strike, dim, size in plan.cells() for rep in range(plan.repetitions)]
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    rows = [r for r, _ in results]
    timings = [(r.method, r.strike, r.dim, r.data_size_or_eps, r.seed, t) for r, t in results]
    return rows + summarize(rows), timings


def summarize(rows: list[ResultRow]) -> list[ResultRow]:
    groups: dict = {}
    for row in rows:
        if row.row_type == "data":
            groups.setdefault((row.method, row.strike, row.dim, row.data_size_or_eps), []).append(row)
    out = []
    for (method, strike, dim, size), members in groups.items():
        ok = [r for r in members if r.status == "ok"]
        if ok:
            rel = np.array([r.rel_error for r in ok])
            q25, med, q75 = (float(v) for v in np.percentile(rel, [25, 50, 75]))
            price = float(np.median([r.price for r in ok]))
            abs_err = float(np.median([r.abs_error for r in ok]))
            shots = float(np.median([r.shots for r in ok]))
        else:
            q25 = med = q75 = price = abs_err = shots = math.nan
        status = "ok" if len(ok) == len(members) else f"partial {len(ok)}/{len(members)}"
        out.append(ResultRow(method, strike, dim, size, None, price, abs_err, med, shots, math.nan,
                             "summary", status, q25, q75))
    return out


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.17g}"
    return str(value)


def write_csv(rows: list[ResultRow], path) -> None:
    buf = io.StringIO()
    buf.write(f"# {CSV_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow([_fmt(getattr(row, c)) for c in COLUMNS])
    Path(path).write_text(buf.getvalue())


def write_timings(timings, path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "strike", "dim", "data_size_or_eps", "seed", "wall_time_seconds"])
    for rec in timings:
        writer.writerow([_fmt(v) for v in rec])
    Path(path).write_text(buf.getvalue())


def timing_path(out_path) -> Path:
    p = Path(out_path)
    return p.with_name(p.stem + ".timing.csv")


def read_csv(path) -> list[dict]:
    """Rows of a results CSV as dicts; raises SchemaError on missing columns."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        return []
    reader = csv.DictReader(lines)
    missing = [c for c in ("method", "strike", "dim", "data_size_or_eps", "rel_error", "shots", "row_type", "status")
               if c not in (reader.fieldnames or [])]
    if missing:
        raise SchemaError(f"{path}: missing columns {', '.join(missing)}")
    return list(reader)


def plot_series(rows: list[dict]) -> dict:
    """Per (method, strike, dim): arrays of x, median, q25, q75 of rel_error (and shots for method III)."""
    groups: dict = {}
    for row in rows:
        if row["row_type"] != "data" or row["status"] != "ok":
            continue
        key = (row["method"], float(row["strike"]), row["dim"])
        groups.setdefault(key, {}).setdefault(float(row["data_size_or_eps"]), []).append(
            (float(row["rel_error"]), float(row["shots"])))
    out = {}
    for key, by_x in groups.items():
        xs = sorted(by_x)
        err = [np.percentile([e for e, _ in by_x[x]], [50, 25, 75]) for x in xs]
        series = {"error": np.column_stack([xs, np.array(err)])}
        if key[0] == "III":
            shots = [np.percentile([s for _, s in by_x[x]], [50, 25, 75]) for x in xs]
            series["shots"] = np.column_stack([xs, np.array(shots)])
        out[key] = series
    return out


def write_plotdata(rows: list[dict], out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for (method, strike, dim), series in sorted(plot_series(rows).items()):
        stem = f"method{method}_K{strike:g}_{dim}"
        for name, table in series.items():
            path = out_dir / (stem + ("" if name == "error" else "_shots") + ".dat")
            xlabel = "epsilon" if method == "III" else ("n_terms" if method == "exact" else "data_size")
            header = f"{xlabel} median q25 q75  ({'total shots' if name == 'shots' else 'relative error'})"
            np.savetxt(path, table, fmt="%.17g", header=header)
            written.append(path)
    return written


def with_overrides(plan: ExperimentPlan, values: dict) -> ExperimentPlan:
    merged = {**plan_values(plan), **values}
    return ExperimentPlan.from_values(merged)


def plan_values(plan: ExperimentPlan) -> dict:
    base = {k: getattr(plan, k) for k in ("method", "strikes", "dims", "data_sizes", "epsilons", "repetitions",
                                           "seed_base", "workers", "record_wall_time", "qae_points",
                                           "qae_truncation_width", "exact_terms")}
    return {**base, **plan.market, **plan.training, **plan.qae}


__all__ = [
    "ConfigError", "SchemaError", "ExperimentPlan", "ResultRow", "COLUMNS", "CSV_VERSION", "SCHEMA",
    "parse_config", "parse_overrides", "cell_seed", "run_cell", "run_plan", "summarize", "write_csv",
    "write_timings", "timing_path", "read_csv", "plot_series", "write_plotdata", "with_overrides", "replace",
]
