"""Experiment configuration, dispatch and CSV output.

Every experiment writes CSV with a ``#``-prefixed metadata header (config
hash, seed, library versions and the conventions in use). The body depends
only on the configuration, so two runs with the same config produce identical
bodies; the timestamp lives in the header.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import hashlib
import io
import json
import logging
import math
import platform
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy
import sklearn

from .examples import get_example, paper_tables
from .fem import write_field_csv
from .forward import convergence_table, solve
from .inverse import (
    NOISE_MODEL,
    SEMINORM_CONVENTION,
    TikhonovConfig,
    add_noise,
    monte_carlo_study,
    tikhonov,
)
from .mlf import mittag_leffler

__all__ = ["ConfigError", "ExperimentConfig", "RunResult", "TableRow", "load_config", "read_config_fields", "run"]

logger = logging.getLogger(__name__)

EXPERIMENTS = ("forward", "convergence", "invert", "sweep", "monte_carlo", "mlf", "tables")
INVERSE_EXAMPLES = ("ex2a", "ex2b", "ex4")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field or line."""


@dataclass
class ExperimentConfig:
    """All knobs of one run. ``None`` means "use the example default".

    ``r=None`` selects the optimal grading ``(4 - alpha) / (2 - alpha)``.
    Sweeps use ``rho = 10**(-k * rho_step)`` for ``k`` in ``rhos``.
    """

    experiment: str = "forward"
    example: str | None = None
    alpha: float | None = None
    T: float = 0.1
    N: int | None = None
    r: float | None = None
    scheme: str = "sfor"
    n_cells: int | None = None
    N_ref: int | None = None
    Ns: list[int] | None = None
    sigma: float | None = None
    n: int | None = None
    ns: list[int] | None = None
    rho: float | None = None
    rho_auto: bool = False
    rhos: list[int] | None = None
    rho_step: float = 0.25
    seed: int = 0
    seeds: int = 20
    solver: str = "direct"
    regularizer: str = "h1_semi"
    same_grid: bool = False
    paper_table: str | None = None
    beta: float = 1.0
    z: float = 0.0
    output_dir: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment: must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.alpha is not None and self.experiment != "mlf" and not 1.0 < self.alpha < 2.0:
            raise ConfigError(f"alpha: must lie in (1, 2), got {self.alpha!r}")
        if not self.T > 0:
            raise ConfigError(f"T: must be positive, got {self.T!r}")
        if self.scheme not in ("sfor", "lifted"):
            raise ConfigError(f"scheme: must be 'sfor' or 'lifted', got {self.scheme!r}")
        if self.solver not in ("direct", "gd"):
            raise ConfigError(f"solver: must be 'direct' or 'gd', got {self.solver!r}")
        if self.rho is not None and not self.rho > 0:
            raise ConfigError(f"rho: must be positive, got {self.rho!r}")
        if self.sigma is not None and self.sigma < 0:
            raise ConfigError(f"sigma: must be non-negative, got {self.sigma!r}")
        if self.seeds < 1:
            raise ConfigError("seeds: must be >= 1")
        if self.rhos is not None and len(self.rhos) != 2:
            raise ConfigError("rhos: expected two integers [k1, k2]")

    # -- JSON ---------------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def check_fields(cls, data: dict) -> dict:
        """Names and types of ``data`` checked and coerced; no cross-field rules."""
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a JSON object")
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        return {key: _coerce(key, value, known[key].type) for key, value in data.items()}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return cls(**cls.check_fields(data))

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(data)

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _coerce(key, value, annotation):
    """Light type check against the field annotation string."""
    ann = str(annotation)
    if value is None:
        if "None" not in ann:
            raise ConfigError(f"{key}: may not be null")
        return None
    if ann.startswith("list"):
        if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{key}: expected a list of integers, got {value!r}")
        return list(value)
    if ann.startswith("bool"):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if ann.startswith("int"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if ann.startswith("float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if ann.startswith("str"):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    return value


def read_config_fields(path) -> dict:
    """Fields explicitly set in a JSON config file, type checked."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    # value rules are checked once the fields are merged into a full config
    return ExperimentConfig.check_fields(data)


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(read_config_fields(path))


# -- output ------------------------------------------------------------------


@dataclass(frozen=True)
class TableRow:
    """A row of a convergence, sweep or Monte Carlo table."""

    values: tuple

    def cells(self):
        return [_fmt(v) for v in self.values]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _versions():
    return (
        f"python={platform.python_version()} numpy={np.__version__} "
        f"scipy={scipy.__version__} scikit-learn={sklearn.__version__}"
    )


def metadata(config: ExperimentConfig, extra=()) -> list[str]:
    from . import __version__

    lines = [
        f"fracwave {__version__} experiment={config.experiment}",
        f"config_hash={config.config_hash()}",
        f"seed={config.seed}",
        f"versions: {_versions()}",
        f"noise={NOISE_MODEL}",
        f"seminorm={SEMINORM_CONVENTION}",
    ]
    lines.extend(extra)
    lines.append(f"created={_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}")
    return lines


def table_csv(header_lines, columns, rows) -> str:
    out = io.StringIO()
    for line in header_lines:
        out.write(f"# {line}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow(row.cells() if isinstance(row, TableRow) else [_fmt(v) for v in row])
    return out.getvalue()


@dataclass
class RunResult:
    """CSV text written by a run plus scalar metrics for programmatic use."""

    csv: str
    metrics: dict = field(default_factory=dict)
    path: Path | None = None

    def metrics_line(self) -> str:
        return "metrics: " + " ".join(f"{k}={_fmt(v)}" for k, v in self.metrics.items())


# -- experiments ---------------------------------------------------------------


def _example(config, default):
    return get_example(config.example or default)


def _forward(config):
    ex = _example(config, "ex1a")
    spec = ex.spec(alpha=config.alpha, N=config.N, r=config.r, scheme=config.scheme,
                   T=config.T, n_cells=config.n_cells, with_datum=True)
    traj = solve(spec)
    meta = metadata(config, [
        f"example={ex.name} alpha={spec.alpha!r} T={spec.T!r} N={spec.N} r={spec.grading!r} "
        f"scheme={spec.scheme} n_cells={spec.space.n_cells}",
    ])
    return RunResult(write_field_csv(spec.space, traj.terminal, header=meta),
                     {"l2_norm": math.sqrt(traj.terminal @ (spec.space.mass @ traj.terminal))})


def _convergence(config):
    ex = _example(config, "ex1a")
    spec = ex.spec(alpha=config.alpha, r=config.r, scheme=config.scheme, T=config.T,
                   n_cells=config.n_cells, with_datum=True)
    Ns = config.Ns or list(ex.Ns)
    N_ref = config.N_ref or ex.N_ref
    if N_ref is None:
        raise ConfigError(f"N_ref: example {ex.name} has no default reference resolution")
    rows = convergence_table(spec, Ns, N_ref)
    meta = metadata(config, [
        f"example={ex.name} alpha={spec.alpha!r} r={spec.grading!r} scheme={spec.scheme} "
        f"n_cells={spec.space.n_cells} N_ref={N_ref} error=max_n L2 at nested nodes",
    ])
    body = [TableRow((r.N, r.error, r.order)) for r in rows]
    return RunResult(table_csv(meta, ["N", "eL2", "Order"], body),
                     {"final_order": rows[-1].order})


def _inverse_setup(config):
    ex = _example(config, "ex2a")
    if ex.name not in INVERSE_EXAMPLES:
        raise ConfigError(f"example: inversion needs one of {INVERSE_EXAMPLES}, got {ex.name!r}")
    problem = ex.inverse_problem(alpha=config.alpha, N=config.N, r=config.r,
                                 n_cells=config.n_cells, same_grid=config.same_grid,
                                 regularizer=config.regularizer)
    sigma = ex.sigma if config.sigma is None else config.sigma
    n = config.n or ex.n_obs
    grid = ("same grid (debug)" if problem.same_grid else
            f"data grid n_cells={problem.data_spec.space.n_cells} N={problem.data_spec.N}")
    info = [
        f"example={ex.name} alpha={problem.spec.alpha!r} N={problem.spec.N} "
        f"r={problem.spec.grading!r} n_cells={problem.space.n_cells} sigma={sigma!r}",
        f"observations: {grid}",
        f"regularizer={config.regularizer} smoothness_beta={problem.beta!r}",
    ]
    return ex, problem, sigma, n, info


def _rho(config, problem, sigma, n):
    if config.rho_auto:
        return problem.optimal_rho(sigma, n)
    if config.rho is None:
        raise ConfigError("rho: give rho or set rho_auto")
    return config.rho


def _invert(config):
    ex, problem, sigma, n, info = _inverse_setup(config)
    pts = problem.points(n)
    obs = problem.observe(pts, sigma, config.seed)
    rho = _rho(config, problem, sigma, n)
    G = problem.design(pts)
    res = tikhonov(G, obs.values, TikhonovConfig(rho=rho, regularizer=config.regularizer,
                                                 solver=config.solver),
                   problem.regularizer_matrix())
    err = problem.error(res.coef)
    metrics = {"rel_l2_error": err, "rho": rho, "iterations": res.iterations,
               "converged": res.converged, "n": n}
    meta = metadata(config, info + [f"n={n} rho={rho!r} solver={config.solver}",
                                    "metrics: " + " ".join(f"{k}={_fmt(v)}" for k, v in metrics.items())])
    return RunResult(write_field_csv(problem.space, res.coef, header=meta), metrics)


def _sweep(config):
    ex, problem, sigma, n, info = _inverse_setup(config)
    k1, k2 = config.rhos or (8, 20)
    ks = range(k1, k2 + 1) if k2 >= k1 else range(k1, k2 - 1, -1)
    pts = problem.points(n)
    G = problem.design(pts)
    m = add_noise(problem.clean_values(pts), sigma, config.seed)
    R = problem.regularizer_matrix()
    rows = []
    for k in ks:
        rho = 10.0 ** (-k * config.rho_step)
        res = tikhonov(G, m, TikhonovConfig(rho=rho, regularizer=config.regularizer,
                                            solver=config.solver), R)
        rows.append(TableRow((rho, problem.error(res.coef))))
    best = min(rows, key=lambda r: r.values[1])
    meta = metadata(config, info + [f"n={n} rho=10^(-k*{config.rho_step!r}) k={k1}..{k2}"])
    return RunResult(table_csv(meta, ["rho", "error"], rows),
                     {"best_rho": best.values[0], "best_error": best.values[1]})


def _monte_carlo(config):
    ex, problem, sigma, n, info = _inverse_setup(config)
    ns = config.ns or [n]
    rule = "optimal" if config.rho_auto or config.rho is None else config.rho
    rows = monte_carlo_study(problem, ns, sigma, seeds=config.seeds, rho_rule=rule,
                             base_seed=config.seed, solver=config.solver)
    meta = metadata(config, info + [
        f"seeds={config.seeds} seed_k=base+k rho_rule={rule if isinstance(rule, str) else repr(rule)}",
    ])
    body = [TableRow((r.n, r.rho, r.mean, r.std)) for r in rows]
    return RunResult(table_csv(meta, ["n", "rho", "mean_error", "std_error"], body),
                     {"means": [r.mean for r in rows]})


def _mlf(config):
    alpha = 1.5 if config.alpha is None else config.alpha
    value = mittag_leffler(alpha, config.beta, config.z)
    return RunResult(f"{value:.15g}\n", {"value": value})


def _tables(config):
    tables = paper_tables()
    if config.paper_table is None:
        raise ConfigError(f"paper_table: choose one of {sorted(tables)}")
    try:
        tab = tables[config.paper_table]
    except KeyError:
        raise ConfigError(f"paper_table: unknown table {config.paper_table!r}; "
                          f"choose one of {sorted(tables)}") from None
    ex = get_example(tab.example)
    body = []
    for col in tab.columns:
        spec = ex.spec(alpha=col.alpha, r=col.r, scheme=col.scheme, with_datum=True)
        rows = convergence_table(spec, tab.Ns, tab.N_ref)
        for i, row in enumerate(rows):
            ref_order = col.orders[i - 1] if i > 0 else None
            body.append(TableRow((col.label, col.alpha, col.r, col.scheme, row.N, row.error,
                                  row.order, col.errors[i], ref_order)))
    meta = metadata(config, [f"table={tab.name} example={tab.example} N_ref={tab.N_ref}"])
    cols = ["column", "alpha", "r", "scheme", "N", "eL2", "Order", "published_eL2", "published_Order"]
    return RunResult(table_csv(meta, cols, body), {"rows": len(body)})


_DISPATCH = {
    "forward": _forward,
    "convergence": _convergence,
    "invert": _invert,
    "sweep": _sweep,
    "monte_carlo": _monte_carlo,
    "mlf": _mlf,
    "tables": _tables,
}


def run(config: ExperimentConfig, stream=None) -> RunResult:
    """Run one experiment; write CSV to ``config.output_dir`` or to ``stream``."""
    config.validate()
    result = _DISPATCH[config.experiment](config)
    if config.output_dir:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        tag = config.paper_table or config.example or "default"
        suffix = "txt" if config.experiment == "mlf" else "csv"
        path = out / f"{config.experiment}-{tag}-{config.config_hash()}.{suffix}"
        path.write_text(result.csv)
        result.path = path
    elif stream is not None:
        stream.write(result.csv)
    return result
