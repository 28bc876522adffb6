"""Experiment grid: averaged trajectories, rate fits and CSV products.

A cell of the study is one synthetic instance (``n`` components, dimension
``d``, eigenvalue ceiling ``s``) on which L-SVRP is run ``repeats`` times
for ``K`` iterations; the pointwise average of ``||x_k - x_star||^2``
approximates the mean-square error curve.  An ordinary least-squares fit of
its logarithm against the iteration counter yields the empirical per-step
contraction factor ``exp(slope)``, compared against the theoretical factor
for the same instance.

Reproducibility contract: the cell seed generates the problem; the start
point comes from a dedicated stream; repeat ``r`` draws its method
randomness from ``mix_seed(cell_seed, r)`` (a splitmix64-style hash), so
repeats are independent and the averaged trajectory does not depend on
execution order or worker count.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from proxvr.errors import (
    InsufficientDecayError,
    ManifestError,
    NumericalFailure,
    ParameterDomainError,
)
from proxvr.optimizers import MethodConfig, run
from proxvr.problems import ProblemStats, QuadraticProblem, compute_stats, generate_quadratic
from proxvr.prox import QuadraticProxCache
from proxvr.theory import fallback_stepsize, theoretical_rate, theoretical_stepsize

__all__ = [
    "RunConfig",
    "CellResult",
    "FitResult",
    "RateReport",
    "GridResult",
    "GridFailure",
    "DESK_GRID",
    "FULL_GRID",
    "mix_seed",
    "default_x0",
    "resolve_gamma",
    "averaged_metrics",
    "run_cell",
    "default_floor",
    "fit_rate",
    "report_from_cell",
    "build_manifest",
    "load_manifest",
    "run_manifest",
    "run_grid",
    "compare_rates",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_rates_csv",
    "read_rates_csv",
]

# n-values x s-values of the two grid presets.
FULL_GRID = {
    "n_values": (10, 25, 50, 100, 250, 500),
    "s_values": (5, 10, 50, 100, 500, 1000, 5000, 10000),
    "K": 1000,
    "repeats": 200,
}
DESK_GRID = {
    "n_values": (10, 25),
    "s_values": (5, 100),
    "K": 500,
    "repeats": 50,
}

MANIFEST_SCHEMA = "proxvr-grid-manifest/1"

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_X0_STREAM = 1 << 62  # reserved stream index, disjoint from repeat indices


def mix_seed(base_seed: int, index: int) -> int:
    """64-bit mixing hash of (base seed, stream index), splitmix64 core."""
    z = (int(base_seed) + _GOLDEN * (int(index) + 1)) & _MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z


@dataclass(frozen=True)
class RunConfig:
    """One experiment cell.

    ``p`` defaults to ``1/n`` and ``gamma_policy`` is either
    ``"theoretical"`` (closed-form stepsize from the realized dissimilarity
    of the generated instance) or ``"explicit"`` with ``gamma`` set.  The
    start point is ``x_star`` plus a uniformly random direction scaled to
    ``x0_radius``, shared by all repeats of the cell.
    """

    n: int
    s: float
    seed: int
    d: int = 100
    p: float | None = None
    K: int = 1000
    repeats: int = 200
    gamma_policy: str = "theoretical"
    gamma: float | None = None
    x0_radius: float = 10.0

    def __post_init__(self) -> None:
        if self.n < 1 or self.d < 1:
            raise ParameterDomainError("need n >= 1 and d >= 1")
        if self.s < 1:
            raise ParameterDomainError(f"s must be >= 1, got {self.s}")
        if self.K < 2:
            raise ParameterDomainError(f"K must be >= 2, got {self.K}")
        if self.repeats < 1:
            raise ParameterDomainError(f"repeats must be >= 1, got {self.repeats}")
        if self.p is not None and not 0.0 < self.p <= 1.0:
            raise ParameterDomainError(f"p must lie in (0, 1], got {self.p}")
        if self.gamma_policy not in ("theoretical", "explicit"):
            raise ParameterDomainError(
                f"gamma_policy must be 'theoretical' or 'explicit', got {self.gamma_policy!r}"
            )
        if self.gamma_policy == "explicit" and (self.gamma is None or self.gamma <= 0):
            raise ParameterDomainError("explicit gamma_policy needs gamma > 0")
        if self.x0_radius < 0:
            raise ParameterDomainError("x0_radius must be >= 0")

    @property
    def p_effective(self) -> float:
        return self.p if self.p is not None else 1.0 / self.n


@dataclass(frozen=True)
class CellResult:
    """Averaged trajectory of one cell plus its realized constants."""

    config: RunConfig
    delta_sq: float
    mu: float
    gamma: float
    p: float
    mean_sq_dist: np.ndarray
    stderr_sq_dist: np.ndarray


@dataclass(frozen=True)
class FitResult:
    """Log-linear OLS fit of a trajectory."""

    slope: float
    intercept: float
    rho_emp: float
    rho_alt: float
    r_squared: float
    n_points: int
    floor: float


@dataclass(frozen=True)
class RateReport:
    """Empirical vs theoretical contraction for one cell."""

    n: int
    s: float
    delta_sq: float
    gamma: float
    p: float
    slope: float
    rho_emp: float
    rho_alt: float
    r_squared: float
    rho_theory: float

    @property
    def margin(self) -> float:
        return self.rho_theory - self.rho_emp


@dataclass(frozen=True)
class GridFailure:
    n: int
    s: float
    seed: int
    message: str


@dataclass(frozen=True)
class GridResult:
    reports: list[RateReport]
    failures: list[GridFailure]
    cells: list[CellResult]
    manifest: dict = field(repr=False)


def default_x0(stats: ProblemStats, config: RunConfig) -> np.ndarray:
    """Start point at distance ``x0_radius`` from the minimiser, drawn from
    the cell's dedicated stream."""
    rng = np.random.default_rng(mix_seed(config.seed, _X0_STREAM))
    direction = rng.standard_normal(config.d)
    norm = float(np.linalg.norm(direction))
    while norm == 0.0:
        direction = rng.standard_normal(config.d)
        norm = float(np.linalg.norm(direction))
    return stats.x_star + config.x0_radius * (direction / norm)


def resolve_gamma(config: RunConfig, stats: ProblemStats, p: float) -> float:
    """Stepsize for a cell: explicit value, or the closed-form rule on the
    realized dissimilarity with the ``p/(3 mu)`` fallback at ``delta = 0``."""
    if config.gamma_policy == "explicit":
        return float(config.gamma)
    delta = math.sqrt(stats.delta_sq)
    if delta > 0.0:
        return theoretical_stepsize(delta, p)
    warnings.warn(
        "instance has zero Hessian dissimilarity; substituting the "
        "fallback stepsize p/(3*mu)",
        stacklevel=2,
    )
    return fallback_stepsize(stats.mu, p)


def averaged_metrics(
    problem: QuadraticProblem,
    stats: ProblemStats,
    method: MethodConfig,
    x0: np.ndarray,
    K: int,
    repeats: int,
    base_seed: int,
    threads: int = 1,
    prox: QuadraticProxCache | None = None,
    record: Sequence[str] = ("sq_dist",),
) -> dict[str, np.ndarray]:
    """Per-repeat metric matrices, shape (repeats, K+1) each.

    Repeat ``r`` uses seed ``mix_seed(base_seed, r)``.  Rows are filled into
    a preallocated array indexed by repeat, so results do not depend on the
    worker count.
    """
    record = tuple(record)
    out = {name: np.empty((repeats, K + 1)) for name in record}

    def one_repeat(r: int) -> None:
        rec = run(
            problem,
            method,
            x0,
            K=K,
            seed=mix_seed(base_seed, r),
            record=record,
            stats=stats,
            prox=prox,
        )
        for name in record:
            values = getattr(rec, name)
            if not np.isfinite(values).all():
                bad = int(np.flatnonzero(~np.isfinite(values))[0])
                raise NumericalFailure(
                    f"repeat {r} (seed {mix_seed(base_seed, r)}) produced a "
                    f"non-finite {name} at iteration {bad} "
                    f"(method={method.method}, gamma={method.gamma!r})"
                )
            out[name][r] = values

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one_repeat, range(repeats)))
    else:
        for r in range(repeats):
            one_repeat(r)
    return out


def run_cell(
    config: RunConfig, x0: np.ndarray | None = None, threads: int = 1
) -> CellResult:
    """Generate the cell's instance and average L-SVRP over its repeats."""
    problem = generate_quadratic(config.n, config.d, config.s, config.seed)
    stats = compute_stats(problem)
    p = config.p_effective
    gamma = resolve_gamma(config, stats, p)
    if x0 is None:
        x0 = default_x0(stats, config)
    method = MethodConfig("lsvrp", gamma, p=p)
    prox = QuadraticProxCache(problem, gamma)
    metrics = averaged_metrics(
        problem, stats, method, x0, config.K, config.repeats,
        config.seed, threads=threads, prox=prox,
    )
    samples = metrics["sq_dist"]
    mean = samples.mean(axis=0)
    if config.repeats > 1:
        stderr = samples.std(axis=0, ddof=1) / math.sqrt(config.repeats)
    else:
        stderr = np.zeros_like(mean)
    return CellResult(
        config=config,
        delta_sq=stats.delta_sq,
        mu=stats.mu,
        gamma=gamma,
        p=p,
        mean_sq_dist=mean,
        stderr_sq_dist=stderr,
    )


def default_floor(trajectory: np.ndarray) -> float:
    """Fit floor ``max(1e-20, 1e-12 * initial value)``: points below it sit
    on the solver noise floor and are excluded from the rate fit."""
    return max(1e-20, 1e-12 * float(trajectory[0]))


def fit_rate(trajectory: np.ndarray, floor: float | None = None) -> FitResult:
    """Ordinary least squares of ``log(value)`` against the iteration index.

    Fits over the indices whose value exceeds the floor (all pre-floor
    indices, including 0).  ``rho_emp = exp(slope)`` is the per-iteration
    geometric factor; ``rho_alt = 1 - |slope|`` is the first-order variant
    of the same statistic, reported alongside.

    Raises:
        InsufficientDecayError: with fewer than 10 usable points.
    """
    y = np.asarray(trajectory, dtype=np.float64)
    if y.ndim != 1:
        raise ParameterDomainError("trajectory must be one-dimensional")
    if floor is None:
        floor = default_floor(y)
    if floor <= 0:
        raise ParameterDomainError(f"floor must be > 0, got {floor}")
    mask = y > floor
    n_points = int(mask.sum())
    if n_points < 10:
        raise InsufficientDecayError(
            f"only {n_points} trajectory points above floor {floor:.3e}; "
            "need at least 10 for a rate fit"
        )
    k = np.flatnonzero(mask).astype(np.float64)
    ln_y = np.log(y[mask])
    k_centered = k - k.mean()
    var_k = float(k_centered @ k_centered)
    slope = float(k_centered @ (ln_y - ln_y.mean())) / var_k
    intercept = float(ln_y.mean() - slope * k.mean())
    residuals = ln_y - (intercept + slope * k)
    ss_res = float(residuals @ residuals)
    centered = ln_y - ln_y.mean()
    ss_tot = float(centered @ centered)
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return FitResult(
        slope=slope,
        intercept=intercept,
        rho_emp=float(np.exp(slope)),
        rho_alt=1.0 - abs(slope),
        r_squared=r_squared,
        n_points=n_points,
        floor=floor,
    )


def report_from_cell(cell: CellResult) -> RateReport:
    fit = fit_rate(cell.mean_sq_dist)
    return RateReport(
        n=cell.config.n,
        s=cell.config.s,
        delta_sq=cell.delta_sq,
        gamma=cell.gamma,
        p=cell.p,
        slope=fit.slope,
        rho_emp=fit.rho_emp,
        rho_alt=fit.rho_alt,
        r_squared=fit.r_squared,
        rho_theory=theoretical_rate(cell.mu, cell.gamma, cell.p),
    )


def build_manifest(scale: str = "full", base_seed: int = 0, d: int = 100) -> dict:
    """Grid manifest for a preset scale; cell seeds hash (base seed, index)."""
    if scale not in ("desk", "full"):
        raise ParameterDomainError(f"scale must be 'desk' or 'full', got {scale!r}")
    preset = DESK_GRID if scale == "desk" else FULL_GRID
    cells = []
    index = 0
    for n in preset["n_values"]:
        for s in preset["s_values"]:
            cells.append(
                {"n": n, "s": s, "seed": mix_seed(base_seed, index), "p": 1.0 / n}
            )
            index += 1
    return {
        "schema": MANIFEST_SCHEMA,
        "scale": scale,
        "base_seed": int(base_seed),
        "defaults": {
            "d": d,
            "K": preset["K"],
            "repeats": preset["repeats"],
            "gamma_policy": "theoretical",
            "x0_radius": 10.0,
        },
        "cells": cells,
    }


def load_manifest(data: dict) -> list[RunConfig]:
    """Validate a manifest dict and expand it into cell configs."""
    if not isinstance(data, dict):
        raise ManifestError("manifest must be a JSON object")
    if data.get("schema") != MANIFEST_SCHEMA:
        raise ManifestError(
            f"manifest schema must be {MANIFEST_SCHEMA!r}, got {data.get('schema')!r}"
        )
    defaults = data.get("defaults", {})
    if not isinstance(defaults, dict):
        raise ManifestError("manifest 'defaults' must be an object")
    cells = data.get("cells")
    if not isinstance(cells, list) or not cells:
        raise ManifestError("manifest needs a non-empty 'cells' list")
    configs = []
    for idx, cell in enumerate(cells):
        if not isinstance(cell, dict):
            raise ManifestError(f"cell {idx} must be an object")
        missing = {"n", "s", "seed"} - set(cell)
        if missing:
            raise ManifestError(f"cell {idx} is missing keys {sorted(missing)}")
        merged = {**defaults, **cell}
        try:
            configs.append(
                RunConfig(
                    n=int(merged["n"]),
                    s=float(merged["s"]),
                    seed=int(merged["seed"]),
                    d=int(merged.get("d", 100)),
                    p=merged.get("p"),
                    K=int(merged.get("K", 1000)),
                    repeats=int(merged.get("repeats", 200)),
                    gamma_policy=merged.get("gamma_policy", "theoretical"),
                    gamma=merged.get("gamma"),
                    x0_radius=float(merged.get("x0_radius", 10.0)),
                )
            )
        except (ParameterDomainError, TypeError, ValueError) as exc:
            raise ManifestError(f"cell {idx} is invalid: {exc}") from exc
    return configs


def run_manifest(manifest: dict, threads: int = 1) -> GridResult:
    """Run every cell of a manifest; per-cell failures are recorded and the
    grid continues."""
    configs = load_manifest(manifest)
    reports: list[RateReport] = []
    failures: list[GridFailure] = []
    cells: list[CellResult] = []
    for config in configs:
        try:
            cell = run_cell(config, threads=threads)
            reports.append(report_from_cell(cell))
            cells.append(cell)
        except Exception as exc:  # noqa: BLE001 - failures are data here
            failures.append(
                GridFailure(
                    n=config.n, s=config.s, seed=config.seed, message=repr(exc)
                )
            )
    return GridResult(reports=reports, failures=failures, cells=cells, manifest=manifest)


def run_grid(base_seed: int = 0, scale: str = "full", threads: int = 1) -> GridResult:
    """Run a preset grid (``desk``: 2x2 cells, K=500, 50 repeats; ``full``:
    6x8 cells, K=1000, 200 repeats)."""
    return run_manifest(build_manifest(scale, base_seed), threads=threads)


def compare_rates(reports: Sequence[RateReport]) -> list[dict]:
    """Comparison rows sorted by (n, s), one per cell, with the
    theory-minus-empirical margin."""
    if not reports:
        raise ParameterDomainError("no rate reports to compare")
    rows = []
    for rep in sorted(reports, key=lambda r: (r.n, r.s)):
        rows.append(
            {
                "n": rep.n,
                "s": rep.s,
                "delta_sq": rep.delta_sq,
                "gamma": rep.gamma,
                "p": rep.p,
                "slope": rep.slope,
                "rho_emp": rep.rho_emp,
                "rho_alt": rep.rho_alt,
                "r_squared": rep.r_squared,
                "rho_theory": rep.rho_theory,
                "margin": rep.margin,
            }
        )
    return rows


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def write_trajectory_csv(
    path: str | Path,
    mean_sq_dist: np.ndarray,
    lyapunov: np.ndarray | None = None,
    f_gap: np.ndarray | None = None,
) -> None:
    """Trajectory CSV: columns ``k,mean_sq_dist[,lyapunov,f_gap]``, decimal
    text with 17 significant digits."""
    header = ["k", "mean_sq_dist"]
    columns = [mean_sq_dist]
    if lyapunov is not None:
        header.append("lyapunov")
        columns.append(lyapunov)
    if f_gap is not None:
        header.append("f_gap")
        columns.append(f_gap)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(len(mean_sq_dist)):
            writer.writerow([k] + [_fmt(col[k]) for col in columns])


def read_trajectory_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Read a trajectory CSV back into named float arrays (including k)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "k" or "mean_sq_dist" not in header:
            raise ParameterDomainError(
                f"{path!r} is not a trajectory CSV (header {header!r})"
            )
        rows = [row for row in reader if row]
    data = np.array(rows, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ParameterDomainError(f"{path!r} has ragged rows")
    return {name: data[:, j] for j, name in enumerate(header)}


_RATES_HEADER = [
    "n", "s", "delta_sq", "gamma", "p", "slope",
    "rho_emp", "rho_alt", "r_squared", "rho_theory", "margin",
]


def write_rates_csv(path: str | Path, reports: Sequence[RateReport]) -> None:
    rows = compare_rates(reports)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_RATES_HEADER)
        for row in rows:
            writer.writerow(
                [row["n"], _fmt(row["s"])]
                + [_fmt(row[name]) for name in _RATES_HEADER[2:]]
            )


def read_rates_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _RATES_HEADER:
            raise ParameterDomainError(
                f"{path!r} is not a rates CSV (header {header!r})"
            )
        rows = []
        for row in reader:
            if not row:
                continue
            record = dict(zip(header, (float(v) for v in row)))
            record["n"] = int(record["n"])
            rows.append(record)
    return rows
