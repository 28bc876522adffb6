"""Synthetic quadratic finite-sum instances and their derived constants.

A problem bundles ``n`` component functions

    f_i(x) = 0.5 * x @ A_i @ x + b_i @ x,       i = 0, ..., n - 1,

with symmetric positive-semidefinite Hessians ``A_i`` and offset vectors
``b_i`` whose mean is zero (which rules out the interpolation regime: the
component minimisers do not coincide).  The objective is the uniform
average ``f = (1/n) sum_i f_i``.

Besides construction, gradients and serialization, this module derives the
constants the rate analysis consumes:

* the Hessian-dissimilarity constant
  ``delta^2 = || (1/n) sum_i A_i^2 - Abar^2 ||`` (spectral norm, where
  ``Abar`` is the average Hessian), which is the exact supremum of the
  sampled gradient-deviation ratio checked by
  :func:`check_hessian_similarity`;
* the strong-convexity constant ``mu = min_i lambda_min(A_i)``;
* the minimiser ``x_star`` of ``f`` and the optimal value ``f_star``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

import numpy as np
import scipy.linalg

from proxvr.errors import NumericalFailure, ParameterDomainError

__all__ = [
    "QuadraticProblem",
    "ProblemStats",
    "generate_quadratic",
    "compute_stats",
    "hessian_dissimilarity",
    "grad_component",
    "grad_full",
    "f_value",
    "check_hessian_similarity",
    "save_problem",
    "load_problem",
]

_SYMMETRY_RTOL = 1e-12
_MEAN_OFFSET_RTOL = 1e-10
_STATIONARITY_RTOL = 1e-10
_PROBLEM_FORMAT = "proxvr-problem/1"


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class QuadraticProblem:
    """A finite sum of convex quadratics.

    Attributes:
        matrices: Hessians, shape ``(n, d, d)``; each symmetric PSD.
        offsets: linear terms, shape ``(n, d)``; mean over components is zero.

    Instances are immutable (arrays are marked read-only) and safe to share
    across threads.  The averages ``a_bar`` and ``b_bar`` are precomputed.
    """

    matrices: np.ndarray
    offsets: np.ndarray
    a_bar: np.ndarray = field(init=False, repr=False, compare=False)
    b_bar: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        mats = _readonly(self.matrices)
        offs = _readonly(self.offsets)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise ParameterDomainError(
                f"matrices must have shape (n, d, d), got {mats.shape}"
            )
        if offs.ndim != 2 or offs.shape != mats.shape[:2]:
            raise ParameterDomainError(
                f"offsets must have shape (n, d) = {mats.shape[:2]}, got {offs.shape}"
            )
        n, d = offs.shape
        if n < 1 or d < 1:
            raise ParameterDomainError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
        if not (np.isfinite(mats).all() and np.isfinite(offs).all()):
            raise ParameterDomainError("matrices and offsets must be finite")

        scale = np.abs(mats).max(axis=(1, 2))
        asym = np.abs(mats - mats.transpose(0, 2, 1)).max(axis=(1, 2))
        if np.any(asym > _SYMMETRY_RTOL * np.maximum(scale, np.finfo(float).tiny)):
            worst = int(np.argmax(asym - _SYMMETRY_RTOL * scale))
            raise ParameterDomainError(
                f"matrix {worst} is not symmetric to within {_SYMMETRY_RTOL:g} relative"
            )
        for i in range(n):
            lam = np.linalg.eigvalsh(mats[i])
            if lam[0] < -1e-8 * max(1.0, lam[-1]):
                raise ParameterDomainError(
                    f"matrix {i} is not positive semidefinite "
                    f"(lambda_min = {lam[0]:.3e})"
                )

        mean_off = offs.mean(axis=0)
        off_scale = float(np.linalg.norm(offs, axis=1).max())
        if float(np.linalg.norm(mean_off)) > _MEAN_OFFSET_RTOL * off_scale:
            raise ParameterDomainError(
                "offsets must have zero mean: ||mean b_i|| = "
                f"{np.linalg.norm(mean_off):.3e} exceeds "
                f"{_MEAN_OFFSET_RTOL:g} * max ||b_i||"
            )

        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "offsets", offs)
        object.__setattr__(self, "a_bar", _readonly(mats.mean(axis=0)))
        object.__setattr__(self, "b_bar", _readonly(mean_off))

    @property
    def n(self) -> int:
        return self.matrices.shape[0]

    @property
    def d(self) -> int:
        return self.matrices.shape[1]


@dataclass(frozen=True, eq=False)
class ProblemStats:
    """Derived constants of a :class:`QuadraticProblem`.

    Attributes:
        delta_sq: Hessian dissimilarity, spectral norm of
            ``(1/n) sum_i A_i^2 - Abar^2``.
        mu: strong-convexity constant, ``min_i lambda_min(A_i)``.
        l_max: largest per-component smoothness, ``max_i lambda_max(A_i)``.
        x_star: minimiser of the averaged objective.
        f_star: optimal value ``f(x_star)``.
    """

    delta_sq: float
    mu: float
    l_max: float
    x_star: np.ndarray
    f_star: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "x_star", _readonly(self.x_star))


def generate_quadratic(n: int, d: int, s: float, seed: int) -> QuadraticProblem:
    """Draw a random quadratic finite-sum instance.

    Each Hessian is ``A_i = Q_i D_i Q_i^T`` with ``Q_i`` Haar-orthogonal
    (QR of an i.i.d. standard-normal matrix, columns sign-corrected so the
    triangular factor has positive diagonal) and ``D_i`` diagonal with
    entries i.i.d. uniform on ``[1, s]``, so every eigenvalue lies in
    ``[1, s]`` and strong convexity holds with constant at least 1.
    Offsets are i.i.d. standard normal, recentred so their sum is exactly
    zero.

    Randomness is drawn from per-matrix child streams spawned off
    ``numpy.random.SeedSequence(seed)`` (PCG64), so each block is
    independent of generation order and the output is bit-reproducible for
    a fixed seed.

    Args:
        n: number of component functions, ``>= 1``.
        d: dimension, ``>= 1``.
        s: eigenvalue ceiling, ``>= 1``.
        seed: 64-bit integer seed.

    Raises:
        ParameterDomainError: if ``n < 1``, ``d < 1`` or ``s < 1``.
    """
    if n < 1:
        raise ParameterDomainError(f"n must be >= 1, got {n}")
    if d < 1:
        raise ParameterDomainError(f"d must be >= 1, got {d}")
    if not np.isfinite(s) or s < 1:
        raise ParameterDomainError(f"s must be a finite value >= 1, got {s}")

    root = np.random.SeedSequence(seed)
    children = root.spawn(n + 1)
    matrices = np.empty((n, d, d), dtype=np.float64)
    for i in range(n):
        rng = np.random.default_rng(children[i])
        z = rng.standard_normal((d, d))
        q, r = np.linalg.qr(z)
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        q = q * signs
        eigenvalues = rng.uniform(1.0, float(s), size=d)
        a = (q * eigenvalues) @ q.T
        matrices[i] = 0.5 * (a + a.T)

    rng_b = np.random.default_rng(children[n])
    offsets = rng_b.standard_normal((n, d))
    offsets -= offsets.mean(axis=0)
    return QuadraticProblem(matrices=matrices, offsets=offsets)


def hessian_dissimilarity(problem: QuadraticProblem) -> float:
    """Spectral norm of ``(1/n) sum_i A_i^2 - Abar^2``.

    Computed by exact symmetric eigendecomposition of the d x d
    dissimilarity matrix; the matrix is PSD up to rounding, so the norm is
    the largest eigenvalue magnitude.
    """
    mats = problem.matrices
    square_mean = np.matmul(mats, mats).mean(axis=0)
    dev = square_mean - problem.a_bar @ problem.a_bar
    dev = 0.5 * (dev + dev.T)
    return float(np.abs(np.linalg.eigvalsh(dev)).max())


def compute_stats(problem: QuadraticProblem) -> ProblemStats:
    """Derive the rate-analysis constants of a problem.

    The minimiser solves ``Abar x = -bbar`` by a symmetric positive-definite
    factorisation; its stationarity residual is verified against
    ``1e-10 * (1 + ||bbar||)``.

    Raises:
        NumericalFailure: if ``Abar`` is singular to working precision or
            the stationarity residual check fails.
    """
    per_matrix = np.array([np.linalg.eigvalsh(a) for a in problem.matrices])
    mu = float(per_matrix[:, 0].min())
    l_max = float(per_matrix[:, -1].max())
    delta_sq = hessian_dissimilarity(problem)

    try:
        factor = scipy.linalg.cho_factor(problem.a_bar)
        x_star = scipy.linalg.cho_solve(factor, -problem.b_bar)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalFailure(
            "average Hessian is singular to working precision; "
            "the minimiser of f is not unique"
        ) from exc

    residual = float(np.linalg.norm(problem.a_bar @ x_star + problem.b_bar))
    allowed = _STATIONARITY_RTOL * (1.0 + float(np.linalg.norm(problem.b_bar)))
    if residual > allowed:
        raise NumericalFailure(
            f"stationarity residual {residual:.3e} exceeds {allowed:.3e}"
        )

    return ProblemStats(
        delta_sq=delta_sq,
        mu=mu,
        l_max=l_max,
        x_star=x_star,
        f_star=f_value(problem, x_star),
    )


def _component_grads(problem: QuadraticProblem, x: np.ndarray) -> np.ndarray:
    """All component gradients ``A_i x + b_i`` stacked into shape (n, d)."""
    return problem.matrices @ x + problem.offsets


def grad_component(problem: QuadraticProblem, i: int, x: np.ndarray) -> np.ndarray:
    """Gradient of the i-th component, ``A_i x + b_i``."""
    if not 0 <= i < problem.n:
        raise IndexError(f"component index {i} out of range [0, {problem.n})")
    return problem.matrices[i] @ x + problem.offsets[i]


def grad_full(problem: QuadraticProblem, x: np.ndarray) -> np.ndarray:
    """Gradient of the averaged objective, computed as the average of
    component gradients."""
    return _component_grads(problem, x).mean(axis=0)


def f_value(problem: QuadraticProblem, x: np.ndarray) -> float:
    """Value of the averaged objective ``0.5 x @ Abar @ x + bbar @ x``."""
    return float(0.5 * x @ (problem.a_bar @ x) + problem.b_bar @ x)


def check_hessian_similarity(
    problem: QuadraticProblem,
    stats: ProblemStats | None = None,
    trials: int = 1000,
    seed: int = 0,
) -> float:
    """Sample the gradient-deviation ratio behind the dissimilarity constant.

    Draws ``trials`` random pairs ``(x, y)`` (standard normal, degenerate
    ``x == y`` pairs resampled) and returns the maximum of

        (1/n) sum_i ||g_i(x) - g_i(y) - (g(x) - g(y))||^2 / ||x - y||^2

    where ``g_i`` are component gradients and ``g`` the full gradient.  The
    constant ``stats.delta_sq`` is the exact supremum of this ratio, so the
    sampled maximum can never legitimately exceed it.

    Args:
        problem: instance to sample.
        stats: when given, the result is checked against
            ``stats.delta_sq * (1 + 1e-8)``.
        trials: number of pairs, ``>= 1``.
        seed: RNG seed for the pair stream.

    Raises:
        NumericalFailure: if ``stats`` is given and the sampled ratio
            exceeds the bound (which indicates an implementation bug).
    """
    if trials < 1:
        raise ParameterDomainError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    d = problem.d
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(d)
        y = rng.standard_normal(d)
        gap_sq = float(np.dot(x - y, x - y))
        while gap_sq == 0.0:
            y = rng.standard_normal(d)
            gap_sq = float(np.dot(x - y, x - y))
        gx = _component_grads(problem, x)
        gy = _component_grads(problem, y)
        deviation = (gx - gy) - (gx.mean(axis=0) - gy.mean(axis=0))
        ratio = float((deviation**2).sum(axis=1).mean()) / gap_sq
        worst = max(worst, ratio)

    if stats is not None and worst > stats.delta_sq * (1.0 + 1e-8):
        raise NumericalFailure(
            f"sampled similarity ratio {worst:.12e} exceeds "
            f"delta_sq {stats.delta_sq:.12e}"
        )
    return worst


def save_problem(
    path: str | Path | IO[bytes],
    problem: QuadraticProblem,
    s: float | None = None,
    seed: int | None = None,
) -> None:
    """Write a problem container (NumPy ``.npz``); round-trips bit-exactly.

    The container stores ``n``, ``d``, the row-major Hessian blocks, the
    offset vectors and, when provided, the generating ``(s, seed)``.
    """
    payload: dict[str, np.ndarray] = {
        "format": np.array(_PROBLEM_FORMAT),
        "matrices": problem.matrices,
        "offsets": problem.offsets,
    }
    if s is not None:
        payload["s"] = np.array(float(s))
    if seed is not None:
        payload["seed"] = np.array(int(seed), dtype=np.uint64)
    if isinstance(path, (str, Path)):
        with open(path, "wb") as fh:
            np.savez(fh, **payload)
    else:
        np.savez(path, **payload)


def load_problem(path: str | Path | IO[bytes]) -> tuple[QuadraticProblem, dict]:
    """Read a problem container written by :func:`save_problem`.

    Returns the problem and a metadata dict holding ``s`` and ``seed`` when
    the container carries them.

    Raises:
        ParameterDomainError: if the file is not a problem container or its
            arrays violate the problem invariants.
    """
    try:
        with np.load(path, allow_pickle=False) as data:
            keys = set(data.files)
            if "format" not in keys or str(data["format"]) != _PROBLEM_FORMAT:
                raise ParameterDomainError(
                    f"{path!r} is not a {_PROBLEM_FORMAT} container"
                )
            if not {"matrices", "offsets"} <= keys:
                raise ParameterDomainError(f"{path!r} is missing problem arrays")
            problem = QuadraticProblem(
                matrices=data["matrices"], offsets=data["offsets"]
            )
            meta: dict = {}
            if "s" in keys:
                meta["s"] = float(data["s"])
            if "seed" in keys:
                meta["seed"] = int(data["seed"])
    except (OSError, ValueError) as exc:
        if isinstance(exc, (ParameterDomainError, FileNotFoundError)):
            raise
        raise ParameterDomainError(f"cannot read problem container {path!r}: {exc}") from exc
    return problem, meta
