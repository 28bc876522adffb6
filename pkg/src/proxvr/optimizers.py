"""The five stochastic methods behind one stepping interface.

Explicit methods update with a gradient evaluated at the current iterate:

* SGD:      ``x' = x - gamma * g_i(x)``
* SVRG:     ``x' = x - gamma * (g_i(x) - g_i(w) + g(w))``, reference ``w``
            reset to the iterate every ``m`` steps;
* L-SVRG:   same estimator, reference reset with probability ``p`` instead
            of on a schedule.

Implicit (proximal) methods evaluate the component gradient at the *next*
iterate, i.e. they apply the component prox:

* SPPM:     ``x' = prox_{gamma f_i}(x)``
* L-SVRP:   ``x' = prox_{gamma f_i}(x + gamma * (g_i(w) - g(w)))``, with the
            same probability-``p`` reference reset as L-SVRG.  Through the
            prox fixed-point identity this is exactly
            ``x' = x - gamma * (g_i(x') - g_i(w) + g(w))``, the implicit
            twin of the L-SVRG update.

Every step draws from a single per-run stream in a fixed order (component
index first, then the reference coin where one is needed), so trajectories
of different methods under a shared seed see the same index sequence and
runs are bit-reproducible.  Steps return a new state; the cached full
gradient at the reference point is recomputed exactly when the reference
changes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from proxvr.errors import ParameterDomainError
from proxvr.problems import (
    ProblemStats,
    QuadraticProblem,
    compute_stats,
    f_value,
    grad_component,
    grad_full,
)
from proxvr.prox import QuadraticProxCache, prox_quadratic
from proxvr.theory import certificate_recipe, lyapunov

__all__ = [
    "METHODS",
    "MethodConfig",
    "OptimizerState",
    "RunRecord",
    "init_state",
    "sgd_step",
    "svrg_step",
    "lsvrg_step",
    "sppm_step",
    "lsvrp_step",
    "svrg_run",
    "run",
]

METHODS = ("sgd", "svrg", "lsvrg", "sppm", "lsvrp")
_NEEDS_REFERENCE = frozenset({"svrg", "lsvrg", "lsvrp"})
_NEEDS_PROX = frozenset({"sppm", "lsvrp"})
_RECORD_CHOICES = frozenset({"sq_dist", "lyapunov", "f_gap", "iterates"})


@dataclass(frozen=True)
class MethodConfig:
    """Which method to run and with what constants.

    ``p`` is the reference-refresh probability (L-SVRG / L-SVRP only) and
    ``m`` the reference period (SVRG only).
    """

    method: str
    gamma: float
    p: float | None = None
    m: int | None = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ParameterDomainError(
                f"method must be one of {METHODS}, got {self.method!r}"
            )
        if not np.isfinite(self.gamma) or self.gamma <= 0:
            raise ParameterDomainError(f"gamma must be > 0, got {self.gamma}")
        if self.method in ("lsvrg", "lsvrp"):
            if self.p is None or not 0.0 < self.p <= 1.0:
                raise ParameterDomainError(
                    f"{self.method} needs p in (0, 1], got {self.p}"
                )
        if self.method == "svrg":
            if self.m is None or self.m < 1:
                raise ParameterDomainError(f"svrg needs m >= 1, got {self.m}")


@dataclass(frozen=True)
class OptimizerState:
    """Iterate, reference point and per-run randomness.

    ``full_grad_at_w`` caches the full gradient at ``w`` for the
    variance-reduced methods and is ``None`` otherwise.  The ``rng`` handle
    is shared between successive states of one run and advances as steps
    are taken; everything else is immutable.
    """

    x: np.ndarray
    w: np.ndarray
    k: int
    rng: np.random.Generator
    full_grad_at_w: np.ndarray | None = None


def init_state(
    problem: QuadraticProblem,
    x0: np.ndarray,
    w0: np.ndarray | None = None,
    rng: np.random.Generator | int = 0,
    with_reference: bool = True,
) -> OptimizerState:
    """Build the step-0 state; ``w0`` defaults to ``x0``."""
    x0 = np.array(x0, dtype=np.float64)
    if x0.shape != (problem.d,):
        raise ParameterDomainError(
            f"x0 must have shape ({problem.d},), got {x0.shape}"
        )
    w0 = x0.copy() if w0 is None else np.array(w0, dtype=np.float64)
    if w0.shape != x0.shape:
        raise ParameterDomainError("w0 must match the shape of x0")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    cache = grad_full(problem, w0) if with_reference else None
    return OptimizerState(x=x0, w=w0, k=0, rng=rng, full_grad_at_w=cache)


def _draw_index(problem: QuadraticProblem, state: OptimizerState) -> int:
    return int(state.rng.integers(problem.n))


def sgd_step(
    problem: QuadraticProblem, state: OptimizerState, gamma: float
) -> OptimizerState:
    """One step ``x' = x - gamma * g_i(x)`` with ``i`` drawn uniformly."""
    i = _draw_index(problem, state)
    x_new = state.x - gamma * grad_component(problem, i, state.x)
    return replace(state, x=x_new, k=state.k + 1)


def _reduced_direction(
    problem: QuadraticProblem, state: OptimizerState, i: int
) -> np.ndarray:
    # g_i(x) + (g(w) - g_i(w)); the correction is an exact zero vector
    # whenever both reference gradients are computed from identical inputs
    # (n = 1, or w equal to x), which keeps the reduction laws bitwise.
    gx = grad_component(problem, i, state.x)
    gw = grad_component(problem, i, state.w)
    return gx + (state.full_grad_at_w - gw)


def svrg_step(
    problem: QuadraticProblem, state: OptimizerState, gamma: float, m: int
) -> OptimizerState:
    """Variance-reduced step; the reference moves when ``k+1`` hits the
    period ``m``."""
    if m < 1:
        raise ParameterDomainError(f"m must be >= 1, got {m}")
    i = _draw_index(problem, state)
    x_new = state.x - gamma * _reduced_direction(problem, state, i)
    k_new = state.k + 1
    if k_new % m == 0:
        return replace(
            state, x=x_new, w=x_new, k=k_new,
            full_grad_at_w=grad_full(problem, x_new),
        )
    return replace(state, x=x_new, k=k_new)


def lsvrg_step(
    problem: QuadraticProblem, state: OptimizerState, gamma: float, p: float
) -> OptimizerState:
    """Variance-reduced step with a probability-``p`` reference reset."""
    i = _draw_index(problem, state)
    x_new = state.x - gamma * _reduced_direction(problem, state, i)
    refresh = state.rng.random() < p
    if refresh:
        return replace(
            state, x=x_new, w=x_new, k=state.k + 1,
            full_grad_at_w=grad_full(problem, x_new),
        )
    return replace(state, x=x_new, k=state.k + 1)


def sppm_step(
    problem: QuadraticProblem,
    state: OptimizerState,
    gamma: float,
    prox: QuadraticProxCache | None = None,
) -> OptimizerState:
    """Proximal-point step ``x' = prox_{gamma f_i}(x)``.

    The output satisfies the implicit form
    ``x' = x - gamma * g_i(x')`` to solver precision.
    """
    _check_cache(prox, gamma)
    i = _draw_index(problem, state)
    if prox is not None:
        x_new = prox.prox(i, state.x)
    else:
        x_new = prox_quadratic(
            problem.matrices[i], problem.offsets[i], gamma, state.x
        )
    return replace(state, x=x_new, k=state.k + 1)


def lsvrp_step(
    problem: QuadraticProblem,
    state: OptimizerState,
    gamma: float,
    p: float,
    prox: QuadraticProxCache | None = None,
) -> OptimizerState:
    """Variance-reduced proximal step with probability-``p`` reference reset.

    Applies the component prox at the shifted anchor
    ``x + gamma * (g_i(w) - g(w))``; equivalently the output solves
    ``x' = x - gamma * (g_i(x') - g_i(w) + g(w))``.
    """
    _check_cache(prox, gamma)
    i = _draw_index(problem, state)
    shift = grad_component(problem, i, state.w) - state.full_grad_at_w
    anchor = state.x + gamma * shift
    if prox is not None:
        x_new = prox.prox(i, anchor)
    else:
        x_new = prox_quadratic(problem.matrices[i], problem.offsets[i], gamma, anchor)
    refresh = state.rng.random() < p
    if refresh:
        return replace(
            state, x=x_new, w=x_new, k=state.k + 1,
            full_grad_at_w=grad_full(problem, x_new),
        )
    return replace(state, x=x_new, k=state.k + 1)


def _check_cache(prox: QuadraticProxCache | None, gamma: float) -> None:
    # Cache reuse is only sound for the exact same stepsize bits.
    if prox is not None and prox.gamma != gamma:
        raise ParameterDomainError(
            f"prox cache was built for gamma={prox.gamma!r}, step uses {gamma!r}"
        )


def svrg_run(
    problem: QuadraticProblem,
    x0: np.ndarray,
    w0: np.ndarray | None,
    gamma: float,
    m: int,
    K: int,
    rng: np.random.Generator | int,
) -> np.ndarray:
    """Run SVRG for ``K`` steps and return the iterates, shape (K+1, d)."""
    if K < 1:
        raise ParameterDomainError(f"K must be >= 1, got {K}")
    state = init_state(problem, x0, w0, rng)
    iterates = np.empty((K + 1, problem.d))
    iterates[0] = state.x
    for k in range(K):
        state = svrg_step(problem, state, gamma, m)
        iterates[k + 1] = state.x
    return iterates


@dataclass(frozen=True)
class RunRecord:
    """Metric trajectories of one run; entries cover k = 0..K."""

    sq_dist: np.ndarray
    lyapunov: np.ndarray | None = None
    f_gap: np.ndarray | None = None
    iterates: np.ndarray | None = None
    final_state: OptimizerState | None = None


def run(
    problem: QuadraticProblem,
    config: MethodConfig,
    x0: np.ndarray,
    w0: np.ndarray | None = None,
    K: int = 1000,
    seed: int | np.random.Generator = 0,
    record: Iterable[str] = ("sq_dist",),
    stats: ProblemStats | None = None,
    prox: QuadraticProxCache | None = None,
    lyapunov_weight: float | None = None,
) -> RunRecord:
    """Run any configured method for ``K`` steps, recording metrics at every
    iterate including step 0.

    ``record`` selects among ``sq_dist`` (squared distance to the
    minimiser), ``lyapunov`` (needs a refresh probability in the config;
    the weight defaults to the certificate recipe), ``f_gap``
    (``f(x_k) - f_star``) and ``iterates`` (raw points, for diagnostics).
    Deterministic for a fixed seed.
    """
    if K < 1:
        raise ParameterDomainError(f"K must be >= 1, got {K}")
    record = tuple(record)
    unknown = set(record) - _RECORD_CHOICES
    if unknown:
        raise ParameterDomainError(f"unknown record selectors: {sorted(unknown)}")
    if stats is None:
        stats = compute_stats(problem)

    want_lyap = "lyapunov" in record
    if want_lyap and lyapunov_weight is None:
        if config.p is None:
            raise ParameterDomainError(
                "lyapunov recording needs an explicit weight for methods "
                "without a refresh probability"
            )
        lyapunov_weight = certificate_recipe(
            np.sqrt(stats.delta_sq), stats.mu, config.gamma, config.p
        ).c

    if config.method in _NEEDS_PROX and prox is None:
        prox = QuadraticProxCache(problem, config.gamma)

    state = init_state(
        problem, x0, w0, seed, with_reference=config.method in _NEEDS_REFERENCE
    )

    sq_dist = np.empty(K + 1)
    lyap = np.empty(K + 1) if want_lyap else None
    f_gap = np.empty(K + 1) if "f_gap" in record else None
    iterates = np.empty((K + 1, problem.d)) if "iterates" in record else None

    def observe(idx: int, st: OptimizerState) -> None:
        err = st.x - stats.x_star
        sq_dist[idx] = err @ err
        if lyap is not None:
            lyap[idx] = lyapunov(st.x, st.w, stats.x_star, lyapunov_weight)
        if f_gap is not None:
            f_gap[idx] = f_value(problem, st.x) - stats.f_star
        if iterates is not None:
            iterates[idx] = st.x

    observe(0, state)
    for k in range(K):
        if config.method == "sgd":
            state = sgd_step(problem, state, config.gamma)
        elif config.method == "svrg":
            state = svrg_step(problem, state, config.gamma, config.m)
        elif config.method == "lsvrg":
            state = lsvrg_step(problem, state, config.gamma, config.p)
        elif config.method == "sppm":
            state = sppm_step(problem, state, config.gamma, prox)
        else:
            state = lsvrp_step(problem, state, config.gamma, config.p, prox)
        observe(k + 1, state)

    return RunRecord(
        sq_dist=sq_dist,
        lyapunov=lyap,
        f_gap=f_gap,
        iterates=iterates,
        final_state=state,
    )
