"""Shared test oracles and instance builders."""

from __future__ import annotations

import numpy as np

from proxvr.problems import QuadraticProblem


def power_iteration_norm(
    matrix: np.ndarray, tol: float = 1e-10, max_iter: int = 100_000, seed: int = 0
) -> float:
    """Spectral norm of a symmetric PSD matrix by plain power iteration.

    Independent oracle for the eigensolver path; converges when the Rayleigh
    quotient is stable to ``tol`` relative.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(matrix.shape[0])
    v /= np.linalg.norm(v)
    estimate = float(v @ (matrix @ v))
    for _ in range(max_iter):
        w = matrix @ v
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        new_estimate = float(v @ (matrix @ v))
        if abs(new_estimate - estimate) <= tol * max(abs(new_estimate), 1e-300):
            return abs(new_estimate)
        estimate = new_estimate
    return abs(estimate)


def exact_zero_mean_problem(
    n: int = 2, d: int = 4, s: float = 6.0, seed: int = 0
) -> QuadraticProblem:
    """Instance whose offsets cancel exactly in pairs, so the computed sum
    of offsets, the full gradient at zero and the minimiser are all exact
    zeros in floating point."""
    assert n % 2 == 0
    rng = np.random.default_rng(seed)
    mats = np.empty((n, d, d))
    for i in range(n):
        z = rng.standard_normal((d, d))
        q, r = np.linalg.qr(z)
        q = q * np.sign(np.diag(r))
        ev = rng.uniform(1.0, s, size=d)
        a = (q * ev) @ q.T
        mats[i] = 0.5 * (a + a.T)
    half = rng.standard_normal((n // 2, d))
    # adjacent +v/-v pairs cancel exactly under sequential summation, so
    # the computed offset mean, x_star and grad_full(x_star) are exact zeros
    offs = np.empty((n, d))
    offs[0::2] = half
    offs[1::2] = -half
    return QuadraticProblem(matrices=mats, offsets=offs)


def build_convex_instance(
    n: int = 10, d: int = 10, s: float = 10.0, seed: int = 99
) -> QuadraticProblem:
    """PSD instance with the last coordinate as a common null direction.

    Every Hessian is block-diagonal with an SPD leading block and a zero in
    the null coordinate; offsets are mean-zero and vanish on the null
    direction, so the objective is merely convex (mu = 0) with an affine
    set of minimisers parallel to the last axis.
    """
    children = np.random.SeedSequence(seed).spawn(n + 1)
    mats = np.zeros((n, d, d))
    for i in range(n):
        rng = np.random.default_rng(children[i])
        z = rng.standard_normal((d - 1, d - 1))
        q, r = np.linalg.qr(z)
        q = q * np.sign(np.diag(r))
        ev = rng.uniform(1.0, s, size=d - 1)
        block = (q * ev) @ q.T
        mats[i, : d - 1, : d - 1] = 0.5 * (block + block.T)
    rng_b = np.random.default_rng(children[n])
    offs = np.zeros((n, d))
    raw = rng_b.standard_normal((n, d - 1))
    offs[:, : d - 1] = raw - raw.mean(axis=0)
    return QuadraticProblem(matrices=mats, offsets=offs)


def conditional_mean_iterate(problem, cache, state, gamma: float) -> np.ndarray:
    """Average of the candidate next iterates over every component draw.

    This is the conditional expectation of the variance-reduced prox step
    given the current iterate and reference point.
    """
    shifts = (problem.matrices @ state.w + problem.offsets) - state.full_grad_at_w
    anchors = state.x + gamma * shifts
    candidates = [cache.prox(i, anchors[i]) for i in range(problem.n)]
    return np.mean(candidates, axis=0)
