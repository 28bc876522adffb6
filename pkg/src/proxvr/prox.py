"""Proximity operators for the quadratic components and a generic contract.

For a convex differentiable ``g`` and stepsize ``gamma > 0``, the proximity
operator ``prox_{gamma g}(x)`` is the unique minimiser of
``g(y) + ||y - x||^2 / (2 gamma)``, characterised by the fixed-point
identity

    y + gamma * grad_g(y) = x.

For the quadratic ``g(y) = 0.5 y @ A y + b @ y`` this is the linear solve
``y = (I + gamma A)^{-1} (x - gamma b)``, done here with a Cholesky
factorisation.  :class:`QuadraticProxCache` holds one factorisation per
component for optimisers that reuse a fixed stepsize; the cache is keyed on
the exact stepsize bits and is read-only after construction, hence safe for
concurrent readers.

When ``g`` is ``mu``-strongly convex the operator contracts distances by at
least ``1 / (1 + gamma mu)``; :func:`verify_prox_contraction` samples that
bound.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.linalg

from proxvr.errors import NumericalFailure, ParameterDomainError, ProxNonConvergence
from proxvr.problems import QuadraticProblem

__all__ = [
    "prox_quadratic",
    "QuadraticProxCache",
    "prox_iterative",
    "verify_prox_contraction",
]


def _shifted_matrix(matrix: np.ndarray, gamma: float) -> np.ndarray:
    """``I + gamma * matrix`` without mutating the input."""
    out = gamma * matrix
    out[np.diag_indices_from(out)] += 1.0
    return out


def _factorize(matrix: np.ndarray, gamma: float):
    try:
        return scipy.linalg.cho_factor(_shifted_matrix(matrix, gamma))
    except scipy.linalg.LinAlgError as exc:
        raise NumericalFailure(
            f"factorisation of I + gamma*A failed for gamma={gamma!r}"
        ) from exc


def prox_quadratic(
    matrix: np.ndarray, offset: np.ndarray, gamma: float, x: np.ndarray
) -> np.ndarray:
    """Proximity operator of ``g(y) = 0.5 y @ A y + b @ y`` at ``x``.

    Returns ``(I + gamma A)^{-1} (x - gamma b)``, the unique minimiser of
    ``g(y) + ||y - x||^2 / (2 gamma)``; the output satisfies the fixed-point
    identity ``y + gamma (A y + b) = x`` to solver precision.  The matrix is
    factorised fresh on every call.

    Args:
        matrix: symmetric ``A`` with ``lambda_min(A) > -1/gamma``.
        offset: linear term ``b``.
        gamma: stepsize ``> 0``.
        x: anchor point.

    Raises:
        ParameterDomainError: for ``gamma <= 0`` or non-finite inputs.
        NumericalFailure: if the shifted matrix cannot be factorised.
    """
    if not np.isfinite(gamma) or gamma <= 0:
        raise ParameterDomainError(f"gamma must be a finite value > 0, got {gamma}")
    x = np.asarray(x, dtype=np.float64)
    if not (
        np.isfinite(x).all()
        and np.isfinite(matrix).all()
        and np.isfinite(offset).all()
    ):
        raise ParameterDomainError("prox inputs must be finite")
    factor = _factorize(np.asarray(matrix, dtype=np.float64), gamma)
    return scipy.linalg.cho_solve(factor, x - gamma * np.asarray(offset))


class QuadraticProxCache:
    """Per-component Cholesky factors of ``I + gamma A_i`` for one problem.

    Built eagerly so lookups are read-only; share one instance across the
    repeats of a run when the stepsize is fixed.
    """

    def __init__(self, problem: QuadraticProblem, gamma: float):
        if not np.isfinite(gamma) or gamma <= 0:
            raise ParameterDomainError(f"gamma must be a finite value > 0, got {gamma}")
        self._gamma = float(gamma)
        self._offsets = problem.offsets
        self._factors = [_factorize(a, self._gamma) for a in problem.matrices]

    @property
    def gamma(self) -> float:
        return self._gamma

    @property
    def n(self) -> int:
        return len(self._factors)

    def prox(self, i: int, x: np.ndarray) -> np.ndarray:
        """Prox of component ``i`` at anchor ``x`` (same result bits as
        :func:`prox_quadratic` on that component)."""
        rhs = x - self._gamma * self._offsets[i]
        return scipy.linalg.cho_solve(self._factors[i], rhs, check_finite=False)


def _finite_difference_jacobian(
    grad: Callable[[np.ndarray], np.ndarray], y: np.ndarray, g0: np.ndarray
) -> np.ndarray:
    d = y.size
    jac = np.empty((d, d))
    for j in range(d):
        h = np.sqrt(np.finfo(float).eps) * (1.0 + abs(y[j]))
        yj = y.copy()
        yj[j] += h
        jac[:, j] = (np.asarray(grad(yj), dtype=np.float64) - g0) / h
    return jac


def prox_iterative(
    grad: Callable[[np.ndarray], np.ndarray],
    mu: float,
    gamma: float,
    x: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 200,
    hess: Callable[[np.ndarray], np.ndarray] | None = None,
) -> np.ndarray:
    """Prox of a generic differentiable convex function via damped Newton.

    Solves the fixed-point condition ``F(y) = y + gamma*grad(y) - x = 0``.
    Newton steps use ``I + gamma*H`` with ``H`` either the supplied Hessian
    oracle or a forward-difference Jacobian of ``grad``; a unit step is
    halved until the residual norm decreases.  The prox subproblem is
    ``(mu + 1/gamma)``-strongly convex, so damping keeps the iteration safe
    from any start.

    Args:
        grad: gradient oracle of a convex differentiable function.
        mu: strong-convexity constant of that function, ``>= 0``.
        gamma: stepsize ``> 0``.
        x: anchor point.
        tol: residual tolerance; the result satisfies
            ``||y + gamma*grad(y) - x|| <= tol * (1 + ||x||)``.
        max_iter: Newton iteration budget.
        hess: optional Hessian oracle; finite differences otherwise.

    Raises:
        ProxNonConvergence: when the budget is exhausted or the line search
            stalls; carries the final residual norm.
    """
    if not np.isfinite(gamma) or gamma <= 0:
        raise ParameterDomainError(f"gamma must be a finite value > 0, got {gamma}")
    if mu < 0:
        raise ParameterDomainError(f"mu must be >= 0, got {mu}")
    if tol <= 0:
        raise ParameterDomainError(f"tol must be > 0, got {tol}")
    x = np.asarray(x, dtype=np.float64)
    target = tol * (1.0 + float(np.linalg.norm(x)))
    identity = np.eye(x.size)

    y = x.copy()
    g = np.asarray(grad(y), dtype=np.float64)
    residual = y + gamma * g - x
    res_norm = float(np.linalg.norm(residual))
    for _ in range(max_iter):
        if res_norm <= target:
            return y
        h = hess(y) if hess is not None else _finite_difference_jacobian(grad, y, g)
        jac = identity + gamma * np.asarray(h, dtype=np.float64)
        try:
            step = np.linalg.solve(jac, -residual)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular Newton system in prox solve") from exc

        t = 1.0
        while True:
            y_new = y + t * step
            g_new = np.asarray(grad(y_new), dtype=np.float64)
            res_new = y_new + gamma * g_new - x
            res_new_norm = float(np.linalg.norm(res_new))
            if res_new_norm < res_norm:
                break
            t *= 0.5
            if t < 2.0**-30:
                raise ProxNonConvergence(
                    f"prox line search stalled at residual {res_norm:.3e} "
                    f"(target {target:.3e})",
                    residual=res_norm,
                )
        y, g, residual, res_norm = y_new, g_new, res_new, res_new_norm

    if res_norm <= target:
        return y
    raise ProxNonConvergence(
        f"prox solve did not reach residual {target:.3e} within "
        f"{max_iter} iterations (final residual {res_norm:.3e})",
        residual=res_norm,
    )


def verify_prox_contraction(
    matrix: np.ndarray,
    offset: np.ndarray,
    gamma: float,
    mu: float,
    pairs: int = 1000,
    seed: int = 0,
) -> float:
    """Sample the contraction factor of a quadratic prox operator.

    Draws ``pairs`` random anchor pairs and returns the maximum of
    ``||prox(x) - prox(y)|| / ||x - y||``.  For ``mu = lambda_min(A)`` the
    exact operator norm is ``1 / (1 + gamma mu)``, so the sampled maximum is
    checked against that bound with ``1e-8`` relative headroom.

    Raises:
        NumericalFailure: if the sampled ratio exceeds the bound.
    """
    if pairs < 1:
        raise ParameterDomainError(f"pairs must be >= 1, got {pairs}")
    if mu < 0:
        raise ParameterDomainError(f"mu must be >= 0, got {mu}")
    matrix = np.asarray(matrix, dtype=np.float64)
    offset = np.asarray(offset, dtype=np.float64)
    factor = _factorize(matrix, gamma)
    rng = np.random.default_rng(seed)
    d = matrix.shape[0]

    worst = 0.0
    for _ in range(pairs):
        x = rng.standard_normal(d)
        y = rng.standard_normal(d)
        gap = float(np.linalg.norm(x - y))
        while gap == 0.0:
            y = rng.standard_normal(d)
            gap = float(np.linalg.norm(x - y))
        px = scipy.linalg.cho_solve(factor, x - gamma * offset)
        py = scipy.linalg.cho_solve(factor, y - gamma * offset)
        worst = max(worst, float(np.linalg.norm(px - py)) / gap)

    bound = (1.0 + 1e-8) / (1.0 + gamma * mu)
    if worst > bound:
        raise NumericalFailure(
            f"sampled prox contraction {worst:.12e} exceeds 1/(1+gamma*mu) "
            f"= {1.0 / (1.0 + gamma * mu):.12e}"
        )
    return worst
