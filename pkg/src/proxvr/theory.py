"""Stepsize rules, contraction factors and the contraction certificate.

All quantities are driven by three constants of the finite-sum instance:
the Hessian-dissimilarity constant ``delta`` (square root of the spectral
deviation), the strong-convexity constant ``mu``, and the reference-refresh
probability ``p`` of the loopless methods.

The certificate behind the linear rate is a weighted Lyapunov function

    Lambda_k = ||x_k - x_star||^2 + c ||w_k - x_k||^2

which contracts by ``max(1/(1 + mu*gamma), 1 - r)`` per step whenever the
weight ``c``, the splitting parameters ``xi`` and ``zeta`` and the residue
``r`` satisfy three inequalities (:func:`certificate_conditions`).  The
concrete recipe :func:`certificate_recipe` together with the admissibility
condition :func:`stepsize_condition` discharges them with ``r = p/4``,
giving the per-step factor returned by :func:`theoretical_rate` and the
iteration count of :func:`iteration_complexity`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from proxvr.errors import ParameterDomainError

__all__ = [
    "TheoryParams",
    "RateBound",
    "CertificateVerdict",
    "theoretical_stepsize",
    "fallback_stepsize",
    "stepsize_condition",
    "theoretical_rate",
    "iteration_complexity",
    "lyapunov",
    "certificate_recipe",
    "certificate_conditions",
    "convex_gap_bound",
    "rate_bound",
]

# One-sided shading of the closed-form stepsize.  The admissibility
# predicate must hold for the returned gamma even at mu = 0, where the
# exact formula sits on the boundary; a few ulps of headroom absorb the
# rounding of evaluating the predicate in double precision.
_STEPSIZE_SAFETY = 1.0 - 2.0**-48

_RATE_IDENTITY_RTOL = 1e-12


def _check_probability(p: float) -> None:
    if not 0.0 < p <= 1.0:
        raise ParameterDomainError(f"p must lie in (0, 1], got {p}")


@dataclass(frozen=True)
class TheoryParams:
    """Constants entering the Lyapunov contraction certificate."""

    delta: float
    mu: float
    p: float
    gamma: float
    c: float
    xi: float
    zeta: float
    r: float

    def __post_init__(self) -> None:
        if self.delta < 0:
            raise ParameterDomainError(f"delta must be >= 0, got {self.delta}")
        if self.mu < 0:
            raise ParameterDomainError(f"mu must be >= 0, got {self.mu}")
        _check_probability(self.p)
        if self.gamma <= 0:
            raise ParameterDomainError(f"gamma must be > 0, got {self.gamma}")
        if self.c <= 0:
            raise ParameterDomainError(f"c must be > 0, got {self.c}")
        if not 0.0 <= self.xi <= 1.0:
            raise ParameterDomainError(f"xi must lie in [0, 1], got {self.xi}")
        if self.zeta <= 0:
            raise ParameterDomainError(f"zeta must be > 0, got {self.zeta}")
        if self.r <= 0:
            raise ParameterDomainError(f"r must be > 0, got {self.r}")


@dataclass(frozen=True)
class RateBound:
    """Per-iteration contraction factor and iterations-to-accuracy count."""

    contraction: float
    iters_to_eps: int


class CertificateVerdict(NamedTuple):
    """Outcome of the three certificate inequalities."""

    weight_bound_ok: bool
    similarity_bound_ok: bool
    rate_identity_ok: bool

    def all_ok(self) -> bool:
        return all(self)


def theoretical_stepsize(delta: float, p: float) -> float:
    """Closed-form stepsize ``(1/delta) * (p/(3-p)) * sqrt((p+1)/2)``.

    The result always satisfies :func:`stepsize_condition` for every
    ``mu >= 0``: the formula sits exactly on the admissibility boundary at
    ``mu = 0``, so the returned value is shaded down by a few ulps to keep
    the predicate true in floating point.

    Raises:
        ParameterDomainError: for ``delta <= 0`` (callers must substitute a
            configured fallback, see :func:`fallback_stepsize`) or ``p``
            outside ``(0, 1]``.
    """
    _check_probability(p)
    if not delta > 0:
        raise ParameterDomainError(
            f"delta must be > 0 for the closed-form stepsize, got {delta}; "
            "use fallback_stepsize for identical-Hessian instances"
        )
    coefficient = (p / (3.0 - p)) * math.sqrt((p + 1.0) / 2.0) * _STEPSIZE_SAFETY
    return coefficient / delta


def fallback_stepsize(mu: float, p: float) -> float:
    """Stepsize ``p / (3 mu)`` for the zero-dissimilarity edge case.

    With ``delta = 0`` the admissibility condition holds for every positive
    stepsize and the closed-form rule is undefined; this harness default
    keeps ``mu * gamma`` proportional to ``p``.
    """
    _check_probability(p)
    if not mu > 0:
        raise ParameterDomainError(f"mu must be > 0 for the fallback, got {mu}")
    return p / (3.0 * mu)


def stepsize_condition(delta: float, mu: float, gamma: float, p: float) -> bool:
    """Admissibility predicate ``[2(3-p)^2 / (p^2 (p+1))] delta^2 gamma^2
    <= 1 + mu*gamma``, evaluated exactly in double precision."""
    _check_probability(p)
    if gamma <= 0:
        raise ParameterDomainError(f"gamma must be > 0, got {gamma}")
    if delta < 0 or mu < 0:
        raise ParameterDomainError("delta and mu must be >= 0")
    lhs = (2.0 * (3.0 - p) ** 2 / (p * p * (p + 1.0))) * delta * delta * gamma * gamma
    return lhs <= 1.0 + mu * gamma


def theoretical_rate(mu: float, gamma: float, p: float) -> float:
    """Per-iteration contraction factor ``max(1/(1 + mu*gamma), 1 - p/4)``."""
    _check_probability(p)
    if gamma <= 0:
        raise ParameterDomainError(f"gamma must be > 0, got {gamma}")
    if mu < 0:
        raise ParameterDomainError(f"mu must be >= 0, got {mu}")
    return max(1.0 / (1.0 + mu * gamma), 1.0 - p / 4.0)


def iteration_complexity(
    delta: float, mu: float, p: float, dist0_sq: float, eps: float
) -> int:
    """Iterations guaranteeing mean-square error ``<= eps`` under the
    closed-form stepsize.

    Returns ``ceil((1 + (3 delta/mu + 4)/p) * log(dist0_sq / eps))``, or 0
    when ``eps >= dist0_sq``.
    """
    _check_probability(p)
    if not mu > 0:
        raise ParameterDomainError(f"mu must be > 0, got {mu}")
    if not eps > 0:
        raise ParameterDomainError(f"eps must be > 0, got {eps}")
    if delta < 0:
        raise ParameterDomainError(f"delta must be >= 0, got {delta}")
    if eps >= dist0_sq:
        return 0
    count = (1.0 + (3.0 * delta / mu + 4.0) / p) * math.log(dist0_sq / eps)
    return int(math.ceil(count))


def lyapunov(x, w, x_star, c: float) -> float:
    """Weighted certificate value ``||x - x_star||^2 + c ||w - x||^2``."""
    if c <= 0:
        raise ParameterDomainError(f"c must be > 0, got {c}")
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    x_star = np.asarray(x_star, dtype=np.float64)
    err = x - x_star
    drift = w - x
    return float(err @ err + c * (drift @ drift))


def certificate_recipe(delta: float, mu: float, gamma: float, p: float) -> TheoryParams:
    """The concrete certificate recipe.

    Sets ``c = 2p / ((3-p)^2 (1 + mu*gamma))``, ``xi = 1/2``, ``r = p/4``
    and ``zeta = p / (4 - 2p)``; with a stepsize passing
    :func:`stepsize_condition` this discharges all three inequalities of
    :func:`certificate_conditions`.
    """
    _check_probability(p)
    if gamma <= 0:
        raise ParameterDomainError(f"gamma must be > 0, got {gamma}")
    if mu < 0 or delta < 0:
        raise ParameterDomainError("delta and mu must be >= 0")
    c = 2.0 * p / ((3.0 - p) ** 2 * (1.0 + mu * gamma))
    return TheoryParams(
        delta=delta,
        mu=mu,
        p=p,
        gamma=gamma,
        c=c,
        xi=0.5,
        zeta=p / (4.0 - 2.0 * p),
        r=p / 4.0,
    )


def certificate_conditions(
    params: TheoryParams, delta: float | None = None
) -> CertificateVerdict:
    """Evaluate the three certificate inequalities.

    With ``rho = 1 - p (1 - xi)`` they are

    1. ``c <= 1 / ((1 + mu*gamma) * rho * (1 + 1/zeta))``,
    2. ``c p xi >= delta^2 / ((mu + 1/gamma)^2 (1 - c (1 - p)))``,
    3. ``1 - r = rho * (1 + zeta)``  (checked to 1e-12 relative, being an
       equality between floating-point expressions).

    Args:
        params: certificate constants; ``params.delta`` is used unless an
            explicit ``delta`` override is given.

    Raises:
        ParameterDomainError: when ``c (1 - p) >= 1`` (the divisor in the
            second inequality changes sign and the certificate is vacuous).
    """
    delta = params.delta if delta is None else float(delta)
    if delta < 0:
        raise ParameterDomainError(f"delta must be >= 0, got {delta}")
    c, p, xi, zeta, r = params.c, params.p, params.xi, params.zeta, params.r
    mu, gamma = params.mu, params.gamma

    denom = 1.0 - c * (1.0 - p)
    if denom <= 0:
        raise ParameterDomainError(
            f"certificate requires c*(1-p) < 1, got c={c}, p={p}"
        )

    rho = 1.0 - p * (1.0 - xi)
    weight_bound_ok = c <= 1.0 / ((1.0 + mu * gamma) * rho * (1.0 + 1.0 / zeta))
    similarity_bound_ok = (
        c * p * xi >= delta * delta / ((mu + 1.0 / gamma) ** 2 * denom)
    )
    lhs = rho * (1.0 + zeta)
    rate_identity_ok = abs(lhs - (1.0 - r)) <= _RATE_IDENTITY_RTOL * max(
        1.0, abs(1.0 - r)
    )
    return CertificateVerdict(weight_bound_ok, similarity_bound_ok, rate_identity_ok)


def convex_gap_bound(dist0_sq: float, gamma: float, K: int) -> float:
    """Averaged objective-gap bound ``dist0_sq / (2 gamma K)`` for the
    merely convex case (``mu = 0``)."""
    if gamma <= 0:
        raise ParameterDomainError(f"gamma must be > 0, got {gamma}")
    if K < 1:
        raise ParameterDomainError(f"K must be >= 1, got {K}")
    if dist0_sq < 0:
        raise ParameterDomainError(f"dist0_sq must be >= 0, got {dist0_sq}")
    return dist0_sq / (2.0 * gamma * K)


def rate_bound(
    delta: float, mu: float, p: float, gamma: float, dist0_sq: float, eps: float
) -> RateBound:
    """Bundle the contraction factor with the iteration count."""
    return RateBound(
        contraction=theoretical_rate(mu, gamma, p),
        iters_to_eps=iteration_complexity(delta, mu, p, dist0_sq, eps),
    )
