"""Core parameterization of the parabolic SPDE and its spectral decomposition.

The model is the one-dimensional linear equation

    dX_t(y) = (theta2 * d^2/dy^2 + theta1 * d/dy + theta0) X_t(y) dt
              + sigma dB_t(y)

on [0, T] x [0, 1] with Dirichlet boundary conditions and zero initial
condition.  The drift operator diagonalizes in the weighted basis

    e_k(y) = sqrt(2) * sin(pi k y) * exp(-eta y / 2),    eta = theta1/theta2,

with eigenvalues -lambda_k where

    lambda_k = -theta0 + theta1^2 / (4 theta2) + pi^2 k^2 theta2.

Projected onto e_k, the field is an Ornstein-Uhlenbeck process with
mean-reversion lambda_k and noise amplitude sigma; its exact one-step
transition over dt is the AR(1) kernel computed by :func:`ou_transition`.

Everything in this module is a pure function of its arguments and safe to
call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

SQRT2 = math.sqrt(2.0)

# Below this value of |lambda * dt| the innovation variance switches to a
# series expansion to avoid the 0/0 in (1 - exp(-2 lambda dt)) / (2 lambda).
SMALL_LAMBDA_DT = 1e-8


@dataclass(frozen=True)
class SpdeParams:
    """Drift coefficients (theta0, theta1, theta2) and noise amplitude sigma.

    theta2 must be strictly positive.  sigma must be nonnegative; sigma == 0
    is a degenerate noise-free setting accepted only so that simulations can
    be exercised deterministically (estimation requires sigma > 0).
    """

    theta0: float
    theta1: float
    theta2: float
    sigma: float

    def __post_init__(self):
        for name in ("theta0", "theta1", "theta2", "sigma"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValidationError(f"params.{name} must be finite, got {value!r}")
        if self.theta2 <= 0:
            raise ValidationError(f"params.theta2 must satisfy > 0, got {self.theta2!r}")
        if self.sigma < 0:
            raise ValidationError(f"params.sigma must satisfy >= 0, got {self.sigma!r}")

    @property
    def eta(self) -> float:
        """Curvature eta = theta1 / theta2 (spatial tilt of the volatility)."""
        return self.theta1 / self.theta2

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.theta0, self.theta1, self.theta2, self.sigma)


@dataclass(frozen=True)
class DerivedParams:
    """The identified parameters: normalized volatility, curvature, lambda_1."""

    sigma0_sq: float
    eta: float
    lambda1: float


@dataclass(frozen=True)
class EigenPair:
    """Mode index k and the mean-reversion rate lambda_k of its coordinate.

    The eigenfunction e_k itself is evaluated on demand via
    :func:`eigenfunction_eval`; it is never stored.
    """

    k: int
    lambda_k: float

    @classmethod
    def for_mode(cls, k: int, params: SpdeParams) -> "EigenPair":
        return cls(k=k, lambda_k=eigenvalue(k, params))


@dataclass(frozen=True)
class OuTransition:
    """Exact one-step law of an OU coordinate: x' = a x + sqrt(s_sq) * N(0,1)."""

    a: float
    s_sq: float
    dt: float


def eigenvalue(k, params: SpdeParams):
    """Mean-reversion rate lambda_k = -theta0 + theta1^2/(4 theta2) + pi^2 k^2 theta2.

    ``k`` may be a positive integer or an integer array; the result matches
    its shape.
    """
    k = np.asarray(k)
    if np.any(k < 1):
        raise ValidationError("mode index k must be >= 1")
    lam = -params.theta0 + params.theta1 ** 2 / (4.0 * params.theta2) \
        + np.pi ** 2 * k.astype(np.float64) ** 2 * params.theta2
    return lam if lam.ndim else float(lam)


def eigenfunction_eval(k: int, params: SpdeParams, y):
    """Evaluate e_k(y) = sqrt(2) sin(pi k y) exp(-eta y / 2) for y in [0, 1].

    At points where k*y is an integer (the boundaries in particular) the
    sine factor is an exact zero, and so is the returned value.
    """
    y = np.asarray(y, dtype=np.float64)
    if np.any(y < 0.0) or np.any(y > 1.0):
        raise ValidationError("eigenfunction argument y must lie in [0, 1]")
    ky = k * y
    s = np.where(ky == np.floor(ky), 0.0, np.sin(np.pi * ky))
    out = SQRT2 * s * np.exp(-0.5 * params.eta * y)
    return out if out.ndim else float(out)


def derived_params(params: SpdeParams) -> DerivedParams:
    """Map theta to (sigma0^2, eta, lambda_1) = (sigma^2/sqrt(theta2), theta1/theta2, lambda_1)."""
    return DerivedParams(
        sigma0_sq=params.sigma ** 2 / math.sqrt(params.theta2),
        eta=params.eta,
        lambda1=eigenvalue(1, params),
    )


def ou_variance_scale(lam, dt: float):
    """The factor (1 - exp(-2 lambda dt)) / (2 lambda), continuous at lambda = 0.

    Multiplying by sigma^2 gives the one-step innovation variance of the OU
    transition.  ``lam`` may be a scalar or an array; any real value
    (including negative, the explosive regime) is valid.  For
    |lambda * dt| < 1e-8 a series expansion dt * (1 - x + 2x^2/3), x =
    lambda*dt, replaces the ratio.
    """
    if dt <= 0 or not math.isfinite(dt):
        raise ValidationError(f"dt must satisfy > 0, got {dt!r}")
    lam = np.asarray(lam, dtype=np.float64)
    x = lam * dt
    small = np.abs(x) < SMALL_LAMBDA_DT
    # Guard the denominator on the small branch; those entries are replaced.
    safe_lam = np.where(small, 1.0, lam)
    exact = -np.expm1(-2.0 * x) / (2.0 * safe_lam)
    series = dt * (1.0 - x + (2.0 / 3.0) * x * x)
    out = np.where(small, series, exact)
    return out if out.ndim else float(out)


def ou_transition(lam: float, sigma: float, dt: float) -> OuTransition:
    """Exact discretization of dx = -lambda x dt + sigma dw over a step dt.

    Returns the AR(1) factor a = exp(-lambda dt) and innovation variance
    s_sq = sigma^2 (1 - exp(-2 lambda dt)) / (2 lambda).  Negative lambda is
    permitted (explosive coordinate); the formulas remain exact.
    """
    if sigma < 0:
        raise ValidationError(f"sigma must satisfy >= 0, got {sigma!r}")
    scale = ou_variance_scale(lam, dt)  # validates dt
    return OuTransition(a=math.exp(-lam * dt), s_sq=sigma ** 2 * scale, dt=dt)


def ou_transition_arrays(lams: np.ndarray, sigma: float, dt: float):
    """Vectorized (a_k, s_sq_k) over an array of mean-reversion rates."""
    if sigma < 0:
        raise ValidationError(f"sigma must satisfy >= 0, got {sigma!r}")
    scale = ou_variance_scale(lams, dt)
    return np.exp(-np.asarray(lams, dtype=np.float64) * dt), sigma ** 2 * scale
