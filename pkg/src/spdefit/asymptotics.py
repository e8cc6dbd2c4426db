"""Limit-distribution objects used to studentize Monte Carlo output.

The contrast pair (sigma0^2, eta) is asymptotically normal with sandwich
covariance sigma0^4 * Gamma * pi * V^{-1} U V^{-1}, where U and V collect
exponential moments of the thinned design (integrals over [delta, 1-delta]
in the many-column limit, plain sums over the actual columns when their
number stays fixed) and Gamma is the series constant

    Gamma = (1/pi) * sum_{r>=0} I(r)^2 + 2/pi,
    I(r) = 2 sqrt(r+1) - sqrt(r+2) - sqrt(r).

The adaptive stage has covariance 2 sigma^4 * g g^T over
(sigma^2, theta2, theta1) with g = (1, 2 theta2/sigma^2, 2 theta1/sigma^2),
extended in the large-horizon regime by an independent 2*lambda_1 block
for theta0.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import EstimationError, ValidationError
from .estimate import Regime
from .model import SpdeParams, eigenvalue

#: Coefficient threshold below which the exponential moments switch to series.
SMALL_COEFF = 1e-8


def gamma_series_terms(n_terms: int) -> np.ndarray:
    """The squared increments I(r)^2, r = 0..n_terms-1, of the series constant."""
    r = np.arange(n_terms, dtype=np.float64)
    increments = 2.0 * np.sqrt(r + 1.0) - np.sqrt(r + 2.0) - np.sqrt(r)
    return increments * increments


def gamma_tail_bound(n_terms: int) -> float:
    """Rigorous bound on the unsummed tail of Gamma after n_terms terms.

    I(r) is the negated second difference of sqrt at r, so by the mean
    value theorem I(r) < r^{-3/2} / 4 and the tail of (1/pi) sum I(r)^2 is
    below (1/pi) * integral_{n_terms-1}^inf x^-3/16 dx.
    """
    if n_terms < 2:
        return math.inf
    return 1.0 / (32.0 * math.pi * (n_terms - 1) ** 2)


def gamma_constant(tol: float = 1e-12) -> float:
    """Partial sums of Gamma until the analytic tail bound drops below tol."""
    if tol <= 0:
        raise ValidationError(f"tol must satisfy > 0, got {tol!r}")
    n = 1024
    while gamma_tail_bound(n) >= tol:
        n *= 2
    return float(np.sum(gamma_series_terms(n))) / math.pi + 2.0 / math.pi


def _exp_moment(p: int, coeff: float, lo: float, hi: float) -> float:
    """integral_lo^hi y^p e^{-coeff y} dy for p in {0, 1, 2}, closed form.

    For |coeff| < 1e-8 a fourth-order series in coeff replaces the
    antiderivative (the estimand allows eta = 0 where the ratio forms
    degenerate).
    """
    c = coeff
    if abs(c) < SMALL_COEFF:
        total = 0.0
        for q in range(5):
            power = p + q + 1
            total += ((-c) ** q / math.factorial(q)) * (hi ** power - lo ** power) / power
        return total
    def antiderivative(y: float) -> float:
        cy = c * y
        if p == 0:
            poly = 1.0
        elif p == 1:
            poly = (cy + 1.0) / c
        else:
            poly = (cy * cy + 2.0 * cy + 2.0) / (c * c)
        return -math.exp(-cy) * poly / c
    return antiderivative(hi) - antiderivative(lo)


def _design_matrix(sigma0_sq: float, moments: tuple[float, float, float]) -> np.ndarray:
    m0, m1, m2 = moments
    return np.array([[m0, -sigma0_sq * m1],
                     [-sigma0_sq * m1, sigma0_sq ** 2 * m2]])


def uv_matrices(zeta_star: tuple[float, float], delta_margin: float):
    """The limit design matrices (U, V) of the contrast pair.

    U uses exponential rate 4*eta, V uses 2*eta; entries are the moments
    integral y^p e^{-c eta y} dy over [delta, 1-delta] for p = 0, 1, 2.
    """
    sigma0_sq, eta = zeta_star
    if not (0.0 < delta_margin < 0.5):
        raise ValidationError(
            f"delta_margin must lie in (0, 1/2), got {delta_margin!r}")
    lo, hi = delta_margin, 1.0 - delta_margin
    u = _design_matrix(sigma0_sq, tuple(_exp_moment(p, 4.0 * eta, lo, hi) for p in range(3)))
    v = _design_matrix(sigma0_sq, tuple(_exp_moment(p, 2.0 * eta, lo, hi) for p in range(3)))
    return u, v


def uv_matrices_fixed_m(zeta_star: tuple[float, float], grid_points) -> tuple[np.ndarray, np.ndarray]:
    """Finite-column analogues of (U, V): sums over the actual thinned columns."""
    sigma0_sq, eta = zeta_star
    y = np.asarray(grid_points, dtype=np.float64)
    if y.size < 2:
        raise ValidationError("the fixed-m design needs at least two columns")
    out = []
    for c in (4.0, 2.0):
        w = np.exp(-c * eta * y)
        out.append(_design_matrix(sigma0_sq,
                                  (float(np.sum(w)), float(np.sum(y * w)),
                                   float(np.sum(y * y * w)))))
    u, v = out
    if abs(np.linalg.det(v)) < 1e-14 * max(np.abs(v).max() ** 2, 1e-300):
        raise EstimationError("fixed-m design matrix V is singular (coincident columns?)")
    return u, v


def sandwich(u: np.ndarray, v: np.ndarray, scale: float) -> np.ndarray:
    """scale * V^{-1} U V^{-1} via linear solves, symmetrized.

    The asymmetry before averaging must be below 1e-10 of the matrix
    scale; larger asymmetry indicates an ill-conditioned design.
    """
    inner = np.linalg.solve(v, u)
    result = scale * np.linalg.solve(v, inner.T).T
    asym = np.abs(result - result.T).max()
    if asym > 1e-10 * max(np.abs(result).max(), 1.0):
        raise EstimationError(f"sandwich asymmetry {asym:.3e} exceeds tolerance")
    return 0.5 * (result + result.T)


def contrast_cov(zeta_star: tuple[float, float], delta_margin: float,
                 gamma: float | None = None) -> np.ndarray:
    """Limit covariance of the rate-scaled contrast pair (sigma0^2, eta).

    sigma0^4 * Gamma * pi * V^{-1} U V^{-1} with the integral design; pass
    ``gamma`` to reuse a precomputed series constant.
    """
    if gamma is None:
        gamma = gamma_constant()
    u, v = uv_matrices(zeta_star, delta_margin)
    return sandwich(u, v, zeta_star[0] ** 2 * gamma * math.pi)


def contrast_cov_fixed_m(zeta_star: tuple[float, float], grid_points,
                         gamma: float | None = None) -> np.ndarray:
    """Finite-column contrast covariance (for the sqrt(N) scaling)."""
    if gamma is None:
        gamma = gamma_constant()
    u, v = uv_matrices_fixed_m(zeta_star, grid_points)
    return sandwich(u, v, zeta_star[0] ** 2 * gamma * math.pi)


def adaptive_cov(theta_star: SpdeParams, regime: Regime) -> np.ndarray:
    """Limit covariance of the adaptive stage.

    FIXED_T: the 3x3 rank-one matrix 2 sigma^4 g g^T over (sigma^2,
    theta2, theta1).  LARGE_T: the 4x4 extension whose extra diagonal
    entry 2*lambda_1 belongs to theta0, uncorrelated with the rest.
    """
    s2 = theta_star.sigma ** 2
    if s2 <= 0:
        raise ValidationError("the adaptive covariance needs sigma > 0")
    g = np.array([1.0, 2.0 * theta_star.theta2 / s2, 2.0 * theta_star.theta1 / s2])
    block = 2.0 * s2 ** 2 * np.outer(g, g)
    if regime is Regime.FIXED_T:
        return block
    out = np.zeros((4, 4))
    out[:3, :3] = block
    out[3, 3] = 2.0 * eigenvalue(1, theta_star)
    return out
