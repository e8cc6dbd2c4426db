"""Two-stage parameter estimation from the gridded field.

Stage one fits the normalized volatility sigma0^2 = sigma^2/sqrt(theta2)
and the curvature eta = theta1/theta2 by least squares on rescaled
realized volatilities: at thinned spatial columns y_j,

    Z_j = (1 / (N sqrt(T/N))) * sum_i (X(t_i, y_j) - X(t_{i-1}, y_j))^2

concentrates around sigma0^2 exp(-eta y_j) / sqrt(pi), and the contrast is
the mean squared residual against that curve.  The inner sigma0^2 problem
is linear, so the fit profiles it out and searches eta alone.

Stage two projects the field onto the first basis function using the
fitted curvature, giving an approximate Ornstein-Uhlenbeck path on a
thinned time grid.  With T = 1 the path's quadratic variation estimates
sigma^2; with large T a Gaussian quasi-likelihood on the exact OU
transition yields (lambda_1, sigma^2) and from them theta0.  Both regimes
finish with the plug-in maps

    theta2 = (sigma^2 / sigma0^2)^2,   theta1 = eta * theta2,
    theta0 = -lambda_1 + theta1^2/(4 theta2) + pi^2 theta2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EstimationError, ValidationError
from .model import SQRT2, SpdeParams, ou_variance_scale
from .simulate import FieldDataset, GridSpec, iter_coordinate_blocks, sin_table_block

SQRT_PI = math.sqrt(math.pi)

#: Points of the coarse eta scan that precedes golden-section refinement.
ETA_SCAN_POINTS = 256

#: Golden-section stops when the eta bracket is shorter than this.
ETA_TOL = 1e-9

#: Golden-section tolerance of the quasi-likelihood fallback search.
LAMBDA_TOL = 1e-9

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class Regime(enum.Enum):
    """Observation-horizon regime selecting the stage-two estimator."""

    FIXED_T = "fixed_t"
    LARGE_T = "large_t"


@dataclass(frozen=True)
class EstimationConfig:
    """Tuning constants of both stages.

    delta_margin is the spatial boundary cutoff; realized volatilities are
    taken at m_spatial columns inside [delta, 1-delta], while the
    coordinate projection always uses the full grid.  n2_temporal is the
    thinned time-step count of stage two.  The bound pairs define the
    compact search regions.
    """

    regime: Regime
    delta_margin: float = 0.05
    m_spatial: int = 20
    n2_temporal: int = 100
    eta_bounds: tuple[float, float] = (0.0, 20.0)
    sigma0sq_bounds: tuple[float, float] = (1e-3, 1e3)
    lambda_bounds: tuple[float, float] = (1e-4, 1e3)

    def __post_init__(self):
        if not isinstance(self.regime, Regime):
            raise ValidationError(f"estimation.regime must be a Regime, got {self.regime!r}")
        if not (0.0 < self.delta_margin < 0.5):
            raise ValidationError(
                f"estimation.delta_margin must lie in (0, 1/2), got {self.delta_margin!r}")
        if self.m_spatial < 1:
            raise ValidationError(
                f"estimation.m_spatial must satisfy >= 1, got {self.m_spatial!r}")
        if self.n2_temporal < 1:
            raise ValidationError(
                f"estimation.n2_temporal must satisfy >= 1, got {self.n2_temporal!r}")
        for name, (lo, hi) in (("eta_bounds", self.eta_bounds),
                               ("sigma0sq_bounds", self.sigma0sq_bounds),
                               ("lambda_bounds", self.lambda_bounds)):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValidationError(f"estimation.{name} must be a finite (lo, hi) pair")
        if self.eta_bounds[0] < 0:
            raise ValidationError("estimation.eta_bounds lower end must satisfy >= 0")
        if self.sigma0sq_bounds[0] <= 0 or self.lambda_bounds[0] <= 0:
            raise ValidationError(
                "estimation sigma0sq/lambda bounds lower ends must satisfy > 0")


@dataclass(frozen=True)
class VolProfile:
    """Rescaled realized volatilities z at thinned spatial points y."""

    y: np.ndarray
    z: np.ndarray
    n_time: int
    dt: float

    def __post_init__(self):
        if len(self.y) != len(self.z):
            raise ValidationError("profile y and z lengths differ")
        if np.any(np.diff(self.y) <= 0):
            raise ValidationError("profile points must be strictly increasing in y")
        if np.any(self.z < 0):
            raise ValidationError("realized volatilities must be >= 0")


@dataclass(frozen=True)
class ContrastEstimate:
    """Result of the least-squares volatility/curvature fit."""

    sigma0_sq_hat: float
    eta_hat: float
    objective: float
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CoordPath:
    """Approximate first-mode coordinate on the thinned time grid.

    ``values[i]`` approximates x_1(s_i) for s_i = i * dt, i = 0..n2; the
    zero initial condition makes values[0] = 0.
    """

    values: np.ndarray
    dt: float
    eta_used: float
    regime: Regime = Regime.FIXED_T

    def __post_init__(self):
        if len(self.values) < 2:
            raise ValidationError("coordinate path needs at least two points")
        if not np.isfinite(self.values).all():
            raise ValidationError("coordinate path contains non-finite values")
        if self.dt <= 0:
            raise ValidationError(f"path dt must satisfy > 0, got {self.dt!r}")


@dataclass(frozen=True)
class QmleFit:
    """Quasi maximum likelihood output for (lambda, sigma^2)."""

    lambda_hat: float
    sigma_sq_hat: float
    ar_coefficient: float
    fallback: bool


@dataclass(frozen=True)
class EstimateRecord:
    """All estimates from one dataset plus replication metadata.

    lambda1 and theta0 are None in the fixed-horizon regime.  The
    construction identities theta1 = eta*theta2, theta2 =
    (sigma_sq/sigma0_sq)^2 and, when present, theta0 = -lambda1 +
    theta1^2/(4 theta2) + pi^2 theta2 hold exactly by construction.
    """

    regime: Regime
    sigma0_sq: float
    eta: float
    sigma_sq: float
    theta2: float
    theta1: float
    lambda1: float | None
    theta0: float | None
    seed: int
    rep_id: int | None = None
    flags: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# stage one: realized volatility and the contrast fit
# ---------------------------------------------------------------------------


def _round_half_down(x: float) -> int:
    return math.ceil(x - 0.5)


def thinned_columns(config: EstimationConfig, n_space: int):
    """Thinned spatial columns: 1-based grid indices and their y = j/M.

    The target points are y~_j = delta + floor(Mbar/m) (j-1) / M with
    Mbar = floor((1-2 delta) M); each is mapped to the nearest existing
    grid column, ties rounding down.
    """
    delta, m = config.delta_margin, config.m_spatial
    # The 1e-9 nudge absorbs float artifacts like 0.9 * 2000 = 1799.9999...
    m_bar = math.floor((1.0 - 2.0 * delta) * n_space + 1e-9)
    if m > m_bar:
        raise ValidationError(
            f"m_spatial = {m} exceeds the {m_bar} columns inside the delta margin")
    step = m_bar // m
    exact = delta * n_space + step * np.arange(m)
    cols = np.array([_round_half_down(v) for v in exact], dtype=np.int64)
    cols = np.clip(cols, 1, n_space)
    y = cols / n_space
    # Nearest-column mapping may move a point up to half a grid spacing,
    # so the margin check allows exactly that much slack and no more.
    slack = 0.5 / n_space + 1e-9
    if np.any(y < delta - slack) or np.any(y > 1.0 - delta + slack):
        raise ValidationError("thinned columns fall outside [delta, 1-delta]")
    return cols, y


def realized_vol_from_columns(column_values: np.ndarray, y: np.ndarray,
                              horizon: float) -> VolProfile:
    """Build the volatility profile from the (n_time+1, m) column bundle."""
    n = column_values.shape[0] - 1
    if n < 2:
        raise ValidationError("realized volatility needs n_time >= 2")
    h = horizon / n
    increments = np.diff(column_values, axis=0)
    z = np.sum(increments * increments, axis=0) / (n * math.sqrt(h))
    return VolProfile(y=y, z=z, n_time=n, dt=h)


def realized_vol_profile(fielddata: FieldDataset, config: EstimationConfig) -> VolProfile:
    """Rescaled realized volatility at the thinned columns of a field."""
    cols, y = thinned_columns(config, fielddata.spec.n_space)
    return realized_vol_from_columns(fielddata.values[:, cols - 1], y,
                                     fielddata.spec.horizon)


def contrast(sigma0_sq: float, eta: float, profile: VolProfile) -> float:
    """Mean squared residual of z against sigma0^2 exp(-eta y) / sqrt(pi)."""
    if len(profile.z) == 0:
        raise ValidationError("contrast needs a nonempty profile")
    resid = profile.z - sigma0_sq * np.exp(-eta * profile.y) / SQRT_PI
    return float(np.mean(resid * resid))


def profiled_sigma0(eta: float, profile: VolProfile,
                    bounds: tuple[float, float] | None = None) -> float:
    """Closed-form inner minimizer of the contrast in sigma0^2 at fixed eta.

    sigma0^2(eta) = sqrt(pi) * sum_j z_j e^{-eta y_j} / sum_j e^{-2 eta y_j},
    clamped to ``bounds`` when given.
    """
    w = np.exp(-eta * profile.y)
    denom = float(np.dot(w, w))
    if denom <= 0.0:
        raise ValidationError("profiled sigma0^2 is undefined: sum of e^{-2 eta y} vanishes")
    value = SQRT_PI * float(np.dot(profile.z, w)) / denom
    if bounds is not None:
        value = min(max(value, bounds[0]), bounds[1])
    return value


def _golden_min(fun, lo: float, hi: float, tol: float):
    """Golden-section minimizer on [lo, hi]; returns (argmin, min, n_evals)."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    n = 2
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fun(d)
        n += 1
    x = 0.5 * (a + b)
    return x, fun(x), n + 1


def fit_min_contrast(profile: VolProfile, config: EstimationConfig) -> ContrastEstimate:
    """Minimize the contrast over (sigma0^2, eta) via the profiled objective.

    A coarse scan over eta_bounds brackets the minimum, golden-section
    refines to an interval below 1e-9, and sigma0^2 is re-evaluated in
    closed form at the final eta.  Solutions at (or hard against) the eta
    bounds are flagged in the diagnostics, as is clamping of sigma0^2.
    """
    if len(profile.z) < 2:
        raise ValidationError("the contrast fit needs at least two profile points")
    lo, hi = config.eta_bounds
    s_bounds = config.sigma0sq_bounds

    def objective(eta: float) -> float:
        return contrast(profiled_sigma0(eta, profile, s_bounds), eta, profile)

    etas = np.linspace(lo, hi, ETA_SCAN_POINTS)
    values = np.array([objective(e) for e in etas])
    best = int(np.argmin(values))
    bl = etas[max(best - 1, 0)]
    bh = etas[min(best + 1, ETA_SCAN_POINTS - 1)]
    eta_hat, obj, n_evals = _golden_min(objective, bl, bh, ETA_TOL)

    raw = profiled_sigma0(eta_hat, profile)
    sigma0_sq_hat = min(max(raw, s_bounds[0]), s_bounds[1])
    span = hi - lo
    diagnostics = {
        "eta_at_boundary": bool(min(eta_hat - lo, hi - eta_hat) < 1e-6 * span),
        "sigma0_clamped": bool(raw != sigma0_sq_hat),
        "n_objective_evals": int(ETA_SCAN_POINTS + n_evals),
    }
    return ContrastEstimate(sigma0_sq_hat=sigma0_sq_hat, eta_hat=eta_hat,
                            objective=contrast(sigma0_sq_hat, eta_hat, profile),
                            diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# stage two: coordinate projection, quadratic variation, quasi-likelihood
# ---------------------------------------------------------------------------


def thinned_time_indices(config: EstimationConfig, n_time: int) -> np.ndarray:
    """Indices of the thinned times s_i = i * floor(N/N2) * (T/N), i = 0..N2."""
    n2 = config.n2_temporal
    if n2 > n_time:
        raise ValidationError(f"n2_temporal = {n2} exceeds n_time = {n_time}")
    return np.arange(n2 + 1, dtype=np.int64) * (n_time // n2)


def projection_weights(k: int, eta_hat: float, n_space: int) -> np.ndarray:
    """Riemann weights (1/M) sqrt(2) sin(pi k y_j) exp(eta_hat y_j / 2), j=1..M."""
    y = np.arange(1, n_space + 1, dtype=np.float64) / n_space
    return SQRT2 * np.sin(np.pi * k * y) * np.exp(0.5 * eta_hat * y) / n_space


def project_from_slices(slices: np.ndarray, k: int, eta_hat: float, dt: float,
                        regime: Regime) -> CoordPath:
    """Project field slices at the thinned times onto basis function k."""
    w = projection_weights(k, eta_hat, slices.shape[1])
    return CoordPath(values=slices @ w, dt=dt, eta_used=eta_hat, regime=regime)


def project_coordinate(fielddata: FieldDataset, k: int, eta_hat: float,
                       config: EstimationConfig) -> CoordPath:
    """Approximate coordinate path of mode k on the thinned time grid.

    Uses the full spatial grid (no delta margin).  The stage-two pipeline
    fixes k = 1; other k are accepted for diagnostics such as
    cross-mode leakage checks.
    """
    spec = fielddata.spec
    idx = thinned_time_indices(config, spec.n_time)
    dt = (spec.n_time // config.n2_temporal) * spec.dt
    return project_from_slices(fielddata.values[idx], k, eta_hat, dt, config.regime)


def qv_sigma2(path: CoordPath) -> float:
    """Quadratic variation of the thinned path: the fixed-horizon sigma^2 estimator.

    Valid only in the T = 1 regime, where the thinned steps tile [0, 1];
    rejects large-horizon paths (use :func:`fit_ou_qmle` there).
    """
    if path.regime is not Regime.FIXED_T:
        raise ValidationError("quadratic-variation sigma^2 applies to the fixed-T regime only")
    increments = np.diff(path.values)
    return float(np.dot(increments, increments))


def ou_quasi_loglik(lam: float, sigma_sq: float, path: CoordPath) -> float:
    """Gaussian quasi log-likelihood of the path under the exact OU transition.

    -sum_i [ log(v)/2 + (x_i - a x_{i-1})^2 / (2v) ] with a = e^{-lam dt}
    and v = sigma_sq (1 - e^{-2 lam dt}) / (2 lam).
    """
    if lam <= 0 or sigma_sq <= 0:
        raise ValidationError("quasi log-likelihood needs lambda > 0 and sigma_sq > 0")
    x = path.values
    a = math.exp(-lam * path.dt)
    v = sigma_sq * ou_variance_scale(lam, path.dt)
    r = x[1:] - a * x[:-1]
    n = len(r)
    return -(0.5 * n * math.log(v) + float(np.dot(r, r)) / (2.0 * v))


def fit_ou_qmle(path: CoordPath,
                lambda_bounds: tuple[float, float] = (1e-4, 1e3)) -> QmleFit:
    """Maximize the quasi log-likelihood over (lambda, sigma^2).

    The AR(1) coefficient has the closed form a = sum x_i x_{i-1} / sum
    x_{i-1}^2, which maximizes the profiled objective exactly; when it
    falls outside (0, 1) the fit falls back to golden-section search of
    the profiled likelihood over ``lambda_bounds`` (a reportable event,
    flagged on the result).
    """
    x = path.values
    if len(x) < 3:
        raise ValidationError("the quasi-likelihood fit needs at least three path points")
    lagged, current = x[:-1], x[1:]
    den = float(np.dot(lagged, lagged))
    if den <= 0.0:
        raise EstimationError("degenerate coordinate path: sum of squared lags vanishes")
    a_hat = float(np.dot(current, lagged)) / den
    n = len(current)

    def sigma_sq_at(lam: float) -> float:
        a = math.exp(-lam * path.dt)
        r = current - a * lagged
        return float(np.dot(r, r)) / (n * ou_variance_scale(lam, path.dt))

    if 0.0 < a_hat < 1.0:
        lam_hat = -math.log(a_hat) / path.dt
        return QmleFit(lambda_hat=lam_hat, sigma_sq_hat=sigma_sq_at(lam_hat),
                       ar_coefficient=a_hat, fallback=False)

    def residual_sum(lam: float) -> float:
        a = math.exp(-lam * path.dt)
        r = current - a * lagged
        return float(np.dot(r, r))

    lam_hat, _, _ = _golden_min(residual_sum, lambda_bounds[0], lambda_bounds[1],
                                LAMBDA_TOL)
    return QmleFit(lambda_hat=lam_hat, sigma_sq_hat=sigma_sq_at(lam_hat),
                   ar_coefficient=a_hat, fallback=True)


# ---------------------------------------------------------------------------
# plug-in maps and full pipelines
# ---------------------------------------------------------------------------


def plug_in_theta(sigma_sq_hat: float, sigma0_sq_hat: float,
                  eta_hat: float) -> tuple[float, float]:
    """theta2 = (sigma^2 / sigma0^2)^2 and theta1 = eta * theta2."""
    if sigma_sq_hat <= 0 or sigma0_sq_hat <= 0:
        raise ValidationError("plug-in maps need positive variance estimates")
    theta2 = (sigma_sq_hat / sigma0_sq_hat) ** 2
    return theta2, eta_hat * theta2


def theta0_hat(lambda_hat: float, theta1_hat: float, theta2_hat: float) -> float:
    """theta0 = -lambda_1 + theta1^2 / (4 theta2) + pi^2 theta2."""
    if theta2_hat <= 0:
        raise ValidationError("theta0 plug-in needs theta2 > 0")
    return -lambda_hat + theta1_hat ** 2 / (4.0 * theta2_hat) + math.pi ** 2 * theta2_hat


def estimate_from_arrays(column_values: np.ndarray, column_y: np.ndarray,
                         thinned_slices: np.ndarray, grid: GridSpec,
                         config: EstimationConfig, seed: int,
                         rep_id: int | None = None) -> EstimateRecord:
    """Run the full two-stage pipeline on pre-gathered field extracts.

    ``column_values`` is the (n_time+1, m) bundle at the thinned columns;
    ``thinned_slices`` holds the full spatial slices at the thinned times.
    Both :func:`estimate_parameters` and the fused simulate-and-estimate
    path feed this single numeric route.
    """
    profile = realized_vol_from_columns(column_values, column_y, grid.horizon)
    cfit = fit_min_contrast(profile, config)
    dt2 = (grid.n_time // config.n2_temporal) * grid.dt
    path = project_from_slices(thinned_slices, 1, cfit.eta_hat, dt2, config.regime)

    flags = dict(cfit.diagnostics)
    if config.regime is Regime.FIXED_T:
        sigma_sq = qv_sigma2(path)
        lam1 = None
        theta0 = None
    else:
        qfit = fit_ou_qmle(path, config.lambda_bounds)
        sigma_sq = qfit.sigma_sq_hat
        lam1 = qfit.lambda_hat
        flags["qmle_fallback"] = qfit.fallback
    if sigma_sq <= 0:
        raise EstimationError("sigma^2 estimate is nonpositive; the field is degenerate")
    theta2, theta1 = plug_in_theta(sigma_sq, cfit.sigma0_sq_hat, cfit.eta_hat)
    if config.regime is Regime.LARGE_T:
        theta0 = theta0_hat(lam1, theta1, theta2)
    return EstimateRecord(
        regime=config.regime,
        sigma0_sq=cfit.sigma0_sq_hat,
        eta=cfit.eta_hat,
        sigma_sq=sigma_sq,
        theta2=theta2,
        theta1=theta1,
        lambda1=lam1,
        theta0=theta0,
        seed=seed,
        rep_id=rep_id,
        flags=flags,
    )


def estimate_parameters(fielddata: FieldDataset, config: EstimationConfig,
                        rep_id: int | None = None) -> EstimateRecord:
    """Two-stage estimation on a materialized field dataset."""
    spec = fielddata.spec
    cols, y = thinned_columns(config, spec.n_space)
    t_idx = thinned_time_indices(config, spec.n_time)
    return estimate_from_arrays(fielddata.values[:, cols - 1], y,
                                fielddata.values[t_idx], spec, config,
                                seed=fielddata.seed, rep_id=rep_id)


def simulate_and_estimate(params: SpdeParams, grid: GridSpec,
                          config: EstimationConfig, seed: int,
                          rep_id: int | None = None) -> EstimateRecord:
    """Fused simulation and estimation without materializing the field.

    Synthesizes only what the estimators read: the thinned columns at all
    times and the full spatial slices at the thinned times.  The
    coordinate paths are identical to a full ``simulate_field`` run with
    the same seed, and the resulting estimates agree with
    ``estimate_parameters`` on the materialized field up to floating-point
    reduction order (~1e-12 relative).
    """
    cols, y = thinned_columns(config, grid.n_space)
    t_idx = thinned_time_indices(config, grid.n_time)
    col_sums = np.zeros((grid.n_time + 1, len(cols)))
    slice_sums = np.zeros((len(t_idx), grid.n_space))
    for k_lo, paths in iter_coordinate_blocks(params, grid, seed):
        k_hi = k_lo + paths.shape[0]
        col_sums += paths.T @ sin_table_block(k_lo, k_hi, grid.n_space, cols)
        slice_sums += paths[:, t_idx].T @ sin_table_block(k_lo, k_hi, grid.n_space)
    # The eigenfunctions carry exp(-eta y / 2) with the *true* curvature;
    # it scales columns of the synthesized field, not the sine table.
    col_sums *= np.exp(-0.5 * params.eta * y)
    slice_sums *= np.exp(-0.5 * params.eta * grid.space_points())
    return estimate_from_arrays(col_sums, y, slice_sums, grid, config,
                                seed=seed, rep_id=rep_id)
