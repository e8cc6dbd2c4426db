"""Monte Carlo studies of the estimators against their limit distributions.

A study replicates simulate-then-estimate with replication-specific seeds,
centers every estimator at the truth, scales it by its theoretical rate
(sqrt(m N) for the contrast pair, sqrt(N2) for sigma^2/theta2/theta1,
sqrt(T) for lambda_1 and theta0), and summarizes each standardized sample
against its limit normal: mean, variance, Kolmogorov-Smirnov distance,
ECDF, Q-Q and histogram tables.  A secondary studentized column rescales
by limit standard deviations evaluated at each replication's own
estimates.

Every replication is a pure function of (config, rep_id), so execution
order is irrelevant; the report is rebuilt deterministically from the
records alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from . import asymptotics
from .errors import StudyError, ValidationError
from .estimate import (EstimateRecord, EstimationConfig, Regime,
                       simulate_and_estimate, thinned_columns)
from .model import SpdeParams, derived_params
from .simulate import PROVENANCE, GridSpec

#: Exponent rho_1 in the reported spatial rate ratios.
RATE_RHO1 = 0.01

#: Histogram resolution of the report tables.
HIST_BINS = 30

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class StudyConfig:
    """Everything one replication needs plus the replication plan."""

    params_true: SpdeParams
    grid: GridSpec
    est: EstimationConfig
    replications: int
    base_seed: int

    def __post_init__(self):
        if self.replications < 2:
            raise ValidationError(
                f"study.replications must satisfy >= 2, got {self.replications!r}")

    @property
    def regime(self) -> Regime:
        return self.est.regime


@dataclass(frozen=True)
class StatSummary:
    """Distributional summary of one standardized statistic."""

    name: str
    n: int
    mean: float
    variance: float
    ks_stat: float
    limit_variance: float
    ecdf_x: np.ndarray
    ecdf_y: np.ndarray
    qq_theoretical: np.ndarray
    qq_empirical: np.ndarray
    hist_left: np.ndarray
    hist_right: np.ndarray
    hist_count: np.ndarray


@dataclass(frozen=True)
class StudyReport:
    """Records, standardized samples, summaries, and rate diagnostics."""

    config: StudyConfig
    records: list[EstimateRecord]
    failures: list[tuple[int, str]]
    standardized: dict[str, np.ndarray]
    studentized: dict[str, np.ndarray]
    summaries: dict[str, StatSummary]
    limit_variances: dict[str, float]
    rate_diagnostics: dict[str, float]
    provenance: str = PROVENANCE


def replication_seed(base_seed: int, rep_id: int) -> int:
    """Field seed of one replication, hashed from (base_seed, rep_id)."""
    ss = np.random.SeedSequence(entropy=(base_seed & _MASK64, rep_id))
    return int(ss.generate_state(1, np.uint64)[0])


def run_replication(config: StudyConfig, rep_id: int) -> EstimateRecord:
    """Simulate and estimate one replication; independent of all others."""
    seed = replication_seed(config.base_seed, rep_id)
    try:
        return simulate_and_estimate(config.params_true, config.grid, config.est,
                                     seed, rep_id=rep_id)
    except Exception as exc:
        raise type(exc)(f"replication {rep_id}: {exc}") from exc


def ks_statistic(samples, cdf) -> float:
    """Two-sided Kolmogorov-Smirnov distance between samples and a CDF.

    sup over the sorted sample of max(i/n - F(x_i), F(x_i) - (i-1)/n),
    which equals the sup over both one-sided gaps in absolute value.
    """
    xs = np.sort(np.asarray(samples, dtype=np.float64))
    n = len(xs)
    if n == 0:
        raise ValidationError("ks_statistic needs a nonempty sample")
    try:
        f = np.asarray(cdf(xs), dtype=np.float64)
        if f.shape != xs.shape:
            raise TypeError
    except TypeError:
        f = np.array([cdf(x) for x in xs], dtype=np.float64)
    i = np.arange(1, n + 1) / n
    return float(max(np.max(i - f), np.max(f - (i - 1 / n))))


def summarize_statistic(name: str, samples: np.ndarray,
                        limit_variance: float) -> StatSummary:
    """Summaries of a standardized sample against N(0, limit_variance)."""
    xs = np.sort(np.asarray(samples, dtype=np.float64))
    n = len(xs)
    if n < 2:
        raise ValidationError("summaries need at least two samples")
    sd = math.sqrt(limit_variance)
    ks = ks_statistic(xs, lambda x: ndtr(x / sd))
    p = (np.arange(1, n + 1) - 0.5) / n
    counts, edges = np.histogram(xs, bins=HIST_BINS)
    return StatSummary(
        name=name,
        n=n,
        mean=float(np.mean(xs)),
        variance=float(np.var(xs, ddof=1)),
        ks_stat=ks,
        limit_variance=limit_variance,
        ecdf_x=xs,
        ecdf_y=np.arange(1, n + 1) / n,
        qq_theoretical=sd * ndtri(p),
        qq_empirical=xs,
        hist_left=edges[:-1],
        hist_right=edges[1:],
        hist_count=counts,
    )


def rate_diagnostics(config: StudyConfig) -> dict[str, float]:
    """The rate-condition ratios of both stages, reported but never enforced."""
    n = config.grid.n_time
    m_space = config.grid.n_space
    t = config.grid.horizon
    m = config.est.m_spatial
    n2 = config.est.n2_temporal
    return {
        "n2_3/2 / (m n)": n2 ** 1.5 / (m * n),
        "n2_3/2 / m_space^(1-rho1)": n2 ** 1.5 / m_space ** (1.0 - RATE_RHO1),
        "n2_5/2 / (t_3/2 n m)": n2 ** 2.5 / (t ** 1.5 * n * m),
        "n2_3 / (t_2 m_space^(1-rho1))": n2 ** 3 / (t ** 2 * m_space ** (1.0 - RATE_RHO1)),
        "rho1": RATE_RHO1,
    }


def _truth(config: StudyConfig) -> dict[str, float]:
    params = config.params_true
    derived = derived_params(params)
    return {
        "sigma0_sq": derived.sigma0_sq,
        "eta": derived.eta,
        "sigma_sq": params.sigma ** 2,
        "theta2": params.theta2,
        "theta1": params.theta1,
        "lambda1": derived.lambda1,
        "theta0": params.theta0,
    }


def _rates(config: StudyConfig) -> dict[str, float]:
    rmn = math.sqrt(config.est.m_spatial * config.grid.n_time)
    rn2 = math.sqrt(config.est.n2_temporal)
    rt = math.sqrt(config.grid.horizon)
    rates = {"sigma0_sq": rmn, "eta": rmn, "sigma_sq": rn2,
             "theta2": rn2, "theta1": rn2}
    if config.regime is Regime.LARGE_T:
        rates["lambda1"] = rt
        rates["theta0"] = rt
    return rates


def limit_variances(config: StudyConfig) -> dict[str, float]:
    """Diagonal limit variances of every standardized statistic."""
    params = config.params_true
    derived = derived_params(params)
    ccov = asymptotics.contrast_cov((derived.sigma0_sq, derived.eta),
                                    config.est.delta_margin)
    acov = asymptotics.adaptive_cov(params, config.regime)
    out = {
        "sigma0_sq": float(ccov[0, 0]),
        "eta": float(ccov[1, 1]),
        "sigma_sq": float(acov[0, 0]),
        "theta2": float(acov[1, 1]),
        "theta1": float(acov[2, 2]),
    }
    if config.regime is Regime.LARGE_T:
        out["lambda1"] = 2.0 * derived.lambda1
        out["theta0"] = float(acov[3, 3])
    return out


def _studentizing_sd(stat: str, rec: EstimateRecord, delta_margin: float,
                     gamma: float) -> float:
    """Limit standard deviation with the record's own estimates plugged in."""
    if stat in ("sigma0_sq", "eta"):
        ccov = asymptotics.contrast_cov((rec.sigma0_sq, rec.eta), delta_margin,
                                        gamma=gamma)
        return math.sqrt(ccov[0 if stat == "sigma0_sq" else 1,
                              0 if stat == "sigma0_sq" else 1])
    if stat == "sigma_sq":
        return math.sqrt(2.0) * rec.sigma_sq
    if stat == "theta2":
        return math.sqrt(8.0) * abs(rec.theta2)
    if stat == "theta1":
        return math.sqrt(8.0) * abs(rec.theta1)
    if stat in ("lambda1", "theta0"):
        return math.sqrt(max(2.0 * rec.lambda1, 0.0))
    raise KeyError(stat)


def build_report(records: list[EstimateRecord], config: StudyConfig,
                 failures: list[tuple[int, str]] | None = None) -> StudyReport:
    """Deterministic report from raw records; records are sorted by rep_id."""
    if not records:
        raise StudyError("cannot build a report from zero successful replications")
    records = sorted(records, key=lambda r: (r.rep_id is None, r.rep_id))
    truth = _truth(config)
    rates = _rates(config)
    lvars = limit_variances(config)
    gamma = asymptotics.gamma_constant()

    standardized: dict[str, np.ndarray] = {}
    studentized: dict[str, np.ndarray] = {}
    summaries: dict[str, StatSummary] = {}
    for stat, rate in rates.items():
        raw = np.array([getattr(r, stat) for r in records], dtype=np.float64)
        std = rate * (raw - truth[stat])
        standardized[stat] = std
        sds = np.array([_studentizing_sd(stat, r, config.est.delta_margin, gamma)
                        for r in records])
        with np.errstate(divide="ignore", invalid="ignore"):
            studentized[stat] = np.where(sds > 0, std / sds, np.nan)
        finite = std[np.isfinite(std)]
        summaries[stat] = summarize_statistic(stat, finite, lvars[stat])
    return StudyReport(config=config, records=records,
                       failures=list(failures or []),
                       standardized=standardized, studentized=studentized,
                       summaries=summaries, limit_variances=lvars,
                       rate_diagnostics=rate_diagnostics(config))


def run_study(config: StudyConfig, progress=None) -> StudyReport:
    """Run all replications and summarize.

    Replications are independent and seed-deterministic; failures are
    collected and reported, but the study aborts if more than 5% of them
    fail.  ``progress``, when given, is called with each finished rep_id.
    """
    # Surface configuration problems before paying for any replication.
    thinned_columns(config.est, config.grid.n_space)
    if config.est.n2_temporal > config.grid.n_time:
        raise ValidationError("estimation.n2_temporal exceeds grid.n_time")
    records: list[EstimateRecord] = []
    failures: list[tuple[int, str]] = []
    for rep_id in range(config.replications):
        try:
            records.append(run_replication(config, rep_id))
        except Exception as exc:
            failures.append((rep_id, str(exc)))
        if progress is not None:
            progress(rep_id)
        if len(failures) > 0.05 * config.replications:
            raise StudyError(
                f"{len(failures)} of {config.replications} replications failed; "
                f"first failure: rep {failures[0][0]}: {failures[0][1]}")
    return build_report(records, config, failures)
