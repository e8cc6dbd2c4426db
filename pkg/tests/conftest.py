"""Shared fixtures and independent oracles for the test suite.

Oracle helpers here deliberately avoid the package's own kernels: OU paths
are generated with inline exp/sqrt formulas and profiles are built from
the target curve directly, so tests compare implementation against
independent arithmetic.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from spdefit import (EstimationConfig, FieldDataset, GridSpec, Regime,
                     SpdeParams, VolProfile, simulate_field)


def exact_ou_path(lam: float, sigma: float, dt: float, n_steps: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Exactly discretized OU path from 0, written out with bare formulas."""
    a = math.exp(-lam * dt)
    s = sigma * math.sqrt((1.0 - math.exp(-2.0 * lam * dt)) / (2.0 * lam))
    x = np.zeros(n_steps + 1)
    z = rng.standard_normal(n_steps)
    for i in range(n_steps):
        x[i + 1] = a * x[i] + s * z[i]
    return x


def curve_profile(sigma0_sq: float, eta: float, y: np.ndarray,
                  n_time: int = 1000, dt: float = 1e-3,
                  noise: np.ndarray | None = None) -> VolProfile:
    """Profile whose z values sit on (or near) the contrast target curve."""
    z = sigma0_sq * np.exp(-eta * y) / math.sqrt(math.pi)
    if noise is not None:
        z = z + noise
    return VolProfile(y=y, z=z, n_time=n_time, dt=dt)


@pytest.fixture(scope="session")
def small_params() -> SpdeParams:
    return SpdeParams(theta0=0.0, theta1=0.5, theta2=0.1, sigma=1.0)


@pytest.fixture(scope="session")
def small_grid() -> GridSpec:
    return GridSpec(n_time=60, n_space=80, horizon=1.0, n_modes=120)


@pytest.fixture(scope="session")
def small_field(small_params, small_grid) -> FieldDataset:
    return simulate_field(small_params, small_grid, seed=20240601)


@pytest.fixture(scope="session")
def small_config() -> EstimationConfig:
    return EstimationConfig(regime=Regime.FIXED_T, m_spatial=6, n2_temporal=12)
