"""Spectral simulation of the SPDE on a discrete space-time grid.

The field is generated by the truncated expansion

    X(t_i, y_j) = sum_{k=1..K} x_k(t_i) e_k(y_j),

where each coordinate x_k is an exactly discretized Ornstein-Uhlenbeck
path, x_k(t_i) = a_k x_k(t_{i-1}) + sqrt(s_sq_k) Z, with (a_k, s_sq_k)
from the one-step transition kernel and Z a standard normal draw.

Randomness
----------
Every mode owns an independent counter-based stream: a Philox 4x64 bit
generator keyed by (seed, k), consumed in time order through numpy's
ziggurat normal sampler.  The draw sequence of a mode therefore depends
only on (seed, k), never on how many modes are simulated alongside it or
how the work is chunked, so mode-parallel or window-streamed schedules
reproduce identical paths.  The exact sampler is pinned per build and
recorded in :data:`PROVENANCE`.

Memory
------
``simulate_field`` streams time slices through a consumer and keeps only
the mode table, one time window of coordinates, and the per-mode carry
state, so its footprint does not grow with the number of time steps.
``simulate_coordinates`` materializes the full (n_time+1, n_modes) array
and is meant for moderate sizes.

The sine factors sin(pi k j / M) are read from a table of sin(pi q / M),
q = k*j mod 2M, which is exact angle reduction: every entry is a correctly
rounded sine of a small argument, so the table agrees with direct
evaluation to a few ulps for any k.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
from numba import njit

from .errors import SimulationError, SinkWriteError, ValidationError
from .model import SQRT2, SpdeParams, eigenvalue, ou_transition_arrays

#: RNG and sampler identity recorded in every dataset this build produces.
PROVENANCE = "philox4x64(key=seed,mode)/numpy-ziggurat/float64"

# Modes processed per block in mode-major sweeps.  Affects only grouping of
# partial sums in the reduced-output paths, never the coordinate paths.
MODE_BLOCK = 2048

# Time slices synthesized per window in simulate_field / synthesize_slices.
TIME_WINDOW = 256

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class GridSpec:
    """Observation grid: t_i = i T / N for i=0..N and y_j = j / M for j=1..M.

    ``n_time == 0`` is a degenerate grid consisting of the initial slice
    only; it is accepted by ``simulate_field`` but not by the coordinate
    simulator.
    """

    n_time: int
    n_space: int
    horizon: float
    n_modes: int

    def __post_init__(self):
        for name in ("n_time", "n_space", "n_modes"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise ValidationError(f"grid.{name} must be an integer, got {value!r}")
        if self.n_time < 0:
            raise ValidationError(f"grid.n_time must satisfy >= 0, got {self.n_time!r}")
        if self.n_space < 1:
            raise ValidationError(f"grid.n_space must satisfy >= 1, got {self.n_space!r}")
        if self.n_modes < 1:
            raise ValidationError(f"grid.n_modes must satisfy >= 1, got {self.n_modes!r}")
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ValidationError(f"grid.horizon must satisfy > 0, got {self.horizon!r}")

    @property
    def dt(self) -> float:
        if self.n_time == 0:
            raise ValidationError("dt is undefined for a grid with n_time == 0")
        return self.horizon / self.n_time

    def space_points(self) -> np.ndarray:
        """Spatial grid y_j = j / M, j = 1..M (includes the boundary y = 1)."""
        return np.arange(1, self.n_space + 1, dtype=np.float64) / self.n_space

    def time_points(self) -> np.ndarray:
        if self.n_time == 0:
            return np.zeros(1)
        return np.arange(self.n_time + 1, dtype=np.float64) * (self.horizon / self.n_time)


@dataclass(frozen=True)
class CoordMatrix:
    """Coordinate paths x_k(t_i); ``values[i, k-1]`` is mode k at time t_i."""

    values: np.ndarray  # (n_time + 1, n_modes)
    spec: GridSpec
    params: SpdeParams
    seed: int
    provenance: str = PROVENANCE

    @property
    def n_modes(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FieldDataset:
    """Discrete observations X(t_i, y_j) plus the provenance that made them.

    ``values`` has shape (n_time + 1, n_space); row 0 is the zero initial
    slice.  ``values`` is None for summary objects describing a dataset
    that was streamed to a sink instead of materialized.
    """

    spec: GridSpec
    params: SpdeParams
    seed: int
    values: np.ndarray | None
    provenance: str = PROVENANCE

    def __post_init__(self):
        if self.values is None:
            return
        expected = (self.spec.n_time + 1, self.spec.n_space)
        if self.values.shape != expected:
            raise ValidationError(
                f"field values shape {self.values.shape} does not match grid {expected}")
        if not np.isfinite(self.values).all():
            raise ValidationError("field contains non-finite values")

    def iter_slices(self) -> Iterator[np.ndarray]:
        if self.values is None:
            raise ValidationError("dataset is a summary; its slices were streamed to a sink")
        yield from self.values


# ---------------------------------------------------------------------------
# mode table and streams
# ---------------------------------------------------------------------------

_SIN_BASE_CACHE: dict[int, np.ndarray] = {}


def _sin_base(m_space: int) -> np.ndarray:
    """sin(pi q / M) for q = 0..2M-1; the period of q -> sin(pi k j / M)."""
    base = _SIN_BASE_CACHE.get(m_space)
    if base is None:
        base = np.sin(np.pi * np.arange(2 * m_space) / m_space)
        # q = 0 and q = M are exact zeros of the basis (sin of 0 and pi);
        # pinning them keeps the Dirichlet boundary column identically zero.
        base[0] = 0.0
        base[m_space] = 0.0
        _SIN_BASE_CACHE[m_space] = base
    return base


def sin_table_block(k_lo: int, k_hi: int, m_space: int, cols: np.ndarray | None = None) -> np.ndarray:
    """sqrt(2) sin(pi k j / M) for modes k in [k_lo, k_hi) and columns j.

    ``cols`` is a 1-based array of spatial indices j; None means the full
    grid j = 1..M.
    """
    if cols is None:
        cols = np.arange(1, m_space + 1, dtype=np.int64)
    ks = np.arange(k_lo, k_hi, dtype=np.int64)
    idx = (ks[:, None] * cols[None, :]) % (2 * m_space)
    return SQRT2 * _sin_base(m_space)[idx]


def _full_sin_table(n_modes: int, m_space: int) -> np.ndarray:
    table = np.empty((n_modes, m_space))
    for lo in range(1, n_modes + 1, MODE_BLOCK):
        hi = min(lo + MODE_BLOCK, n_modes + 1)
        table[lo - 1:hi - 1] = sin_table_block(lo, hi, m_space)
    return table


def mode_generator(seed: int, k: int) -> np.random.Generator:
    """The independent stream of mode k: Philox keyed by (seed, k)."""
    key = np.array([seed & _MASK64, k], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _transition_arrays(params: SpdeParams, spec: GridSpec):
    lams = eigenvalue(np.arange(1, spec.n_modes + 1), params)
    if lams[0] <= 0:
        raise SimulationError(
            f"lambda_1 = {lams[0]:.6g} <= 0: every mode must be dissipative "
            "(decrease theta0 or increase theta2)")
    a, s_sq = ou_transition_arrays(lams, params.sigma, spec.dt)
    return a, np.sqrt(s_sq)


@njit(cache=True)
def _scan_ar1(a, s, z, carry, out):  # pragma: no cover - exercised via wrappers
    """out[k, i] = a[k] * prev + s[k] * z[k, i], rolling prev from carry[k]."""
    n_modes, n_steps = z.shape
    for k in range(n_modes):
        x = carry[k]
        ak = a[k]
        sk = s[k]
        for i in range(n_steps):
            x = ak * x + sk * z[k, i]
            out[k, i] = x
        carry[k] = x


def iter_coordinate_blocks(params: SpdeParams, spec: GridSpec, seed: int):
    """Yield (k_lo, paths) with paths[m, i] = x_{k_lo+m}(t_i), i = 0..n_time.

    Mode-major sweep in blocks of :data:`MODE_BLOCK` modes; each block holds
    the full time span.  Block boundaries do not influence the path values.
    """
    if spec.n_time < 1:
        raise ValidationError("coordinate simulation requires n_time >= 1")
    a, s = _transition_arrays(params, spec)
    n = spec.n_time
    for k_lo in range(1, spec.n_modes + 1, MODE_BLOCK):
        k_hi = min(k_lo + MODE_BLOCK, spec.n_modes + 1)
        nb = k_hi - k_lo
        z = np.empty((nb, n))
        for m, k in enumerate(range(k_lo, k_hi)):
            z[m] = mode_generator(seed, k).standard_normal(n)
        paths = np.zeros((nb, n + 1))
        _scan_ar1(a[k_lo - 1:k_hi - 1], s[k_lo - 1:k_hi - 1], z,
                  paths[:, 0].copy(), paths[:, 1:])
        yield k_lo, paths


def simulate_coordinates(params: SpdeParams, spec: GridSpec, seed: int) -> CoordMatrix:
    """Simulate all K coordinate paths on the time grid (materialized).

    Memory grows as n_modes * n_time; use :func:`iter_coordinate_blocks` or
    :func:`simulate_field` for grids where that is prohibitive.
    """
    values = np.empty((spec.n_time + 1, spec.n_modes))
    for k_lo, paths in iter_coordinate_blocks(params, spec, seed):
        values[:, k_lo - 1:k_lo - 1 + paths.shape[0]] = paths.T
    return CoordMatrix(values=values, spec=spec, params=params, seed=seed)


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------


def _row_chunks(n: int, width: int = TIME_WINDOW):
    """Split range(n) into windows, avoiding a trailing single-row window."""
    lo = 0
    while lo < n:
        hi = min(lo + width, n)
        if n - hi == 1:
            hi = n
        yield lo, hi
        lo = hi


def _exp_column_factors(params: SpdeParams, spec: GridSpec) -> np.ndarray:
    return np.exp(-0.5 * params.eta * spec.space_points())


def synthesize_slices(coords: np.ndarray, params: SpdeParams, spec: GridSpec) -> np.ndarray:
    """Field rows X(., y_j) = sum_k coords[., k] e_k(y_j) for a batch of times.

    ``coords`` has shape (n_rows, n_modes).  This is the synthesis kernel
    behind ``simulate_field``; feeding it the rows of a ``CoordMatrix``
    reproduces the streamed field bit for bit.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    if coords.shape[1] != spec.n_modes:
        raise ValidationError(
            f"coords have {coords.shape[1]} modes, grid expects {spec.n_modes}")
    table = _full_sin_table(spec.n_modes, spec.n_space)
    out = np.empty((coords.shape[0], spec.n_space))
    for lo, hi in _row_chunks(coords.shape[0]):
        out[lo:hi] = coords[lo:hi] @ table
    out *= _exp_column_factors(params, spec)
    return out


def synthesize_slice(coords_at_t: np.ndarray, params: SpdeParams, spec: GridSpec) -> np.ndarray:
    """Single-slice convenience wrapper around :func:`synthesize_slices`."""
    return synthesize_slices(coords_at_t, params, spec)[0]


def simulate_field(params: SpdeParams, spec: GridSpec, seed: int,
                   sink: Callable[[int, np.ndarray], None] | None = None) -> FieldDataset:
    """Generate the field, streaming slices i = 0..n_time in time order.

    With ``sink=None`` the slices are collected into the returned dataset.
    Otherwise ``sink(i, values)`` is called once per slice and the returned
    dataset is a summary with ``values=None``; sink failures are re-raised
    as :class:`SinkWriteError` naming the slice index.  Peak memory is the
    mode table plus one time window of coordinates, independent of n_time.
    """
    n, m = spec.n_time, spec.n_space
    collect = sink is None
    storage = np.zeros((n + 1, m)) if collect else None

    def emit(i: int, row: np.ndarray):
        if collect:
            storage[i] = row
        else:
            try:
                sink(i, row)
            except Exception as exc:
                raise SinkWriteError(f"sink failed at slice {i}: {exc}") from exc

    emit(0, np.zeros(m))
    if n >= 1:
        a, s = _transition_arrays(params, spec)
        table = _full_sin_table(spec.n_modes, m)
        colfac = _exp_column_factors(params, spec)
        gens = [mode_generator(seed, k) for k in range(1, spec.n_modes + 1)]
        carry = np.zeros(spec.n_modes)
        z = np.empty((spec.n_modes, TIME_WINDOW + 1))
        for lo, hi in _row_chunks(n):
            w = hi - lo
            zw = z[:, :w]
            for km, gen in enumerate(gens):
                zw[km] = gen.standard_normal(w)
            paths = np.empty((spec.n_modes, w))
            _scan_ar1(a, s, zw, carry, paths)
            window = paths.T @ table
            window *= colfac
            for r in range(w):
                emit(lo + 1 + r, window[r])
    return FieldDataset(spec=spec, params=params, seed=seed,
                        values=storage if collect else None)
