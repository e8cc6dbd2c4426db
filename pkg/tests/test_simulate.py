import math

import numpy as np
import pytest

from spdefit import (FieldDataset, GridSpec, SimulationError, SinkWriteError,
                     SpdeParams, ValidationError, eigenfunction_eval,
                     eigenvalue, simulate_coordinates, simulate_field,
                     synthesize_slice, synthesize_slices)
from spdefit.simulate import MODE_BLOCK, mode_generator, sin_table_block

# Sample variance of x_1(1) for theta = (0, 0.5, 0.1, 1):
# sigma^2 (1 - e^{-2 lambda_1}) / (2 lambda_1), frozen from 30-digit arithmetic.
STATIONARY_VAR_T1 = 0.29783649465752802


class TestGridSpec:
    def test_valid(self):
        g = GridSpec(n_time=10, n_space=4, horizon=2.0, n_modes=3)
        assert g.dt == 0.2
        np.testing.assert_allclose(g.space_points(), [0.25, 0.5, 0.75, 1.0])
        assert g.time_points().shape == (11,)

    @pytest.mark.parametrize("kwargs, key", [
        (dict(n_time=-1, n_space=4, horizon=1.0, n_modes=3), "n_time"),
        (dict(n_time=10, n_space=0, horizon=1.0, n_modes=3), "n_space"),
        (dict(n_time=10, n_space=4, horizon=0.0, n_modes=3), "horizon"),
        (dict(n_time=10, n_space=4, horizon=1.0, n_modes=0), "n_modes"),
        (dict(n_time=10.5, n_space=4, horizon=1.0, n_modes=3), "n_time"),
    ])
    def test_invalid(self, kwargs, key):
        with pytest.raises(ValidationError, match=key):
            GridSpec(**kwargs)

    def test_degenerate_time_grid(self):
        g = GridSpec(n_time=0, n_space=4, horizon=1.0, n_modes=3)
        with pytest.raises(ValidationError):
            g.dt


class TestSinTable:
    def test_matches_direct_evaluation(self):
        # Spec'd tolerance for table-vs-direct agreement is 1e-12.
        m_space = 173
        table = sin_table_block(1, 260, m_space)
        ks = np.arange(1, 260)
        j = np.arange(1, m_space + 1)
        direct = math.sqrt(2) * np.sin(np.pi * np.outer(ks, j) / m_space)
        np.testing.assert_allclose(table, direct, atol=1e-12)

    def test_boundary_column_is_exact_zero(self):
        table = sin_table_block(1, 50, 64)
        assert np.all(table[:, -1] == 0.0)

    def test_column_subset_matches_full(self):
        cols = np.array([3, 17, 40], dtype=np.int64)
        full = sin_table_block(1, 30, 64)
        sub = sin_table_block(1, 30, 64, cols)
        np.testing.assert_array_equal(sub, full[:, cols - 1])


class TestSimulateCoordinates:
    def test_noise_free_paths_are_zero(self, small_grid):
        p = SpdeParams(0.0, 0.5, 0.1, 0.0)
        coords = simulate_coordinates(p, small_grid, seed=5)
        assert np.all(coords.values == 0.0)

    def test_deterministic(self, small_params, small_grid):
        a = simulate_coordinates(small_params, small_grid, seed=99)
        b = simulate_coordinates(small_params, small_grid, seed=99)
        np.testing.assert_array_equal(a.values, b.values)
        c = simulate_coordinates(small_params, small_grid, seed=100)
        assert not np.array_equal(a.values, c.values)

    def test_initial_condition(self, small_params, small_grid):
        coords = simulate_coordinates(small_params, small_grid, seed=1)
        assert np.all(coords.values[0] == 0.0)

    def test_rejects_nondissipative_modes(self, small_grid):
        p = SpdeParams(5.0, 0.1, 0.1, 1.0)  # lambda_1 < 0
        with pytest.raises(SimulationError, match="lambda_1"):
            simulate_coordinates(p, small_grid, seed=1)

    def test_rejects_empty_time_grid(self, small_params):
        g = GridSpec(n_time=0, n_space=8, horizon=1.0, n_modes=4)
        with pytest.raises(ValidationError):
            simulate_coordinates(small_params, g, seed=1)

    def test_stationary_variance_monte_carlo(self):
        # 500 replications of x_1(1); the exact transition makes the N = 10^4
        # recursion land on the true t = 1 marginal.
        p = SpdeParams(0.0, 0.5, 0.1, 1.0)
        g = GridSpec(n_time=10_000, n_space=2, horizon=1.0, n_modes=1)
        vals = np.array([simulate_coordinates(p, g, seed=1000 + r).values[-1, 0]
                         for r in range(500)])
        sample_var = vals.var(ddof=1)
        se = STATIONARY_VAR_T1 * math.sqrt(2.0 / 499)
        assert abs(sample_var - STATIONARY_VAR_T1) < 3 * se

    def test_mode_independence(self):
        # Correlation of x_1(1) and x_2(1) across 500 replications.
        p = SpdeParams(0.0, 0.5, 0.1, 1.0)
        g = GridSpec(n_time=8, n_space=2, horizon=1.0, n_modes=2)
        ends = np.array([simulate_coordinates(p, g, seed=r).values[-1]
                         for r in range(500)])
        corr = np.corrcoef(ends[:, 0], ends[:, 1])[0, 1]
        assert abs(corr) < 3.0 / math.sqrt(500)

    def test_mode_stream_prefix_stability(self):
        # A mode's draws depend only on (seed, k), not on batch sizes.
        g1 = mode_generator(7, 3).standard_normal(10)
        g2 = mode_generator(7, 3)
        np.testing.assert_array_equal(
            g1, np.concatenate([g2.standard_normal(4), g2.standard_normal(6)]))


class TestSynthesize:
    def test_zero_coords_give_zero_slice(self, small_params, small_grid):
        out = synthesize_slice(np.zeros(small_grid.n_modes), small_params, small_grid)
        assert np.all(out == 0.0)

    def test_unit_coordinate_reproduces_basis(self, small_params, small_grid):
        k0 = 5
        coords = np.zeros(small_grid.n_modes)
        coords[k0 - 1] = 1.0
        out = synthesize_slice(coords, small_params, small_grid)
        expected = np.array([eigenfunction_eval(k0, small_params, y)
                             for y in small_grid.space_points()])
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_three_mode_brute_force(self):
        # K = 3, coords = (1, -0.5, 0.25), theta1 = 0, M = 4: independent
        # three-term sine sums at each of the four points.
        p = SpdeParams(0.0, 0.0, 0.1, 1.0)
        g = GridSpec(n_time=1, n_space=4, horizon=1.0, n_modes=3)
        coords = np.array([1.0, -0.5, 0.25])
        out = synthesize_slice(coords, p, g)
        for j in range(1, 5):
            y = j / 4
            brute = sum(c * math.sqrt(2) * math.sin(math.pi * k * y)
                        for k, c in zip((1, 2, 3), coords))
            assert out[j - 1] == pytest.approx(brute, abs=1e-12)

    def test_rejects_wrong_mode_count(self, small_params, small_grid):
        with pytest.raises(ValidationError, match="modes"):
            synthesize_slices(np.zeros((2, 3)), small_params, small_grid)


class TestSimulateField:
    def test_degenerate_time_grid_emits_initial_slice(self, small_params):
        g = GridSpec(n_time=0, n_space=8, horizon=1.0, n_modes=4)
        f = simulate_field(small_params, g, seed=1)
        assert f.values.shape == (1, 8)
        assert np.all(f.values == 0.0)

    def test_streamed_equals_two_phase_bitwise(self, small_params):
        # Cross both the mode-block boundary and the time-window boundary,
        # ending in a merged final window.
        g = GridSpec(n_time=259, n_space=40, horizon=1.0, n_modes=MODE_BLOCK + 70)
        field = simulate_field(small_params, g, seed=31)
        coords = simulate_coordinates(small_params, g, seed=31)
        two_phase = np.vstack([np.zeros(g.n_space),
                               synthesize_slices(coords.values[1:], small_params, g)])
        assert field.values.tobytes() == two_phase.tobytes()

    def test_single_step_grid_bitwise(self, small_params):
        g = GridSpec(n_time=1, n_space=12, horizon=1.0, n_modes=9)
        field = simulate_field(small_params, g, seed=2)
        coords = simulate_coordinates(small_params, g, seed=2)
        two_phase = np.vstack([np.zeros(12),
                               synthesize_slices(coords.values[1:], small_params, g)])
        assert field.values.tobytes() == two_phase.tobytes()

    def test_boundary_column_identically_zero(self, small_field):
        assert np.all(small_field.values[:, -1] == 0.0)

    def test_deterministic_bytes(self, small_params, small_grid):
        a = simulate_field(small_params, small_grid, seed=7)
        b = simulate_field(small_params, small_grid, seed=7)
        assert a.values.tobytes() == b.values.tobytes()

    def test_sink_receives_ordered_slices(self, small_params):
        g = GridSpec(n_time=5, n_space=6, horizon=1.0, n_modes=3)
        seen = []
        summary = simulate_field(small_params, g, seed=3,
                                 sink=lambda i, v: seen.append((i, v.copy())))
        assert [i for i, _ in seen] == list(range(6))
        assert summary.values is None
        collected = simulate_field(small_params, g, seed=3)
        np.testing.assert_array_equal(np.vstack([v for _, v in seen]),
                                      collected.values)

    def test_sink_failure_names_slice(self, small_params):
        g = GridSpec(n_time=5, n_space=6, horizon=1.0, n_modes=3)

        def bad_sink(i, values):
            if i == 3:
                raise OSError("disk full")

        with pytest.raises(SinkWriteError, match="slice 3"):
            simulate_field(small_params, g, seed=3, sink=bad_sink)

    def test_pointwise_variance_against_series_oracle(self):
        # E[X_t(y)^2] = sum_k sigma^2/(2 lambda_k) (1 - e^{-2 lambda_k t}) e_k(y)^2
        # at y = 0.5, t = 1, theta = (0, 0.5, 0.1, 1), K = 2e4; one exact
        # transition step reaches t = 1, so n_time = 1 suffices.
        p = SpdeParams(0.0, 0.5, 0.1, 1.0)
        k_modes = 20_000
        g = GridSpec(n_time=1, n_space=2, horizon=1.0, n_modes=k_modes)
        ks = np.arange(1, k_modes + 1)
        lams = eigenvalue(ks, p)
        e_half_sq = 2.0 * np.sin(np.pi * ks * 0.5) ** 2 * np.exp(-p.eta * 0.5)
        series = float(np.sum((1.0 - np.exp(-2.0 * lams)) / (2.0 * lams) * e_half_sq))

        col = g.n_space // 2  # y = 0.5 is column index M/2 (1-based)
        reps = 200
        vals = np.array([simulate_field(p, g, seed=5000 + r).values[1, col - 1]
                         for r in range(reps)])
        mean_square = float(np.mean(vals ** 2))
        se = series * math.sqrt(2.0 / reps)  # Var(X^2) = 2 (E X^2)^2 for a Gaussian
        assert abs(mean_square - series) < 3 * se

    def test_summary_dataset_refuses_iteration(self, small_params):
        g = GridSpec(n_time=2, n_space=4, horizon=1.0, n_modes=2)
        summary = simulate_field(small_params, g, seed=1, sink=lambda i, v: None)
        with pytest.raises(ValidationError):
            list(summary.iter_slices())


class TestFieldDataset:
    def test_shape_and_finiteness_validation(self, small_params):
        g = GridSpec(n_time=2, n_space=4, horizon=1.0, n_modes=2)
        with pytest.raises(ValidationError, match="shape"):
            FieldDataset(spec=g, params=small_params, seed=0, values=np.zeros((2, 4)))
        bad = np.zeros((3, 4))
        bad[1, 2] = np.inf
        with pytest.raises(ValidationError, match="finite"):
            FieldDataset(spec=g, params=small_params, seed=0, values=bad)
