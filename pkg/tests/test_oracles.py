import numpy as np
import pytest

from wganpinn import oracles as orc
from wganpinn.diffcore import rng_streams

PI = np.pi

# Pinned during development: Gauss-Hermite (128 nodes) against a
# Crank-Nicolson solve at dx=1/2048, dt=1e-4; they agreed to 1.1e-7.
BURGERS_U_05_025 = -0.8031984208406323


class TestBurgersReference:
    def test_initial_condition(self):
        x = np.linspace(-1, 1, 201)
        np.testing.assert_array_equal(orc.burgers_reference(x, np.zeros_like(x)), -np.sin(PI * x))

    def test_odd_symmetry_and_boundaries(self):
        xs = np.linspace(-1, 1, 41)
        for t in (0.25, 0.5, 0.75):
            vals = orc.burgers_reference(xs, np.full_like(xs, t))
            assert np.abs(vals + vals[::-1]).max() <= 1e-6
            assert abs(vals[0]) <= 1e-9 and abs(vals[-1]) <= 1e-9
            assert abs(orc.burgers_reference(np.array([0.0]), np.array([t]))[0]) <= 1e-9

    def test_pinned_value(self):
        got = orc.burgers_reference(np.array([0.5]), np.array([0.25]))[0]
        assert got == pytest.approx(BURGERS_U_05_025, abs=1e-9)

    def test_node_count_floor(self):
        with pytest.raises(ValueError, match="100"):
            orc.burgers_reference(np.array([0.1]), np.array([0.5]), n_nodes=50)

    @pytest.mark.slow
    def test_dual_oracle_agreement(self):
        # Quadrature vs Crank-Nicolson at the stated resolution.
        x_fd, u_fd = orc.burgers_fd_reference(0.25, nx=4097, dt=1e-4)
        probe = np.linspace(-0.9, 0.9, 19)
        gh = orc.burgers_reference(probe, np.full_like(probe, 0.25))
        fd = np.interp(probe, x_fd, u_fd)
        assert np.abs(gh - fd).max() <= 1e-3


class TestBvpOracle:
    def test_deterministic_matches_sine(self):
        x, u = orc.ode_bvp_oracle(0.0, 0.0, grid_n=512)
        assert np.abs(u - np.sin(PI * x)).max() <= 1e-4

    def test_epsilon_shift_pinned(self):
        x, u = orc.ode_bvp_oracle(0.01, 0.01, grid_n=512)
        mid = u[len(x) // 2]
        assert mid == pytest.approx(0.009937863810013978, abs=1e-9)
        assert abs(mid) < 5 * 0.01  # O(eps) shift

    def test_grid_floor(self):
        with pytest.raises(ValueError, match="64"):
            orc.ode_bvp_oracle(0.0, 0.0, grid_n=32)

    def test_nonconvergence_reported(self):
        with pytest.raises(orc.OracleError, match="converge"):
            orc.ode_bvp_oracle(0.0, 0.0, grid_n=512, max_iter=1, tol=1e-14)

    def test_noise_distribution_std(self):
        # Fig-level check: boundary noise 0.05 induces interior std ~0.037.
        rng = rng_streams(99, 1)[0]
        samples, failed = orc.bvp_distribution(0.05, 4000, rng, grid_n=256)
        assert failed == 0
        stds = samples.std(axis=0)
        means = samples.mean(axis=0)
        # locations -1, -0.5, 0, 0.5, 1
        assert stds[2] == pytest.approx(0.037, abs=0.005)
        assert abs(means[2]) <= 0.01
        assert means[1] == pytest.approx(-1.0, abs=0.01)
        assert means[3] == pytest.approx(1.0, abs=0.01)
        assert stds[0] == pytest.approx(0.05, abs=0.005)


class TestHeatReference:
    def test_values(self):
        assert orc.heat_reference(0.5, 0.0) == pytest.approx(1.0, rel=1e-15)
        assert orc.heat_reference(0.5, 1.0) == pytest.approx(np.exp(-1.0), rel=1e-15)
        assert abs(orc.heat_reference(-1.0, 0.37)) <= 1e-15

    def test_initial_noise_std(self):
        assert orc.heat_initial_noise_std(0.0, 0.05) == pytest.approx(0.05 * np.e, rel=1e-12)
        assert orc.heat_initial_noise_std(0.25, 0.05) == pytest.approx(0.05 * np.exp(0.25), rel=1e-12)
        assert orc.heat_initial_noise_std(-0.25, 0.05) == pytest.approx(0.0642, abs=1e-4)
