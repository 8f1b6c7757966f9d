import numpy as np
import pytest

from wganpinn import networks as nets
from wganpinn import problems as probs

PI = np.pi


def fd_residual(problem, g, X, Z, h=1e-4):
    """Finite-difference reconstruction of the residual (independent path)."""
    X = np.atleast_2d(X)

    def u(pts):
        return g.forward_np(np.concatenate((pts, Z), axis=1)).ravel()

    value = u(X)
    jets = {}
    for axis, order in problem.jet_dirs:
        e = np.zeros(X.shape[1])
        e[axis] = h
        up, um = u(X + e), u(X - e)
        d1 = (up - um) / (2 * h)
        d2 = (up - 2 * value + um) / h**2 if order >= 2 else None
        jets[axis] = (d1.reshape(-1, 1), None if d2 is None else d2.reshape(-1, 1))
    op = problem.assemble(value.reshape(-1, 1), jets)
    return (op - problem.rhs(X)).ravel()


class TestResidualODE:
    def test_manufactured_probe_vanishes(self):
        probe = probs.reference_probe("ode")
        x = np.linspace(-1, 1, 1000)
        res = probs.residual_ode(probe, x)
        assert np.abs(res).max() <= 1e-10

    def test_zero_probe_gives_pi_squared(self):
        zero = probs.AnalyticProbe(
            fn=lambda X: np.zeros(X.shape[0]),
            d1=lambda X, ax: np.zeros(X.shape[0]),
            d2=lambda X, ax: np.zeros(X.shape[0]),
        )
        res = probs.residual_ode(zero, 0.5)
        assert res.ravel()[0] == pytest.approx(PI**2, rel=1e-12)

    def test_random_generator_matches_fd(self, rng):
        problem = probs.make_problem("ode")
        g = nets.init_parameters(nets.GeneratorNet.build(3, 1, 2, 8), rng)
        X = np.array([[0.3], [-0.7], [0.1]])
        Z = rng.standard_normal((3, 2))
        jets_res = probs.residual(problem, g, X, Z).ravel()
        fd_res = fd_residual(problem, g, X, Z)
        np.testing.assert_allclose(jets_res, fd_res, rtol=1e-4, atol=1e-5)


class TestResidualHeat:
    def test_manufactured_probe_vanishes(self):
        probe = probs.reference_probe("heat")
        xs, ts = np.meshgrid(np.linspace(-1, 1, 40), np.linspace(0, 1, 25))
        res = probs.residual_heat(probe, xs.ravel(), ts.ravel())
        assert np.abs(res).max() <= 1e-10

    def test_linear_in_time_probe(self):
        probe = probs.AnalyticProbe(
            fn=lambda X: X[:, 1],
            d1=lambda X, ax: np.ones(X.shape[0]) if ax == 1 else np.zeros(X.shape[0]),
            d2=lambda X, ax: np.zeros(X.shape[0]),
        )
        res = probs.residual_heat(probe, [0.3, -0.2], [0.1, 0.9])
        np.testing.assert_allclose(res.ravel(), [-1.0, -1.0], rtol=1e-14)

    def test_quadratic_space_probe(self):
        probe = probs.AnalyticProbe(
            fn=lambda X: X[:, 0] ** 2,
            d1=lambda X, ax: 2 * X[:, 0] if ax == 0 else np.zeros(X.shape[0]),
            d2=lambda X, ax: 2 * np.ones(X.shape[0]) if ax == 0 else np.zeros(X.shape[0]),
        )
        res = probs.residual_heat(probe, [0.5], [0.2])
        assert res.ravel()[0] == pytest.approx(2 * probs.HEAT_NU, rel=1e-14)


class TestResidualBurgers:
    def test_constant_probe(self):
        const = probs.AnalyticProbe(
            fn=lambda X: np.full(X.shape[0], 0.75),
            d1=lambda X, ax: np.zeros(X.shape[0]),
            d2=lambda X, ax: np.zeros(X.shape[0]),
        )
        res = probs.residual_burgers(const, [0.1, 0.6], [0.2, 0.8])
        np.testing.assert_allclose(res.ravel(), 0.0, atol=1e-15)

    def test_linear_probe(self):
        lin = probs.AnalyticProbe(
            fn=lambda X: X[:, 0],
            d1=lambda X, ax: np.ones(X.shape[0]) if ax == 0 else np.zeros(X.shape[0]),
            d2=lambda X, ax: np.zeros(X.shape[0]),
        )
        res = probs.residual_burgers(lin, [0.3, -0.4], [0.5, 0.5])
        np.testing.assert_allclose(res.ravel(), [0.3, -0.4], rtol=1e-14)

    def test_sine_probe_closed_form(self):
        sine = probs.AnalyticProbe(
            fn=lambda X: np.sin(PI * X[:, 0]),
            d1=lambda X, ax: PI * np.cos(PI * X[:, 0]) if ax == 0 else np.zeros(X.shape[0]),
            d2=lambda X, ax: -PI**2 * np.sin(PI * X[:, 0]) if ax == 0 else np.zeros(X.shape[0]),
        )
        x = 0.25
        res = probs.residual_burgers(sine, [x], [0.4])
        expected = PI * np.sin(PI * x) * np.cos(PI * x) + 0.01 * PI * np.sin(PI * x)
        assert expected == pytest.approx(1.5930, abs=1e-4)
        assert res.ravel()[0] == pytest.approx(expected, rel=1e-14)

    def test_rarefaction_probe_vanishes(self):
        # u = x/(1+t) solves u_t + u u_x = 0 with u_xx = 0 identically.
        fan = probs.AnalyticProbe(
            fn=lambda X: X[:, 0] / (1 + X[:, 1]),
            d1=lambda X, ax: (
                1.0 / (1 + X[:, 1]) if ax == 0 else -X[:, 0] / (1 + X[:, 1]) ** 2
            ),
            d2=lambda X, ax: np.zeros(X.shape[0]),
        )
        xs, ts = np.meshgrid(np.linspace(-1, 1, 40), np.linspace(0, 1, 25))
        res = probs.residual_burgers(fan, xs.ravel(), ts.ravel())
        assert np.abs(res).max() <= 1e-10

    def test_random_generator_matches_fd(self, rng):
        problem = probs.make_problem("burgers")
        g = nets.init_parameters(nets.GeneratorNet.build(4, 1, 2, 8), rng)
        X = np.column_stack([rng.uniform(-1, 1, 4), rng.uniform(0, 1, 4)])
        Z = rng.standard_normal((4, 2))
        jets_res = probs.residual(problem, g, X, Z).ravel()
        fd_res = fd_residual(problem, g, X, Z)
        np.testing.assert_allclose(jets_res, fd_res, rtol=1e-4, atol=1e-5)


class TestResidualAllenCahn:
    def test_manufactured_probe_vanishes(self):
        probe = probs.reference_probe("allen-cahn")
        xs, ys = np.meshgrid(np.linspace(-1, 1, 35), np.linspace(-1, 1, 35))
        res = probs.residual_allen_cahn(probe, xs.ravel(), ys.ravel())
        assert np.abs(res).max() <= 1e-10

    def test_zero_probe(self):
        zero = probs.AnalyticProbe(
            fn=lambda X: np.zeros(X.shape[0]), d1=lambda X, ax: np.zeros(X.shape[0])
        )
        res = probs.residual_allen_cahn(zero, [0.5], [0.0])
        assert res.ravel()[0] == pytest.approx(-0.01 * PI**2, rel=1e-12)

    def test_unit_probe(self):
        one = probs.AnalyticProbe(
            fn=lambda X: np.ones(X.shape[0]), d1=lambda X, ax: np.zeros(X.shape[0])
        )
        pts = np.array([[0.3, -0.2], [0.8, 0.5]])
        res = probs.residual_allen_cahn(one, pts[:, 0], pts[:, 1]).ravel()
        np.testing.assert_allclose(res, -probs.manufactured_ac_rhs(pts[:, 0], pts[:, 1]), rtol=1e-14)


class TestManufacturedRhs:
    def test_values(self):
        assert probs.manufactured_ac_rhs(0.0, 0.0) == pytest.approx(0.0, abs=1e-15)
        assert probs.manufactured_ac_rhs(0.5, 0.5) == pytest.approx(0.0, abs=1e-12)
        assert probs.manufactured_ac_rhs(0.5, 0.0) == pytest.approx(0.01 * PI**2, rel=1e-12)


class TestNoiseModels:
    def test_sigma_zero_exact_all_kinds(self, rng):
        for name in probs.PROBLEM_NAMES:
            problem = probs.make_problem(name, sigma=0.0)
            for seg in problem.segments:
                X = probs._sample_segment_x(problem, seg, 64, rng)
                u = seg.noise.sample(X, rng)
                np.testing.assert_array_equal(u, seg.noise.deterministic(X))

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError, match="sigma"):
            probs.NoiseModel("gaussian-boundary", -0.1, lambda xs: np.zeros(xs.shape[0]))

    def test_heat_ic_std_scaling(self, rng):
        problem = probs.make_problem("heat", sigma=0.05)
        ic = problem.segments[0].noise
        for x, expected in ((0.0, 0.05 * np.e), (0.25, 0.05 * np.exp(0.25)), (-0.25, 0.05 * np.exp(0.25))):
            X = np.full((200_000, 2), [x, 0.0])
            u = ic.sample(X, rng)
            assert u.std() == pytest.approx(expected, rel=0.02)
            assert u.mean() == pytest.approx(np.sin(PI * x), abs=0.002)

    def test_burgers_ic_sigma_zero_matches_initial_condition(self, rng):
        problem = probs.make_problem("burgers", sigma=0.0)
        ic = problem.segments[0].noise
        X = np.column_stack([np.linspace(-1, 1, 101), np.zeros(101)])
        np.testing.assert_array_equal(ic.sample(X, rng), -np.sin(PI * X[:, 0]))

    def test_burgers_ic_shift_and_add(self, rng):
        # shift applied inside the sine plus the same additive term
        problem = probs.make_problem("burgers", sigma=0.1)
        ic = problem.segments[0].noise
        X = np.full((300_000, 2), [0.0, 0.0])
        u = ic.sample(X, rng)
        # at x=0 the scaling is 1: u = -sin(pi d) + d with d ~ N(0, 0.1^2)
        d = 0.1 * rng.standard_normal(300_000)
        ref = -np.sin(PI * d) + d
        assert u.mean() == pytest.approx(ref.mean(), abs=0.002)
        assert u.std() == pytest.approx(ref.std(), rel=0.02)


class TestSampling:
    def test_heat_split_counts(self):
        problem = probs.make_problem("heat")
        np.testing.assert_array_equal(probs.segment_counts(problem, 1600), [800, 400, 400])

    def test_burgers_split_counts(self):
        problem = probs.make_problem("burgers")
        np.testing.assert_array_equal(probs.segment_counts(problem, 1000), [500, 250, 250])

    def test_ac_equal_split(self):
        problem = probs.make_problem("allen-cahn")
        np.testing.assert_array_equal(probs.segment_counts(problem, 800), [200, 200, 200, 200])

    def test_ode_sigma_zero_targets_are_zero(self, rng):
        problem = probs.make_problem("ode", sigma=0.0)
        X, U = probs.sample_boundary(problem, 40, rng)
        assert set(np.unique(X)) == {-1.0, 1.0}
        np.testing.assert_array_equal(U, np.zeros((40, 1)))

    def test_boundary_inputs_latents(self, rng):
        problem = probs.make_problem("heat", sigma=0.05)
        X, Z = probs.sample_boundary(problem, 200, rng, latent_dim=2)
        assert X.shape == (200, 2) and Z.shape == (200, 2)
        on_ic = X[:100]
        assert np.all(on_ic[:, 1] == 0.0)
        assert np.all((X[:, 0] >= -1) & (X[:, 0] <= 1))

    def test_interior_rows_inside_domain(self, rng):
        problem = probs.make_problem("heat")
        X, Z, B = probs.sample_interior(problem, 500, rng)
        assert np.all((X[:, 0] > -1) & (X[:, 0] < 1))
        assert np.all((X[:, 1] > 0) & (X[:, 1] < 1))
        np.testing.assert_array_equal(B, np.zeros((500, 1)))

    def test_interior_b_equals_forcing_ode(self, rng):
        problem = probs.make_problem("ode")
        X, Z, B = probs.sample_interior(problem, 100, rng)
        np.testing.assert_array_equal(B, probs._ode_rhs(X))

    def test_interior_uniform_mean(self, rng):
        problem = probs.make_problem("ode")
        X, _, _ = probs.sample_interior(problem, 10_000, rng)
        assert abs(X.mean()) < 0.02

    def test_batch_export_csv(self, rng, tmp_path):
        problem = probs.make_problem("heat", sigma=0.05)
        batch = probs.sample_batch(problem, 16, 16, 8, 2, rng)
        probs.export_batch_csv(batch, problem, tmp_path)
        header = (tmp_path / "interior.csv").read_text().splitlines()[0]
        assert header == "x,t,z0,z1,b"
        assert (tmp_path / "boundary_targets.csv").read_text().splitlines()[0] == "x,t,u"
