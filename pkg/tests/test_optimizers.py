import math

import numpy as np
import pytest

from drsubmax.geometry import Polytope, contains, lmo
from drsubmax.objectives import NqpObjective, generate_budget, generate_nqp
from drsubmax.oracles import NoiseModel, OracleStream
from drsubmax.optimizers import (
    MomentumRule,
    RunConfig,
    StepRule,
    boost_s_from_uniform,
    boosted_pga_run,
    pga_run,
    records_to_csv,
    run_battery,
    run_trial,
)

from _util import enumerate_vertices

ONE_MINUS_INV_E = 1.0 - math.exp(-1.0)


def one_dim_nqp():
    return NqpObjective([[-1.0]], Polytope.box([1.0]))


def stream(obj, noise=None, master_seed=0, run_id=0):
    return OracleStream(obj, noise or NoiseModel.none(), master_seed, run_id)


class TestRunConfigValidation:
    def test_alpha_range(self):
        with pytest.raises(ValueError):
            MomentumRule("alpha", 1.0)

    def test_greedy_requires_last_iterate(self):
        with pytest.raises(ValueError):
            RunConfig("scg", 5, returned_convention="best_iterate")

    def test_defaults_per_algorithm(self):
        assert RunConfig("pga", 5).returned_convention == "uniform_random_iterate"
        assert RunConfig("scg", 5).returned_convention == "last_iterate"

    def test_batch_defaults_to_horizon(self):
        assert RunConfig("scgpp", 7).effective_batch == 7
        assert RunConfig("scgpp", 7, batch_size=3).effective_batch == 3


class TestPga:
    def test_hand_iteration_constant_step(self):
        cfg = RunConfig("pga", 3, step_rule=StepRule("constant", 0.1),
                        init_rule="zero", returned_convention="last_iterate")
        rec = pga_run(one_dim_nqp(), stream(one_dim_nqp()), cfg)
        np.testing.assert_allclose(rec.iterates.ravel(), [0.1, 0.19, 0.271], atol=1e-15)

    def test_diminishing_step_clamps_to_one(self):
        cfg = RunConfig("pga", 4, step_rule=StepRule("inv_sqrt", 2.0),
                        init_rule="zero", returned_convention="last_iterate")
        rec = pga_run(one_dim_nqp(), stream(one_dim_nqp()), cfg)
        np.testing.assert_array_equal(rec.iterates.ravel(), [1.0, 1.0, 1.0, 1.0])

    def test_stationary_at_box_bound(self):
        obj = generate_nqp(4, 3, 0, -1.0, 0.0)
        cfg = RunConfig("pga", 5, init_rule="upper", returned_convention="last_iterate")
        rec = pga_run(obj, stream(obj), cfg)
        for x in rec.iterates:
            np.testing.assert_array_equal(x, obj.polytope.upper)

    def test_gaussian_init_is_projected(self):
        obj = generate_nqp(5, 4, 2, -1.0, 0.0)
        cfg = RunConfig("pga", 3)
        rec = run_trial(obj, NoiseModel.gaussian_prop(1.0), cfg)
        for x in rec.iterates:
            assert contains(obj.polytope, x, 1e-6)

    def test_returned_conventions(self):
        obj = one_dim_nqp()
        noise = NoiseModel.gaussian_fixed(0.5)
        best = run_trial(obj, noise, RunConfig("pga", 20, returned_convention="best_iterate"))
        assert best.returned_value == np.max(best.f_true)
        last = run_trial(obj, noise, RunConfig("pga", 20, returned_convention="last_iterate"))
        assert last.returned_value == last.f_true[-1]
        uniform = run_trial(obj, noise, RunConfig("pga", 20))
        assert uniform.returned_value in set(uniform.f_true)


class _ForcedUniformRng:
    def __init__(self, u):
        self.u = u

    def random(self):
        return self.u


class _ForcedStream:
    """Oracle stand-in with exact gradients and a pinned uniform draw."""

    def __init__(self, objective, u):
        self.objective = objective
        self.rng = _ForcedUniformRng(u)

    def grad(self, x):
        return self.objective.grad(x)


class TestBoostedPga:
    def test_sampler_endpoints(self):
        assert boost_s_from_uniform(0.0, 1.0) == pytest.approx(0.0, abs=1e-15)
        assert boost_s_from_uniform(1.0, 1.0) == pytest.approx(1.0, abs=1e-15)
        assert boost_s_from_uniform(0.0, 0.4) == pytest.approx(0.0, abs=1e-12)

    def test_sampler_closed_form_midpoint(self):
        assert boost_s_from_uniform(0.5, 1.0) == pytest.approx(0.6201145069582775, abs=1e-12)

    def test_forced_full_scale_update(self):
        """With s pinned to 1 the first step is eta * (1 - 1/e) * grad(x0)."""
        obj = one_dim_nqp()
        cfg = RunConfig("boosted_pga", 1, step_rule=StepRule("constant", 0.1),
                        init_rule="zero", returned_convention="last_iterate")
        rec = boosted_pga_run(obj, _ForcedStream(obj, 1.0), cfg)
        assert rec.iterates[0, 0] == pytest.approx(0.1 * ONE_MINUS_INV_E, abs=1e-12)

    def test_estimator_unbiased_against_quadrature(self):
        """Monte Carlo mean of the reweighted estimator matches the Simpson
        quadrature of the auxiliary gradient within 3 standard errors."""
        obj = generate_nqp(6, 2, 0, -1.0, 0.0)
        x = np.array([0.8, 0.5])
        rng = np.random.default_rng(17)
        for gamma in (1.0, 0.6):
            factor = (1.0 - math.exp(-gamma)) / gamma
            n_draws = 100_000
            draws = np.empty((n_draws, 2))
            for i in range(n_draws):
                s = boost_s_from_uniform(float(rng.random()), gamma)
                draws[i] = factor * obj.grad(s * x)
            # composite Simpson, 10^4 panels
            n_sub = 10_000
            s_nodes = np.linspace(0.0, 1.0, n_sub + 1)
            w = np.ones(n_sub + 1)
            w[1:-1:2] = 4.0
            w[2:-1:2] = 2.0
            w *= (1.0 / n_sub) / 3.0
            g_nodes = (s_nodes[:, None] * x) @ obj.h_matrix + obj.h_vector
            target = (w[:, None] * np.exp(gamma * (s_nodes[:, None] - 1.0)) * g_nodes).sum(axis=0)
            se = draws.std(axis=0) / math.sqrt(n_draws)
            assert np.all(np.abs(draws.mean(axis=0) - target) <= 3 * se)


class TestScg:
    def test_hand_iteration(self):
        rec = run_trial(one_dim_nqp(), NoiseModel.none(), RunConfig("scg", 4))
        np.testing.assert_allclose(rec.iterates.ravel(), [0.25, 0.5, 0.75, 1.0], atol=1e-15)
        np.testing.assert_allclose(rec.f_true, [0.21875, 0.375, 0.46875, 0.5], atol=1e-15)
        assert rec.returned_value == pytest.approx(0.5, abs=1e-15)

    def test_momentum_override_uses_latest_sample(self):
        """With the constant override rho = 1 the tracked gradient is exactly
        the latest noisy sample; verified against a twin-stream replay."""
        obj = generate_nqp(8, 3, 1, -1.0, 0.0)
        noise = NoiseModel.gaussian_fixed(0.4)
        T = 30
        cfg = RunConfig("scg", T, master_seed=5, run_id=2,
                        momentum_rule=MomentumRule("constant", 1.0))
        rec = run_trial(obj, noise, cfg)
        twin = OracleStream(obj, noise, 5, 2)
        x = np.zeros(3)
        for t in range(T):
            x = x + lmo(obj.polytope, twin.grad(x)) / T
            np.testing.assert_array_equal(rec.iterates[t], x)

    def test_single_step_lands_on_vertex(self):
        obj = generate_nqp(9, 2, 1, -1.0, 0.0)
        rec = run_trial(obj, NoiseModel.none(), RunConfig("scg", 1))
        verts = enumerate_vertices(obj.polytope)
        assert np.min(np.linalg.norm(verts - rec.iterates[0], axis=1)) <= 1e-8

    def test_alpha_momentum_runs(self):
        cfg = RunConfig("scg", 10, momentum_rule=MomentumRule("alpha", 0.5))
        rec = run_trial(one_dim_nqp(), NoiseModel.gaussian_fixed(0.1), cfg)
        assert rec.f_true.shape == (10,)


class TestScgpp:
    def test_exact_path_integration_matches_full_momentum_greedy(self):
        """Constant Hessian and exact oracles telescope to the exact gradient,
        so the trajectory equals greedy with momentum pinned at 1."""
        obj = generate_nqp(10, 3, 1, -1.0, 0.0)
        T = 12
        rec_pp = run_trial(obj, NoiseModel.none(), RunConfig("scgpp", T))
        rec_scg = run_trial(obj, NoiseModel.none(),
                            RunConfig("scg", T, momentum_rule=MomentumRule("constant", 1.0)))
        np.testing.assert_allclose(rec_pp.iterates, rec_scg.iterates, atol=1e-12)

    def test_one_dim_reaches_optimum(self):
        rec = run_trial(one_dim_nqp(), NoiseModel.none(), RunConfig("scgpp", 4))
        assert rec.iterates[-1, 0] == pytest.approx(1.0, abs=1e-12)
        assert rec.returned_value == pytest.approx(0.5, abs=1e-12)

    def test_batch_one_exact_for_constant_hessian(self):
        obj = generate_nqp(11, 2, 0, -1.0, 0.0)
        a = run_trial(obj, NoiseModel.none(), RunConfig("scgpp", 6, batch_size=1))
        b = run_trial(obj, NoiseModel.none(), RunConfig("scgpp", 6))
        np.testing.assert_allclose(a.iterates, b.iterates, atol=1e-12)

    def test_runs_on_budget_objective(self):
        """The Hessian oracle route also works for the non-quadratic family."""
        obj = generate_budget(31, 3, 4, density=0.7, p_low=0.2, p_high=0.7, k=2)
        noise = NoiseModel.gaussian_fixed(0.1, hessian_sigma=0.02)
        rec = run_trial(obj, noise, RunConfig("scgpp", 20, batch_size=4))
        assert rec.returned_value > 0.0
        for x in rec.iterates:
            assert contains(obj.polytope, x, 1e-6)

    def test_displacement_estimate_unbiased(self):
        """Monte Carlo mean of the Hessian-times-displacement correction
        matches the exact value within the CLT tolerance."""
        obj = generate_nqp(12, 3, 0, -1.0, 0.0)
        hs = 0.2
        st = OracleStream(obj, NoiseModel.gaussian_fixed(1.0, hessian_sigma=hs), 0, 0)
        x_new = np.array([0.3, 0.2, 0.1])
        x_old = np.array([0.1, 0.1, 0.1])
        step = x_new - x_old
        n_draws = 10_000
        total = np.zeros(3)
        for _ in range(n_draws):
            a = float(st.rng.random())
            total += st.hessian(a * x_new + (1 - a) * x_old) @ step
        mean = total / n_draws
        exact = obj.h_matrix @ step
        tol = 4 * hs * np.linalg.norm(step) / math.sqrt(n_draws)
        assert np.all(np.abs(mean - exact) <= tol)


class TestTrajectoryInvariants:
    @pytest.mark.parametrize("algorithm", ["pga", "boosted_pga", "scg", "scgpp"])
    def test_every_iterate_feasible(self, algorithm):
        obj = generate_nqp(13, 4, 2, -1.0, 0.0)
        cfg = RunConfig(algorithm, 40, master_seed=1, batch_size=2)
        rec = run_trial(obj, NoiseModel.gaussian_prop(1.0), cfg)
        for x in rec.iterates:
            assert contains(obj.polytope, x, 1e-6)

    def test_running_average_matches_prefix_means(self):
        obj = generate_nqp(14, 3, 1, -1.0, 0.0)
        rec = run_trial(obj, NoiseModel.gaussian_fixed(0.3), RunConfig("pga", 200))
        for t in (1, 7, 100, 200):
            exact = math.fsum(rec.f_true[:t]) / t
            assert abs(rec.f_running_avg[t - 1] - exact) <= 1e-12

    def test_greedy_steps_are_scaled_vertices(self):
        """T times each greedy displacement is a vertex, so the final point is
        a convex combination of vertices."""
        obj = generate_nqp(15, 2, 1, -1.0, 0.0)
        T = 25
        rec = run_trial(obj, NoiseModel.gaussian_fixed(0.5), RunConfig("scg", T))
        verts = enumerate_vertices(obj.polytope)
        prev = np.zeros(2)
        steps = []
        for x in rec.iterates:
            v = T * (x - prev)
            steps.append(v)
            prev = x
            assert np.min(np.linalg.norm(verts - v, axis=1)) <= 1e-8
        np.testing.assert_allclose(rec.iterates[-1], np.mean(steps, axis=0), atol=1e-12)

    def test_noise_free_sanity_all_algorithms(self):
        obj = one_dim_nqp()
        assert run_trial(obj, NoiseModel.none(), RunConfig("scg", 200)).returned_value >= 0.499
        assert run_trial(obj, NoiseModel.none(), RunConfig("scgpp", 200)).returned_value >= 0.499
        pga = run_trial(obj, NoiseModel.none(),
                        RunConfig("pga", 200, returned_convention="last_iterate"))
        assert pga.returned_value >= 0.499
        boosted = run_trial(obj, NoiseModel.none(),
                            RunConfig("boosted_pga", 200, returned_convention="last_iterate"))
        assert boosted.returned_value >= 0.499

    @pytest.mark.parametrize("algorithm", ["pga", "boosted_pga", "scg", "scgpp"])
    def test_bit_identical_reruns(self, algorithm):
        obj = generate_nqp(16, 3, 1, -1.0, 0.0)
        cfg = RunConfig(algorithm, 25, master_seed=9, run_id=3, batch_size=2)
        noise = NoiseModel.clipped_gaussian(0.3)
        a = run_trial(obj, noise, cfg)
        b = run_trial(obj, noise, cfg)
        np.testing.assert_array_equal(a.iterates, b.iterates)
        np.testing.assert_array_equal(a.f_true, b.f_true)
        assert a.returned_value == b.returned_value


class TestCsvOutput:
    def test_layout_and_precision(self, tmp_path):
        obj = one_dim_nqp()
        recs = run_battery(obj, NoiseModel.gaussian_fixed(0.2), RunConfig("scg", 3), 2)
        path = tmp_path / "battery.csv"
        records_to_csv(recs, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "run_id,algorithm,t,f_true,f_running_avg"
        assert len(lines) == 1 + 2 * 3
        rid, alg, t, f, avg = lines[1].split(",")
        assert (rid, alg, t) == ("0", "scg", "1")
        assert float(f) == recs[0].f_true[0]  # 17 significant digits round-trip
        assert float(avg) == recs[0].f_running_avg[0]
