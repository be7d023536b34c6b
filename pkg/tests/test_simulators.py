import numpy as np
import pytest
from scipy import stats

from sbikit.distributions import BoxUniform, DiagGaussian
from sbikit.simulators import (
    BallThrowConfig,
    BallThrowSimulator,
    DDMParams,
    DDMSimulator,
    Dataset,
    LinearGaussianSimulator,
    SimulationBudgetError,
    SimulatorError,
    generate_dataset,
    simulator_from_config,
)

from .oracles import conjugate_posterior


class TestBallThrow:
    def test_noise_free_range_peaks_at_45_degrees(self):
        sim = BallThrowSimulator()
        angles = np.linspace(0, 90, 9001)
        ranges = sim.noise_free_range(angles)
        assert angles[np.argmax(ranges)] == pytest.approx(45.0, abs=0.02)

    def test_range_value_at_45_degrees(self):
        sim = BallThrowSimulator()
        assert sim.noise_free_range(45.0) == pytest.approx(12.5 ** 2 / 9.81, abs=1e-9)

    def test_zero_angle_output_is_pure_measurement_noise(self):
        sim = BallThrowSimulator()
        draws = np.array([sim.simulate(np.array([0.0]), np.random.default_rng(i))[0]
                          for i in range(2000)])
        assert abs(draws.mean()) < 0.02
        assert abs(draws.std() - sim.config.noise_std) < 0.02

    def test_repeated_calls_differ(self):
        sim = BallThrowSimulator()
        rng = np.random.default_rng(0)
        a = sim.simulate(np.array([45.0]), rng)
        b = sim.simulate(np.array([45.0]), rng)
        assert a[0] != b[0]

    def test_angle_outside_range_rejected(self):
        sim = BallThrowSimulator()
        rng = np.random.default_rng(0)
        with pytest.raises(SimulatorError, match="outside"):
            sim.simulate(np.array([-5.0]), rng)
        with pytest.raises(SimulatorError, match="outside"):
            sim.simulate(np.array([95.0]), rng)

    def test_config_validation(self):
        with pytest.raises(SimulatorError):
            BallThrowConfig(launch_speed=-1.0)
        with pytest.raises(SimulatorError):
            BallThrowConfig(noise_std=-0.1)


class TestLinearGaussian:
    def test_tiny_noise_limit_returns_theta(self):
        sim = LinearGaussianSimulator(dim=3, noise_std=1e-12)
        theta = np.array([1.0, -2.0, 0.5])
        x = sim.simulate(theta, np.random.default_rng(0))
        np.testing.assert_allclose(x, theta, atol=1e-10)

    def test_empirical_noise_std(self):
        sim = LinearGaussianSimulator(dim=1, noise_std=0.4)
        rng = np.random.default_rng(1)
        resid = np.array([sim.simulate(np.array([2.0]), rng)[0] - 2.0
                          for _ in range(100_000)])
        assert abs(resid.std() - 0.4) / 0.4 < 0.02

    def test_conjugate_formula_verified_by_grid_quadrature(self):
        # posterior for x_o under prior N(0,1), noise 0.1: quadrature on a
        # theta grid must match mean x_o/(1+s^2), std s/sqrt(1+s^2)
        sigma = 0.1
        x_o = 0.37
        grid = np.linspace(-1, 2, 200_001)
        log_post = stats.norm.logpdf(grid) + stats.norm.logpdf(x_o, grid, sigma)
        post = np.exp(log_post - log_post.max())
        post /= np.trapezoid(post, grid)
        mean_q = np.trapezoid(grid * post, grid)
        std_q = np.sqrt(np.trapezoid((grid - mean_q) ** 2 * post, grid))
        assert mean_q == pytest.approx(x_o / (1 + sigma ** 2), abs=1e-6)
        assert std_q == pytest.approx(sigma / np.sqrt(1 + sigma ** 2), abs=1e-6)
        mean_o, std_o = conjugate_posterior([0.0], [1.0], sigma, [[x_o]])
        assert mean_o[0] == pytest.approx(mean_q, abs=1e-9)
        assert std_o[0] == pytest.approx(std_q, abs=1e-6)

    def test_rejects_nonpositive_noise(self):
        with pytest.raises(SimulatorError):
            LinearGaussianSimulator(dim=1, noise_std=0.0)


class TestDDM:
    def test_extreme_drift_forces_choice_one(self):
        sim = DDMSimulator()
        params = DDMParams(50.0, 0.8, 0.0, 0.3, -0.5)
        rng = np.random.default_rng(0)
        outcomes = [sim.trial(params, rng)[0] for _ in range(3000)]
        assert np.mean(outcomes) > 0.999

    def test_symmetric_case_is_fair(self):
        sim = DDMSimulator()
        params = DDMParams(0.0, 0.8, 0.0, 0.3, -1e-9)
        rng = np.random.default_rng(1)
        outcomes = np.array([sim.trial(params, rng)[0] for _ in range(10_000)])
        p = outcomes.mean()
        # 4 sigma binomial band around 0.5 at n = 10^4
        assert abs(p - 0.5) < 4 * 0.5 / 100

    def test_rt_strictly_exceeds_nondecision_time(self):
        sim = DDMSimulator()
        rng = np.random.default_rng(2)
        prior = sim.default_prior()
        for theta in prior.sample(rng, 300):
            params = DDMParams(*theta)
            _, rt, _ = sim.trial(params, rng)
            assert rt > params.nondecision

    def test_production_step_matches_fine_step_oracle(self):
        # reference from 10^6 lockstep trials at dt = 1e-4 (tests/oracles.py,
        # ddm_reference(1.0, 0.8, 0.0, 0.3, -0.5, 1_000_000, 1e-4, 20240801))
        ref_p1, ref_rt = 0.681937, 0.437944
        sim = DDMSimulator()  # production dt = 1e-3
        params = DDMParams(1.0, 0.8, 0.0, 0.3, -0.5)
        rng = np.random.default_rng(99)
        n = 200_000
        choices = np.empty(n)
        rts = np.empty(n)
        for i in range(n):
            c, rt, _ = sim.trial(params, rng)
            choices[i] = c
            rts[i] = rt
        assert abs(choices.mean() - ref_p1) < 0.01
        assert abs(rts.mean() - ref_rt) < 0.01

    def test_censoring_never_hangs_and_is_flagged(self):
        sim = DDMSimulator(max_decision_time=0.05)
        params = DDMParams(0.0, 1.0, 0.0, 0.3, -0.1)
        rng = np.random.default_rng(3)
        seen_censored = False
        for _ in range(50):
            choice, rt, censored = sim.trial(params, rng)
            assert rt <= params.nondecision + 0.05 + 1e-12
            seen_censored |= censored
        assert seen_censored
        x = np.array([float(choice), params.nondecision + 0.05])
        theta = np.array([0.0, 1.0, 0.0, 0.3, -0.1])
        assert sim.row_flags(theta, x)["censored"]

    def test_parameter_validation(self):
        with pytest.raises(SimulatorError):
            DDMParams(0.0, -1.0, 0.0, 0.3, -0.5).validate()
        with pytest.raises(SimulatorError):
            DDMParams(0.0, 1.0, 0.7, 0.3, -0.5).validate()
        with pytest.raises(SimulatorError):
            DDMParams(0.0, 1.0, 0.0, -0.1, -0.5).validate()


class TestGenerateDataset:
    def test_digest_deterministic_and_worker_invariant(self):
        sim1 = BallThrowSimulator()
        prior = sim1.default_prior()
        ds1 = generate_dataset(prior, sim1, 1000, seed=42, workers=1)
        sim8 = BallThrowSimulator()
        ds8 = generate_dataset(prior, sim8, 1000, seed=42, workers=8)
        assert ds1.digest() == ds8.digest()
        ds_again = generate_dataset(prior, BallThrowSimulator(), 1000, seed=42, workers=1)
        assert ds1.digest() == ds_again.digest()
        ds_other = generate_dataset(prior, BallThrowSimulator(), 1000, seed=43)
        assert ds1.digest() != ds_other.digest()

    def test_env_variable_caps_workers(self, monkeypatch):
        from sbikit.simulators import max_workers
        monkeypatch.setenv("SBI_ENGINE_THREADS", "2")
        assert max_workers(8) == 2
        monkeypatch.delenv("SBI_ENGINE_THREADS")
        assert max_workers(8) == 8
        assert max_workers(None) == 1

    def test_nan_filter_discard_fraction(self):
        class Leaky(LinearGaussianSimulator):
            def raw_simulate(self, theta, rng):
                if theta[0] > 0.9:
                    return np.array([np.nan])
                return super().raw_simulate(theta, rng)

        sim = Leaky(dim=1, noise_std=0.1)
        prior = BoxUniform([0.0], [1.0])
        ds = generate_dataset(prior, sim, 4000, seed=7)
        total = ds.meta["discards"] + ds.meta["n"]
        assert ds.meta["discards"] / total == pytest.approx(0.1, abs=0.02)
        assert np.all(ds.theta[:, 0] <= 0.9)
        assert np.all(np.isfinite(ds.x))

    def test_single_row(self):
        sim = BallThrowSimulator()
        ds = generate_dataset(sim.default_prior(), sim, 1, seed=0)
        assert len(ds) == 1

    def test_validity_filter_applied(self):
        sim = LinearGaussianSimulator(dim=1, noise_std=0.1)
        prior = BoxUniform([0.0], [1.0])
        ds = generate_dataset(prior, sim, 500, seed=1,
                              validity_filter=lambda t, x: x[0] > 0.2)
        assert np.all(ds.x[:, 0] > 0.2)

    def test_high_discard_rate_aborts_with_misspecification_warning(self):
        class Broken(LinearGaussianSimulator):
            def raw_simulate(self, theta, rng):
                return np.array([np.nan])

        sim = Broken(dim=1, noise_std=0.1)
        with pytest.raises(SimulationBudgetError, match="misspecified"):
            generate_dataset(DiagGaussian([0.0], [0.0]), sim, 50, seed=0)

    def test_censored_trials_flagged_in_metadata(self):
        sim = DDMSimulator(max_decision_time=0.02)
        ds = generate_dataset(sim.default_prior(), sim, 50, seed=5)
        assert ds.meta.get("flags", {}).get("censored", 0) > 0

    def test_call_counter_tracks_simulations(self):
        sim = BallThrowSimulator()
        generate_dataset(sim.default_prior(), sim, 100, seed=0)
        assert sim.n_calls == 100 + 0  # no discards on the clean simulator


def test_builtin_simulators_emit_only_finite_values_over_prior_draws():
    checks = [
        (BallThrowSimulator(), 1_000_000),
        (LinearGaussianSimulator(dim=2, noise_std=0.1), 1_000_000),
        (DDMSimulator(), 300_000),
    ]
    for sim, n in checks:
        rng = np.random.default_rng(123)
        thetas = sim.default_prior().sample(rng, n)
        bad = 0
        for theta in thetas:
            x = sim.simulate(theta, rng)
            if not np.all(np.isfinite(x)):
                bad += 1
        assert bad == 0, f"{sim.name} emitted {bad} non-finite outputs"


class TestDatasetIO:
    def test_save_load_roundtrip_is_exact(self, tmp_path):
        sim = BallThrowSimulator()
        ds = generate_dataset(sim.default_prior(), sim, 200, seed=11)
        path = tmp_path / "data.csv"
        ds.save(path)
        loaded = Dataset.load(path)
        assert np.array_equal(loaded.theta, ds.theta)
        assert np.array_equal(loaded.x, ds.x)
        assert loaded.meta["simulator"] == "ball_throw"
        assert loaded.meta["seed"] == 11

    def test_row_count_mismatch_rejected(self):
        with pytest.raises(SimulatorError, match="row mismatch"):
            Dataset(np.zeros((3, 1)), np.zeros((4, 1)))

    def test_concat_and_subset(self):
        a = Dataset(np.ones((3, 2)), np.zeros((3, 1)))
        b = Dataset(2 * np.ones((2, 2)), np.ones((2, 1)))
        c = a.concat(b)
        assert len(c) == 5
        assert len(c.subset(np.array([0, 4]))) == 2


def test_simulator_from_config():
    sim = simulator_from_config({"name": "ball_throw", "launch_speed": 10.0})
    assert isinstance(sim, BallThrowSimulator)
    assert sim.config.launch_speed == 10.0
    assert isinstance(simulator_from_config({"name": "ddm"}), DDMSimulator)
    with pytest.raises(SimulatorError, match="unknown simulator"):
        simulator_from_config({"name": "lotka_volterra"})
    with pytest.raises(SimulatorError, match="bad fields"):
        simulator_from_config({"name": "ball_throw", "bogus": 1})


def test_summary_map_applied_and_dims_checked():
    sim = LinearGaussianSimulator(dim=2, noise_std=0.1,
                                  summary=lambda x: np.array([x.sum()]))
    sim.x_dim = 1
    out = sim.simulate(np.array([1.0, 2.0]), np.random.default_rng(0))
    assert out.shape == (1,)
