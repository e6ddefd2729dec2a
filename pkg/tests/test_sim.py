import math
from dataclasses import replace

import numpy as np
import pytest

from dwsim import attack, sim


def scenario(pendulum, **kw):
    plant, gains = pendulum
    base = dict(plant=plant, gains=gains, horizon=500, noise_seed=11,
                watermark_seed=5, scheme=sim.NEW_DW)
    base.update(kw)
    return sim.ScenarioConfig(**base)


class TestConfigValidation:
    def test_unknown_scheme(self, pendulum):
        with pytest.raises(sim.ConfigError):
            scenario(pendulum, scheme="Nonsense")

    def test_compensation_requires_new_scheme(self, pendulum):
        with pytest.raises(sim.ConfigError):
            scenario(pendulum, scheme=sim.CONVENTIONAL,
                     wm_variances=np.array([1e-4]), compensation=True)

    def test_zero_horizon(self, pendulum):
        with pytest.raises(sim.ConfigError):
            scenario(pendulum, horizon=0)


class TestDeterminism:
    def test_bitwise_repeatability(self, pendulum):
        cfg = scenario(pendulum, horizon=300, attack=attack.persistent_preset())
        a = sim.run_closed_loop(cfg)
        b = sim.run_closed_loop(cfg)
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.residual, b.residual)
        np.testing.assert_array_equal(a.phi_2, b.phi_2)
        assert a.events == b.events

    def test_empty_windows_equal_no_attack(self, pendulum):
        # a spec with no active windows is bitwise transparent
        empty = attack.FdiaSpec(a_attack=0.1 * np.eye(4),
                                x_a_init=np.ones(4), windows=())
        a = sim.run_closed_loop(scenario(pendulum, horizon=400, attack=empty))
        b = sim.run_closed_loop(scenario(pendulum, horizon=400, attack=None))
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.u, b.u)


class TestWatermarkTransparency:
    @pytest.mark.parametrize("s2", [1e-4, 10.0])
    def test_new_scheme_is_bitwise_free(self, pendulum, s2):
        base = dict(horizon=2000, noise_seed=42, watermark_seed=9,
                    wm_variances=np.array([s2, s2]))
        t_new = sim.run_closed_loop(scenario(pendulum, scheme=sim.NEW_DW, **base))
        t_ref = sim.run_closed_loop(scenario(pendulum, scheme=sim.NO_WATERMARK, **base))
        np.testing.assert_array_equal(t_new.x, t_ref.x)
        np.testing.assert_array_equal(t_new.x_hat_post, t_ref.x_hat_post)
        np.testing.assert_array_equal(t_new.u, t_ref.u)
        np.testing.assert_array_equal(t_new.y_minus, t_new.y)  # decrypt == plant output

    def test_conventional_zero_variance_is_bitwise_free(self, pendulum):
        base = dict(horizon=2000, noise_seed=42, watermark_seed=9)
        t_conv = sim.run_closed_loop(scenario(
            pendulum, scheme=sim.CONVENTIONAL, wm_variances=np.array([0.0]), **base))
        t_ref = sim.run_closed_loop(scenario(
            pendulum, scheme=sim.NO_WATERMARK, wm_variances=np.array([0.0]), **base))
        np.testing.assert_array_equal(t_conv.x, t_ref.x)
        np.testing.assert_array_equal(t_conv.u, t_ref.u)


class TestTwinDistortion:
    def test_no_windows_zero_exactly(self, pendulum):
        empty = attack.FdiaSpec(a_attack=0.1 * np.eye(4),
                                x_a_init=np.ones(4), windows=())
        cfg = scenario(pendulum, horizon=800, attack=empty, safety=None)
        assert sim.twin_run_distortion_power(cfg) == 0.0

    def test_burst_positive_and_scales_quadratically(self, pendulum):
        def burst(amp):
            return attack.FdiaSpec(a_attack=0.1 * np.eye(4),
                                   x_a_init=amp * np.ones(4),
                                   windows=((100, 103),))
        cfg1 = scenario(pendulum, horizon=4000, attack=burst(2.0), safety=None)
        cfg10 = scenario(pendulum, horizon=4000, attack=burst(20.0), safety=None)
        d1 = sim.twin_run_distortion_power(cfg1)
        d10 = sim.twin_run_distortion_power(cfg10)
        assert d1 > 0.0
        assert 90.0 <= d10 / d1 <= 110.0

    def test_requires_attack(self, pendulum):
        with pytest.raises(sim.ConfigError):
            sim.twin_run_distortion_power(scenario(pendulum, attack=None))

    def test_short_horizon_rejected(self, pendulum):
        cfg = scenario(pendulum, horizon=3, attack=attack.persistent_preset())
        with pytest.raises(sim.WarmupError):
            sim.twin_run_distortion_power(cfg)

    def test_bypassed_attack_distortion_at_noise_floor(self, pendulum):
        # conventional scheme, stealthy injection: the twin gap stays at the
        # innovation-noise floor measured on an attack-free control run
        plant, gains = pendulum
        cfg = scenario(pendulum, scheme=sim.CONVENTIONAL,
                       wm_variances=np.array([1e-4]), horizon=10_000,
                       attack=attack.persistent_preset(), safety=None)
        control = sim.run_closed_loop(replace(cfg, attack=None))
        lr = control.residual @ gains.l.T
        floor = float(np.mean(np.sum(lr * lr, axis=1)))
        d = sim.twin_run_distortion_power(cfg)
        assert d <= 1.1 * floor


class TestSafety:
    def test_off_on_limit_crossing(self, pendulum):
        cfg = scenario(pendulum, horizon=400,
                       attack=attack.persistent_preset(),
                       safety=sim.SafetyLimits(position=0.05, angle=0.8))
        trace = sim.run_closed_loop(cfg)
        assert trace.termination == "OFF"
        assert abs(trace.x[-1, 0]) >= 0.05 or abs(trace.x[-1, 1]) >= 0.8

    def test_monotone_in_position_limit(self, pendulum):
        # burst transient: cart position is the binding limit, so tighter
        # position limits must trigger OFF no later
        def off_step(limit):
            cfg = scenario(pendulum, horizon=1000,
                           attack=attack.burst_preset_fig6(),
                           safety=sim.SafetyLimits(position=limit, angle=0.8))
            step = sim.run_closed_loop(cfg).termination_step
            return math.inf if step is None else step
        assert off_step(0.05) <= off_step(0.1) <= off_step(0.2)

    def test_back_resets_cart(self, pendulum):
        cfg = scenario(pendulum, horizon=1000,
                       attack=attack.burst_preset_fig6(),
                       safety=sim.SafetyLimits(position=0.3, angle=0.8, velocity=2.0))
        trace = sim.run_closed_loop(cfg)
        backs = [k for k, e in enumerate(trace.events) if e == "BACK"]
        assert backs, "expected at least one BACK event"
        k = backs[0]
        if k + 1 < trace.steps:
            # position was re-zeroed before the next plant step
            assert abs(trace.x[k + 1, 0]) < abs(trace.x[k, 0])

    def test_no_safety_runs_to_horizon(self, pendulum):
        cfg = scenario(pendulum, horizon=300,
                       attack=attack.persistent_preset(), safety=None)
        trace = sim.run_closed_loop(cfg)
        assert trace.steps == 300
        assert trace.termination == "RUNNING"


class TestCostAndErrorPower:
    def test_lqg_cost_zero_trace(self, pendulum):
        plant, gains = pendulum
        cfg = scenario(pendulum, horizon=50, noise_seed=1)
        trace = sim.run_closed_loop(cfg)
        trace.x = np.zeros_like(trace.x)
        trace.u = np.zeros_like(trace.u)
        assert sim.lqg_cost(trace, gains.q_weight, gains.r_weight) == 0.0

    def test_new_scheme_cost_delta_zero(self, pendulum):
        plant, gains = pendulum
        base = dict(horizon=2000, noise_seed=3, watermark_seed=8)
        t_new = sim.run_closed_loop(scenario(pendulum, scheme=sim.NEW_DW, **base))
        t_ref = sim.run_closed_loop(scenario(pendulum, scheme=sim.NO_WATERMARK, **base))
        j_new = sim.lqg_cost(t_new, gains.q_weight, gains.r_weight)
        j_ref = sim.lqg_cost(t_ref, gains.q_weight, gains.r_weight)
        assert j_new == j_ref

    def test_error_power_perfect_estimates(self, pendulum):
        cfg = scenario(pendulum, horizon=50)
        trace = sim.run_closed_loop(cfg)
        trace.x_hat_post = trace.x.copy()
        assert sim.estimation_error_power(trace, 5, 49) == 0.0

    def test_error_power_constant_error(self, pendulum):
        plant, _ = pendulum
        cfg = scenario(pendulum, horizon=50)
        trace = sim.run_closed_loop(cfg)
        err = np.array([0.1, 0.0, 0.0, 0.0])
        trace.x_hat_post = trace.x - err
        expected = float(np.sum((plant.c @ err) ** 2))
        assert sim.estimation_error_power(trace, 5, 49, c=plant.c) == pytest.approx(expected)


class TestSchemeConsistency:
    def test_zero_watermark_residuals_coincide(self, pendulum):
        # with zero watermark variance and no attack, both schemes' residuals
        # equal the plain Kalman innovation
        base = dict(horizon=1500, noise_seed=21, watermark_seed=2)
        t_conv = sim.run_closed_loop(scenario(
            pendulum, scheme=sim.CONVENTIONAL, wm_variances=np.array([0.0]), **base))
        t_new = sim.run_closed_loop(scenario(
            pendulum, scheme=sim.NEW_DW, wm_variances=np.array([0.0, 0.0]), **base))
        t_ref = sim.run_closed_loop(scenario(pendulum, scheme=sim.NO_WATERMARK, **base))
        ref_innovation = t_ref.y - np.einsum("ij,kj->ki", pendulum[0].c, t_ref.x_hat_prior)
        np.testing.assert_array_equal(t_conv.residual, ref_innovation)
        np.testing.assert_array_equal(t_new.residual, ref_innovation)
        # both windowed trace statistics estimate the same quantity
        mask = ~np.isnan(t_conv.phi_d2)
        np.testing.assert_allclose(t_conv.phi_d2[mask], t_new.phi_2[mask], atol=1e-15)

    def test_innovation_covariance_matches_sigma_o(self, pendulum):
        plant, gains = pendulum
        cfg = scenario(pendulum, scheme=sim.NO_WATERMARK, horizon=100_000,
                       noise_seed=77, safety=None)
        trace = sim.run_closed_loop(cfg)
        emp = np.einsum("ki,kj->ij", trace.residual, trace.residual) / trace.steps
        rel = np.linalg.norm(emp - gains.sigma_o, "fro") / np.linalg.norm(gains.sigma_o, "fro")
        assert rel < 0.10

    def test_no_attack_false_alarm_rate(self, pendulum):
        # paper thresholds, no attack: alarms on < 5% of steps
        cfg = scenario(pendulum, scheme=sim.NEW_DW, horizon=100_000,
                       noise_seed=55, watermark_seed=66, safety=None)
        trace = sim.run_closed_loop(cfg)
        warm = cfg.detector.window
        rate = float(np.mean(trace.eps[warm:] == 0))
        assert rate < 0.05, f"false alarm rate {rate:.3%}"

    def test_long_window_trace_statistic_converges(self, pendulum):
        # with a very long window the centered trace statistic settles far
        # below its centering term
        from dwsim import analysis, detect
        plant, gains = pendulum
        long_detector = detect.DetectorConfig(window=10_000)
        cfg = scenario(pendulum, scheme=sim.CONVENTIONAL, horizon=30_000,
                       wm_variances=np.array([1e-4]), detector=long_detector,
                       noise_seed=12, safety=None)
        trace = sim.run_closed_loop(cfg)
        center = analysis.normal_residual_trace(gains)
        assert trace.phi_d2[-1] < 0.10 * center


class TestTraceCsv:
    def test_header_and_shape(self, pendulum):
        cfg = scenario(pendulum, horizon=20, attack=attack.persistent_preset())
        trace = sim.run_closed_loop(cfg)
        text = sim.trace_to_csv(trace)
        lines = text.strip().split("\n")
        assert lines[0].split(",")[:6] == ["k", "x1", "x2", "x3", "x4", "xhat1"]
        assert len(lines) == trace.steps + 1
        # NewDW leaves the conventional statistics empty
        first = lines[1].split(",")
        header = lines[0].split(",")
        assert first[header.index("phi_d1")] == ""

    def test_round_trip_values(self, pendulum, tmp_path):
        cfg = scenario(pendulum, horizon=10)
        trace = sim.run_closed_loop(cfg)
        path = tmp_path / "trace.csv"
        sim.write_trace_csv(path, trace)
        body = np.genfromtxt(path, delimiter=",", skip_header=1, usecols=(1, 2, 3, 4))
        np.testing.assert_array_equal(body, trace.x)
