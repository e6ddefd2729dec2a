import numpy as np
import pytest

from dwsim import detect


@pytest.fixture
def small_gains():
    l = np.array([[0.3, 0.0], [0.0, 0.2], [5.0, 0.0], [0.0, 1.5]])
    sigma_o = np.diag([1e-6, 1e-5])
    return l, sigma_o


class TestConventionalStats:
    def test_zero_residuals(self, small_gains):
        l, sigma_o = small_gains
        state = detect.TestWindowState(5)
        for _ in range(5):
            phi_d1, phi_d2 = detect.conventional_stats(state, 0.5, np.zeros(2), l, sigma_o)
        assert phi_d1 == 0.0
        assert phi_d2 == pytest.approx(abs(np.trace(l @ sigma_o @ l.T)))

    def test_single_term_norm(self, small_gains):
        l, sigma_o = small_gains
        state = detect.TestWindowState(1)
        r = np.array([1.0, 2.0])
        phi_d1, _ = detect.conventional_stats(state, 1.0, r, l, sigma_o)
        assert phi_d1 == pytest.approx(np.linalg.norm(l @ r))

    def test_warm_up_flag(self, small_gains):
        l, sigma_o = small_gains
        state = detect.TestWindowState(5)
        detect.conventional_stats(state, 0.0, np.ones(2), l, sigma_o)
        assert state.warm_up
        for _ in range(4):
            detect.conventional_stats(state, 0.0, np.ones(2), l, sigma_o)
        assert not state.warm_up


class TestNewStats:
    def test_zero_residuals(self, small_gains):
        l, sigma_o = small_gains
        state = detect.TestWindowState(3)
        for _ in range(3):
            phi_1, _ = detect.new_stats(state, np.array([0.1, -0.2]), np.zeros(2), l, sigma_o)
        np.testing.assert_array_equal(phi_1, [0.0, 0.0])

    def test_single_term_rows(self, small_gains):
        l, sigma_o = small_gains
        state = detect.TestWindowState(1)
        r = np.array([0.5, -0.5])
        phi_1, _ = detect.new_stats(state, np.array([1.0, 0.0]), r, l, sigma_o)
        assert phi_1[0] == pytest.approx(np.linalg.norm(l @ r))
        assert phi_1[1] == 0.0

    def test_shift_property_bitwise(self, small_gains):
        l, sigma_o = small_gains
        rng = np.random.default_rng(0)
        terms = [(rng.standard_normal(2), rng.standard_normal(2)) for _ in range(5)]
        prefix = [(rng.standard_normal(2), rng.standard_normal(2)) for _ in range(7)]

        def run(seq):
            state = detect.TestWindowState(5)
            out = None
            for w, r in seq:
                out = detect.new_stats(state, w, r, l, sigma_o)
            return out

        phi_a = run(terms)
        phi_b = run(prefix + terms)
        np.testing.assert_array_equal(phi_a[0], phi_b[0])
        assert phi_a[1] == phi_b[1]

    def test_monotone_evidence_scaling(self, small_gains):
        # residuals scaled by 2 scale phi_1 by exactly 2 and the attack excess
        # |tr(V) + tr(L So L^T)| by exactly 4 (dyadic factor, no rounding)
        l, sigma_o = small_gains
        rng = np.random.default_rng(4)
        terms = [(rng.standard_normal(2), rng.standard_normal(2)) for _ in range(5)]
        center = float(np.trace(l @ sigma_o @ l.T))

        def run(scale):
            state = detect.TestWindowState(5)
            for w, r in terms:
                phi_1, phi_2 = detect.new_stats(state, w, scale * r, l, sigma_o)
            return phi_1, state.sq_mean()

        phi_1a, sq_a = run(1.0)
        phi_1b, sq_b = run(2.0)
        np.testing.assert_array_equal(phi_1b, 2.0 * phi_1a)
        assert sq_b == 4.0 * sq_a

    def test_long_window_uses_running_sums(self, small_gains):
        l, sigma_o = small_gains
        state = detect.TestWindowState(100)
        assert not state._exact
        rng = np.random.default_rng(9)
        for _ in range(250):
            detect.new_stats(state, rng.standard_normal(2), rng.standard_normal(2),
                             l, sigma_o)
        assert state.count == 100


class TestDecide:
    CFG = detect.DetectorConfig(window=5, thresh_new_1=np.array([7e-4, 7e-4]),
                                thresh_new_2=7e-4)

    def test_all_below(self):
        assert detect.decide(np.array([1e-5, 1e-5]), 1e-5, self.CFG) == 1

    def test_boundary_is_alarm(self):
        assert detect.decide(np.array([1e-5, 1e-5]), 7e-4, self.CFG) == 0

    def test_any_of_rule(self):
        assert detect.decide(np.array([1e-5, 8e-4]), 1e-5, self.CFG) == 0

    def test_conventional_rule(self):
        assert detect.decide_conventional(1e-5, 1e-5, self.CFG) == 1
        assert detect.decide_conventional(2e-4, 1e-5, self.CFG) == 0
        assert detect.decide_conventional(1e-5, 1.5e-3, self.CFG) == 0


class TestCompensate:
    def test_h_sequence(self):
        buf = detect.CompensationBuffer()
        eps_seq = [1, 1, 0, 0, 1]
        h_seq = []
        for k, eps in enumerate(eps_seq):
            _, h = detect.compensate(buf, eps, np.array([float(k), 0.0]), k)
            h_seq.append(h)
        assert h_seq == [0, 0, 1, 2, 0]

    def test_replay_value(self):
        buf = detect.CompensationBuffer()
        y100 = np.array([0.5, -0.5])
        detect.compensate(buf, 1, y100, 100)
        y_tilde, h = detect.compensate(buf, 0, np.array([9.0, 9.0]), 101)
        np.testing.assert_array_equal(y_tilde, y100)
        assert h == 1

    def test_pass_through_when_healthy(self):
        buf = detect.CompensationBuffer()
        for k in range(5):
            y = np.array([float(k), float(-k)])
            y_tilde, h = detect.compensate(buf, 1, y, k)
            np.testing.assert_array_equal(y_tilde, y)
            assert h == 0

    def test_cold_start_error(self):
        with pytest.raises(detect.ColdStartError):
            detect.compensate(detect.CompensationBuffer(), 0, np.zeros(2), 0)


class TestCompensatedIndicator:
    def test_zero_residual_term(self, small_gains):
        l, sigma_o = small_gains
        state = detect.TestWindowState(5)
        c = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])
        x_hat = np.array([0.1, 0.2, 0.0, 0.0])
        y_tilde = c @ x_hat
        for _ in range(5):
            phi = detect.compensated_indicator(state, y_tilde, x_hat, c, l, sigma_o)
        assert phi == pytest.approx(abs(np.trace(l @ sigma_o @ l.T)))
