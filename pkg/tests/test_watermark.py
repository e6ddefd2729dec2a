import numpy as np
import pytest

from dwsim import numerics, watermark as wm


class TestKeySync:
    def test_lockstep_sequences_bitwise(self):
        chan = wm.WatermarkChannel(seed=1, variances=[1e-4, 1e-4])
        enc, dec = chan.encrypt_endpoint(), chan.decrypt_endpoint()
        for _ in range(1000):
            np.testing.assert_array_equal(enc.next_watermark(), dec.next_watermark())
        assert enc.counter == dec.counter == 1001

    def test_distinct_seeds_differ(self):
        a = wm.WatermarkChannel(seed=1, variances=[1.0]).endpoint()
        b = wm.WatermarkChannel(seed=2, variances=[1.0]).endpoint()
        assert not np.array_equal(a.next_watermark(), b.next_watermark())

    def test_zero_variance_draws_zero_and_counts(self):
        ep = wm.WatermarkChannel(seed=3, variances=[0.0, 0.0]).endpoint()
        before = ep.counter
        np.testing.assert_array_equal(ep.next_watermark(), np.zeros(2))
        assert ep.counter == before + 1

    def test_counter_overflow(self):
        ep = wm.WatermarkEndpoint(seed=1, std=np.array([1.0]),
                                  counter_start=10, counter_max=10)
        with pytest.raises(wm.ChannelExhaustedError):
            ep.next_watermark()


N_BIG = 1_000_000


@pytest.fixture(scope="module")
def big_stream():
    ep = wm.WatermarkChannel(seed=77, variances=[1e-4, 1e-4]).endpoint()
    return np.array([ep.next_watermark() for _ in range(N_BIG)])


class TestStatistics:
    N = N_BIG

    def test_mean_and_variance(self, big_stream):
        sigma = 1e-2
        assert abs(big_stream[:, 0].mean()) <= 3.0 * sigma / np.sqrt(self.N)
        assert abs(big_stream[:, 1].mean()) <= 3.0 * sigma / np.sqrt(self.N)
        for i in range(2):
            var = big_stream[:, i].var()
            assert 0.95e-4 <= var <= 1.05e-4

    def test_whiteness_lags_1_to_5(self, big_stream):
        x = big_stream[:, 0]
        x = (x - x.mean()) / x.std()
        bound = 3.0 / np.sqrt(self.N)
        for lag in range(1, 6):
            autocorr = float(np.mean(x[:-lag] * x[lag:]))
            assert abs(autocorr) <= bound, f"lag {lag}: {autocorr}"

    def test_cross_component_independence(self, big_stream):
        a = big_stream[:, 0] / big_stream[:, 0].std()
        b = big_stream[:, 1] / big_stream[:, 1].std()
        assert abs(np.mean(a * b)) <= 3.0 / np.sqrt(self.N)


class TestArithmeticOps:
    def test_encrypt(self):
        np.testing.assert_array_equal(
            wm.encrypt_output(np.array([0.5, -0.25]), np.zeros(2)), [0.5, -0.25])
        np.testing.assert_array_equal(
            wm.encrypt_output(np.zeros(2), np.array([0.5, 1.0])), [0.5, 1.0])
        np.testing.assert_allclose(
            wm.encrypt_output(np.array([0.1, 0.2]), np.array([0.01, -0.01])),
            [0.11, 0.19])

    def test_decrypt(self):
        y_a = np.array([0.25, 0.5])
        np.testing.assert_array_equal(wm.decrypt_output(y_a, y_a), np.zeros(2))
        y = np.array([0.125, -0.5])
        w = np.array([0.25, 0.75])
        np.testing.assert_array_equal(
            wm.decrypt_output(wm.encrypt_output(y, w), w), y)  # dyadic, exact

    def test_attacked_payload_does_not_round_trip(self):
        y = np.array([0.1, 0.2])
        w = np.array([0.03, -0.02])
        tampered = wm.encrypt_output(y, w) + np.array([1.0, 0.0])
        assert not np.array_equal(wm.decrypt_output(tampered, w), y)

    def test_inject(self):
        np.testing.assert_array_equal(
            wm.inject_control_watermark(np.array([0.7]), np.array([0.0])), [0.7])
        np.testing.assert_array_equal(
            wm.inject_control_watermark(np.array([0.0]), np.array([0.4])), [0.4])
        np.testing.assert_array_equal(
            wm.inject_control_watermark(np.array([0.5]), np.array([-0.5])), [0.0])

    def test_dimension_mismatch(self):
        with pytest.raises(numerics.DimensionError):
            wm.encrypt_output(np.zeros(2), np.zeros(3))


class TestExactTransport:
    def test_round_trip_bitwise_across_magnitudes(self):
        rng = np.random.default_rng(0)
        for _ in range(5000):
            y = rng.standard_normal(2) * 10.0 ** rng.integers(-8, 4)
            w = rng.standard_normal(2) * 10.0 ** rng.integers(-8, 4)
            back = wm.decrypt_exact(wm.encrypt_exact(y, w), w)
            np.testing.assert_array_equal(back, y)

    def test_tampered_payload_decrypts_plainly(self):
        y = np.array([0.1, 0.2])
        w = np.array([0.01, 0.02])
        fake = np.array([2.0, 2.0])
        out = wm.decrypt_exact((fake, np.zeros(2)), w)
        np.testing.assert_allclose(out, fake - w)
