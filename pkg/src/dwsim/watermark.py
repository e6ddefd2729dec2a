"""Keyed watermark streams and the output-encryption channel.

Both sides of the network regenerate the same watermark sequence from a
shared seed instead of transmitting it.  The uniform source is SplitMix64
(fully specified 64-bit generator, trivially portable across languages), and
Gaussians come from the Marsaglia polar method on top of it.  The polar
rejection loop consumes a variable number of uniforms, but the two endpoints
run the identical loop over identical streams, so draw ``k`` is bit-equal on
both sides for every ``k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics

_MASK64 = (1 << 64) - 1
_COUNTER_MAX = (1 << 63) - 1


class ChannelExhaustedError(RuntimeError):
    """Watermark counter overflow."""


class _SplitMix64:
    """SplitMix64: documented in Steele et al., 'Fast splittable PRNGs'."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        # 53 high bits -> [0, 1)
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


class WatermarkEndpoint:
    """One side (encrypt or decrypt) of a synchronized watermark channel."""

    def __init__(self, seed: int, std: np.ndarray, counter_start: int = 1,
                 counter_max: int = _COUNTER_MAX):
        self._stream = _SplitMix64(seed)
        self._std = np.asarray(std, dtype=float)
        self.counter = counter_start
        self._counter_max = counter_max
        self._spare = None

    def _standard_gaussian(self) -> float:
        if self._spare is not None:
            g, self._spare = self._spare, None
            return g
        while True:
            u = 2.0 * self._stream.uniform() - 1.0
            v = 2.0 * self._stream.uniform() - 1.0
            s = u * u + v * v
            if 0.0 < s < 1.0:
                break
        f = math.sqrt(-2.0 * math.log(s) / s)
        self._spare = v * f
        return u * f

    def next_watermark(self) -> np.ndarray:
        """Next watermark vector; advances this endpoint's counter."""
        if self.counter >= self._counter_max:
            raise ChannelExhaustedError(f"watermark counter reached {self.counter}")
        draw = np.array([self._standard_gaussian() for _ in self._std])
        self.counter += 1
        return draw * self._std


@dataclass
class WatermarkChannel:
    """Shared seed plus per-component watermark variances (sigma_w)."""

    seed: int
    variances: np.ndarray

    def __post_init__(self):
        self.variances = np.atleast_1d(np.asarray(self.variances, dtype=float))
        if np.any(self.variances < 0.0):
            raise ValueError("watermark variances must be nonnegative")

    def endpoint(self) -> WatermarkEndpoint:
        # Scramble the user seed once so nearby seeds give unrelated streams.
        scrambled = _SplitMix64(self.seed).next_u64()
        return WatermarkEndpoint(scrambled, np.sqrt(self.variances))

    def encrypt_endpoint(self) -> WatermarkEndpoint:
        return self.endpoint()

    def decrypt_endpoint(self) -> WatermarkEndpoint:
        return self.endpoint()


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise numerics.DimensionError(f"shape mismatch {a.shape} vs {b.shape}")


def encrypt_output(y, w) -> np.ndarray:
    """y_w+ = y + w_y."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    _check_same_shape(y, w)
    return y + w


def decrypt_output(y_a, w) -> np.ndarray:
    """y_w- = y_a - w_y."""
    y_a = np.asarray(y_a, dtype=float)
    w = np.asarray(w, dtype=float)
    _check_same_shape(y_a, w)
    return y_a - w


def inject_control_watermark(u_d, w_d) -> np.ndarray:
    """u = u_d + w_d (control-side watermark of the conventional scheme)."""
    u_d = np.atleast_1d(np.asarray(u_d, dtype=float))
    w_d = np.atleast_1d(np.asarray(w_d, dtype=float))
    _check_same_shape(u_d, w_d)
    return u_d + w_d


# --- exact in-process transport ----------------------------------------------
#
# The simulated channel carries the encrypted value at effectively infinite
# precision: encrypt_exact returns (sum, correction) from Knuth's TwoSum, so
# an untouched transmission decrypts back to y bit-for-bit.  A replaced
# payload (attack) has no correction term and decrypts with ordinary float
# arithmetic.  This is what makes "zero performance loss from watermarking"
# exact rather than merely within rounding error.

def encrypt_exact(y, w) -> tuple[np.ndarray, np.ndarray]:
    """TwoSum encryption: returns (s, e) with s = fl(y + w), s + e = y + w exactly."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    _check_same_shape(y, w)
    s = y + w
    bb = s - y
    e = (y - (s - bb)) + (w - bb)
    return s, e


def decrypt_exact(payload: tuple[np.ndarray, np.ndarray], w) -> np.ndarray:
    """Inverse of encrypt_exact; exact when the payload was not tampered with."""
    s, e = payload
    w = np.asarray(w, dtype=float)
    _check_same_shape(np.asarray(s), w)
    t = s - w
    bb = t - s
    e2 = (s - (t - bb)) + ((-w) - bb)
    return t + (e2 + e)
