"""Windowed watermark-correlation tests, alarm decisions, and the
healthy-output compensation buffer.

Two families of statistics over a sliding window of T steps:

* conventional scheme: phi_d1 = ||mean w_d(k-1) L r_d(k)||, and
  phi_d2 = |tr(mean L r_d (L r_d)^T - L Sigma_o L^T)|;
* new scheme: phi_1i = ||mean w_yi(k) L r(k)|| per output component, and
  phi_2 with the contemporaneous residual r.

Alarm rule: any statistic at or above its threshold (>= on the boundary).
Statistics before the window has filled are computed over the available
samples and flagged as warm-up; warm-up alarms are suppressed.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

# Windows up to this length recompute their aggregates from scratch each step,
# which makes the statistics exact functions of the last T terms (bitwise
# shift-invariance).  Longer windows keep running sums.
_EXACT_WINDOW_LIMIT = 64


class ColdStartError(RuntimeError):
    """Compensation requested before any healthy sample was stored."""


@dataclass(frozen=True)
class DetectorConfig:
    window: int = 5
    thresh_conv_1: float = 2e-4
    thresh_conv_2: float = 1.5e-3
    thresh_new_1: np.ndarray = field(default_factory=lambda: np.array([7e-4, 7e-4]))
    thresh_new_2: float = 7e-4

    def __post_init__(self):
        object.__setattr__(self, "thresh_new_1",
                           np.atleast_1d(np.asarray(self.thresh_new_1, dtype=float)))
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if (self.thresh_conv_1 <= 0 or self.thresh_conv_2 <= 0
                or self.thresh_new_2 <= 0 or np.any(self.thresh_new_1 <= 0)):
            raise ValueError("thresholds must be positive")


class TestWindowState:
    """Sliding-window accumulator for one family of test statistics."""

    def __init__(self, window: int):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self._cross = deque(maxlen=window)   # per-step m x n cross terms
        self._sq = deque(maxlen=window)      # per-step ||L r||^2
        self._exact = window <= _EXACT_WINDOW_LIMIT
        self._cross_sum = None
        self._sq_sum = 0.0

    @property
    def count(self) -> int:
        return len(self._sq)

    @property
    def warm_up(self) -> bool:
        return self.count < self.window

    def push(self, cross: np.ndarray, lr: np.ndarray) -> None:
        sq = float(lr @ lr)
        if not self._exact:
            if self._cross_sum is None:
                self._cross_sum = np.zeros_like(cross)
            if len(self._sq) == self.window:
                self._cross_sum -= self._cross[0]
                self._sq_sum -= self._sq[0]
            self._cross_sum += cross
            self._sq_sum += sq
        self._cross.append(cross)
        self._sq.append(sq)

    def cross_mean(self) -> np.ndarray:
        if self._exact:
            return sum(self._cross) / self.count
        return self._cross_sum / self.count

    def sq_mean(self) -> float:
        if self._exact:
            return sum(self._sq) / self.count
        return self._sq_sum / self.count


def conventional_stats(state: TestWindowState, w_d_prev: float, r_d, l,
                       sigma_o) -> tuple[float, float]:
    """Push the step terms (w_d(k-1) L r_d(k), L r_d) and return (phi_d1, phi_d2)."""
    l = np.asarray(l, dtype=float)
    lr = l @ np.asarray(r_d, dtype=float)
    state.push(float(w_d_prev) * lr, lr)
    phi_d1 = float(np.linalg.norm(state.cross_mean()))
    phi_d2 = abs(state.sq_mean() - float(np.trace(l @ sigma_o @ l.T)))
    return phi_d1, phi_d2


def new_stats(state: TestWindowState, w_y, r, l, sigma_o) -> tuple[np.ndarray, float]:
    """Push the step terms (w_y(k) (x) L r(k), L r) and return (phi_1 per output, phi_2)."""
    l = np.asarray(l, dtype=float)
    w_y = np.asarray(w_y, dtype=float)
    lr = l @ np.asarray(r, dtype=float)
    state.push(np.outer(w_y, lr), lr)
    phi_1 = np.linalg.norm(state.cross_mean(), axis=1)
    phi_2 = abs(state.sq_mean() - float(np.trace(l @ sigma_o @ l.T)))
    return phi_1, phi_2


def decide(phi_1, phi_2: float, cfg: DetectorConfig) -> int:
    """0 = alarm (attack flagged), 1 = healthy; alarm on >= any threshold."""
    phi_1 = np.atleast_1d(np.asarray(phi_1, dtype=float))
    thresh = np.broadcast_to(cfg.thresh_new_1, phi_1.shape)
    if np.any(phi_1 >= thresh) or phi_2 >= cfg.thresh_new_2:
        return 0
    return 1


def decide_conventional(phi_d1: float, phi_d2: float, cfg: DetectorConfig) -> int:
    if phi_d1 >= cfg.thresh_conv_1 or phi_d2 >= cfg.thresh_conv_2:
        return 0
    return 1


@dataclass
class CompensationBuffer:
    last_healthy_output: np.ndarray | None = None
    last_healthy_step: int = -1
    h_current: int = 0


def compensate(buf: CompensationBuffer, eps: int, y_minus, k: int) -> tuple[np.ndarray, int]:
    """Healthy-output replay.

    eps == 1: store y_minus as the latest healthy output, feed it through
    (delay 0).  eps == 0: feed the stored healthy output, delay k minus the
    step it was stored at.
    """
    y_minus = np.asarray(y_minus, dtype=float)
    if eps == 1:
        buf.last_healthy_output = y_minus.copy()
        buf.last_healthy_step = k
        buf.h_current = 0
        return y_minus, 0
    if buf.last_healthy_output is None:
        raise ColdStartError("alarm before any healthy sample was buffered")
    buf.h_current = k - buf.last_healthy_step
    return buf.last_healthy_output, buf.h_current


def compensated_indicator(state: TestWindowState, y_tilde, x_hat_prior, c, l,
                          sigma_o) -> float:
    """phi_2-style trace statistic on the compensated residual
    r~(k) = y~(k) - C xhat(k|k-1)."""
    c = np.asarray(c, dtype=float)
    l = np.asarray(l, dtype=float)
    r_tilde = np.asarray(y_tilde, dtype=float) - c @ np.asarray(x_hat_prior, dtype=float)
    lr = l @ r_tilde
    state.push(lr, lr)
    return abs(state.sq_mean() - float(np.trace(l @ sigma_o @ l.T)))
