"""False data injection on the measurement channel.

The attacker runs its own decaying dynamics x_a(k+1) = A_a x_a(k) and
replaces the transmitted payload wholesale with C x_a(k) while a window is
active; outside windows the channel is transparent.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .numerics import spectral_radius


class SequencingError(RuntimeError):
    """attack_channel was called with a non-monotone step index."""


@dataclass(frozen=True)
class FdiaSpec:
    a_attack: np.ndarray
    x_a_init: np.ndarray
    windows: tuple[tuple[int, float], ...]  # inclusive [start, end]; end may be inf

    def __post_init__(self):
        object.__setattr__(self, "a_attack", np.atleast_2d(np.asarray(self.a_attack, dtype=float)))
        object.__setattr__(self, "x_a_init", np.asarray(self.x_a_init, dtype=float))
        wins = tuple((int(s), float(e)) for s, e in self.windows)
        for s, e in wins:
            if e < s:
                raise ValueError(f"window [{s}, {e}] is empty")
        for (s1, e1), (s2, e2) in zip(wins, wins[1:]):
            if s2 <= e1:
                raise ValueError("attack windows must be disjoint and sorted")
        object.__setattr__(self, "windows", wins)
        rho = spectral_radius(self.a_attack)
        if rho >= 1.0:
            warnings.warn(f"rho(A_a) = {rho:.4f} >= 1: attack output will diverge "
                          "and is trivially visible", stacklevel=2)

    def window_start(self, k: int):
        """Start of the window containing step k, or None."""
        for s, e in self.windows:
            if s <= k <= e:
                return s
        return None


@dataclass
class AttackState:
    x_a: np.ndarray
    active: bool = False
    last_k: int = -1


def initial_attack_state(spec: FdiaSpec) -> AttackState:
    return AttackState(x_a=spec.x_a_init.copy(), active=False)


def attack_channel(spec: FdiaSpec, state: AttackState, k: int,
                   y_transmitted, c) -> tuple[np.ndarray, AttackState]:
    """One channel transit at step k.

    Inside a window the received value is C x_a(k) (state reset to x_a_init
    at the window's first step, then advanced by A_a); outside, the
    transmitted value passes through untouched.
    """
    if k <= state.last_k:
        raise SequencingError(f"step {k} not after previous step {state.last_k}")
    start = spec.window_start(k)
    if start is None:
        return y_transmitted, AttackState(x_a=state.x_a, active=False, last_k=k)
    x_a = spec.x_a_init.copy() if k == start else state.x_a
    c = np.asarray(c, dtype=float)
    y_received = c @ x_a
    return y_received, AttackState(x_a=spec.a_attack @ x_a, active=True, last_k=k)


def persistent_preset(start: int = 2, amplitude: float = 1e-7) -> FdiaSpec:
    """The long-horizon injection: A_a = 0.1 I, tiny initial state, window [start, inf)."""
    return FdiaSpec(a_attack=0.1 * np.eye(4),
                    x_a_init=np.array([amplitude, 0.0, 0.0, amplitude]),
                    windows=((start, math.inf),))


def burst_preset_fig6() -> FdiaSpec:
    """Four-step burst at k = 100..103 with x_a reset to [2;2;2;2]."""
    return FdiaSpec(a_attack=0.1 * np.eye(4),
                    x_a_init=np.array([2.0, 2.0, 2.0, 2.0]),
                    windows=((100, 103),))
