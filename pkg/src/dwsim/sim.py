"""Closed-loop engine for the three schemes (plain LQG loop, control-side
watermarking, output-encryption watermarking), with attack channel, detection,
compensation, platform safety limits, and trace export.

One run is strictly sequential and fully determined by its config (seeds
included); replicas with different seeds are independent.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from . import attack as attack_mod
from . import detect as detect_mod
from . import model as model_mod
from . import watermark as wm_mod

NO_WATERMARK = "NoWatermark"
CONVENTIONAL = "ConventionalDW"
NEW_DW = "NewDW"
SCHEMES = (NO_WATERMARK, CONVENTIONAL, NEW_DW)


class ConfigError(ValueError):
    """Scenario configuration is inconsistent or unparseable."""


class WarmupError(ValueError):
    """Horizon shorter than the detection window."""


@dataclass(frozen=True)
class SafetyLimits:
    """Platform limits of the pendulum rig: servo OFF past position/angle
    limits, cart put BACK to zero past the optional velocity limit."""
    position: float | None = 0.3
    angle: float | None = 0.8
    velocity: float | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    scheme: str
    plant: model_mod.PlantModel
    gains: model_mod.LoopGains
    horizon: int
    noise_seed: int = 0
    watermark_seed: int = 1
    wm_variances: np.ndarray = field(default_factory=lambda: np.array([1e-4, 1e-4]))
    compensation: bool = False
    attack: attack_mod.FdiaSpec | None = None
    detector: detect_mod.DetectorConfig = field(default_factory=detect_mod.DetectorConfig)
    safety: SafetyLimits | None = field(default_factory=SafetyLimits)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.compensation and self.scheme != NEW_DW:
            raise ConfigError("compensation is only available with the NewDW scheme")
        object.__setattr__(self, "wm_variances",
                           np.atleast_1d(np.asarray(self.wm_variances, dtype=float)))


@dataclass
class SimTrace:
    """Per-step record of one closed-loop run (arrays over executed steps)."""
    scheme: str
    x: np.ndarray
    x_hat_prior: np.ndarray
    x_hat_post: np.ndarray
    u: np.ndarray
    y: np.ndarray
    y_plus: np.ndarray | None
    y_a: np.ndarray
    y_minus: np.ndarray | None
    y_tilde: np.ndarray | None
    residual: np.ndarray
    w_seq: np.ndarray | None          # watermark actually used each step
    phi_d1: np.ndarray | None
    phi_d2: np.ndarray | None
    phi_1: np.ndarray | None
    phi_2: np.ndarray | None
    phi_2_tilde: np.ndarray | None
    eps: np.ndarray
    h: np.ndarray
    events: list
    termination: str = "RUNNING"       # RUNNING (ran to horizon) or OFF
    termination_step: int | None = None
    diverged: bool = False

    @property
    def steps(self) -> int:
        return self.x.shape[0]


def _safety_event(x, limits: SafetyLimits | None):
    if limits is None:
        return None
    if limits.position is not None and abs(x[0]) >= limits.position:
        return "OFF"
    if limits.angle is not None and abs(x[1]) >= limits.angle:
        return "OFF"
    if limits.velocity is not None and (abs(x[2]) > limits.velocity
                                        or abs(x[3]) > limits.velocity):
        return "BACK"
    return None


def run_closed_loop(cfg: ScenarioConfig) -> SimTrace:
    """Execute one run.  Step order: draw noise; plant output; channel
    (encrypt / attack / decrypt as the scheme dictates); detection;
    compensation; measurement update; control; safety check; plant step."""
    plant, gains = cfg.plant, cfg.gains
    m_x, m_y, m_u = plant.m_x, plant.m_y, plant.m_u
    horizon = int(cfg.horizon)
    conventional = cfg.scheme == CONVENTIONAL
    new_dw = cfg.scheme == NEW_DW

    rng = np.random.default_rng(cfg.noise_seed)
    n_seq = rng.standard_normal((horizon, plant.m_n)) * np.sqrt(np.diag(plant.sigma_n))
    v_seq = rng.standard_normal((horizon, m_y)) * np.sqrt(np.diag(plant.sigma_v))

    enc = dec = wd_src = None
    if new_dw:
        if cfg.wm_variances.size != m_y:
            raise ConfigError("NewDW needs one watermark variance per output")
        channel = wm_mod.WatermarkChannel(cfg.watermark_seed, cfg.wm_variances)
        enc, dec = channel.encrypt_endpoint(), channel.decrypt_endpoint()
    elif conventional:
        if cfg.wm_variances.size != m_u:
            raise ConfigError("ConventionalDW needs one watermark variance per input")
        wd_src = wm_mod.WatermarkChannel(cfg.watermark_seed, cfg.wm_variances).endpoint()

    att_state = attack_mod.initial_attack_state(cfg.attack) if cfg.attack else None
    win = detect_mod.TestWindowState(cfg.detector.window) if (new_dw or conventional) else None
    win_tilde = detect_mod.TestWindowState(cfg.detector.window) if (new_dw and cfg.compensation) else None
    comp_buf = detect_mod.CompensationBuffer() if (new_dw and cfg.compensation) else None

    est = model_mod.EstimatorState.zero(m_x)
    x = np.zeros(m_x)
    w_d_prev = 0.0

    cols = {name: [] for name in ("x", "xp", "xf", "u", "y", "yplus", "ya", "yminus",
                                  "ytilde", "r", "w", "pd1", "pd2", "p1", "p2",
                                  "p2t", "eps", "h")}
    events = []
    termination, term_step, diverged = "RUNNING", None, False

    for k in range(horizon):
        n_k, v_k = n_seq[k], v_seq[k]
        y = model_mod.plant_output(plant, x, v_k)

        y_plus = y_a = y_minus = y_tilde = None
        w_used = None
        phi_d1 = phi_d2 = phi_2 = phi_2t = None
        phi_1 = None
        eps, h = 1, 0

        if new_dw:
            w_enc = enc.next_watermark()
            s, e = wm_mod.encrypt_exact(y, w_enc)
            if att_state is not None:
                s_recv, att_state = attack_mod.attack_channel(cfg.attack, att_state, k, s, plant.c)
                e_recv = np.zeros_like(e) if att_state.active else e
            else:
                s_recv, e_recv = s, e
            w_dec = dec.next_watermark()
            y_minus = wm_mod.decrypt_exact((s_recv, e_recv), w_dec)
            y_plus, y_a, w_used = s, s_recv, w_dec

            r = y_minus - plant.c @ est.x_hat_prior
            phi_1, phi_2 = detect_mod.new_stats(win, w_dec, r, gains.l, gains.sigma_o)
            eps = 1 if win.warm_up else detect_mod.decide(phi_1, phi_2, cfg.detector)
            if cfg.compensation:
                y_tilde, h = detect_mod.compensate(comp_buf, eps, y_minus, k)
                phi_2t = detect_mod.compensated_indicator(
                    win_tilde, y_tilde, est.x_hat_prior, plant.c, gains.l, gains.sigma_o)
                meas = y_tilde
            else:
                meas = y_minus
        else:
            if att_state is not None:
                y_a, att_state = attack_mod.attack_channel(cfg.attack, att_state, k, y, plant.c)
            else:
                y_a = y
            r = y_a - plant.c @ est.x_hat_prior
            if conventional:
                phi_d1, phi_d2 = detect_mod.conventional_stats(
                    win, w_d_prev, r, gains.l, gains.sigma_o)
                eps = 1 if win.warm_up else detect_mod.decide_conventional(
                    phi_d1, phi_d2, cfg.detector)
            meas = y_a

        est = model_mod.estimator_update(gains, plant, est, meas)
        u_d = model_mod.control_law(gains, est)
        if conventional:
            w_d = wd_src.next_watermark()
            u = wm_mod.inject_control_watermark(u_d, w_d)
            w_used = w_d
        else:
            u = u_d

        event = None
        if not np.all(np.isfinite(x)):
            event, diverged = "OFF", True
        else:
            event = _safety_event(x, cfg.safety)

        cols["x"].append(x.copy()); cols["xp"].append(est.x_hat_prior.copy())
        cols["xf"].append(est.x_hat_post.copy()); cols["u"].append(u.copy())
        cols["y"].append(y); cols["yplus"].append(y_plus); cols["ya"].append(y_a)
        cols["yminus"].append(y_minus); cols["ytilde"].append(y_tilde)
        cols["r"].append(r); cols["w"].append(w_used)
        cols["pd1"].append(phi_d1); cols["pd2"].append(phi_d2)
        cols["p1"].append(phi_1); cols["p2"].append(phi_2); cols["p2t"].append(phi_2t)
        cols["eps"].append(eps); cols["h"].append(h)
        events.append(event or "")

        if event == "OFF":
            termination, term_step = "OFF", k
            break
        if event == "BACK":
            x = x.copy()
            x[0] = 0.0
            x[2] = 0.0

        x = model_mod.plant_step(plant, x, u, n_k)
        # prediction uses the applied input, watermark included (the
        # controller node knows the w_d it injected)
        est = model_mod.estimator_predict(gains, plant, est, u)
        if conventional:
            w_d_prev = float(w_used[0])

    def arr(name):
        vals = cols[name]
        if not vals or vals[0] is None:
            return None
        return np.asarray(vals, dtype=float)

    return SimTrace(
        scheme=cfg.scheme,
        x=arr("x"), x_hat_prior=arr("xp"), x_hat_post=arr("xf"), u=arr("u"),
        y=arr("y"), y_plus=arr("yplus"), y_a=arr("ya"), y_minus=arr("yminus"),
        y_tilde=arr("ytilde"), residual=arr("r"), w_seq=arr("w"),
        phi_d1=arr("pd1"), phi_d2=arr("pd2"), phi_1=arr("p1"), phi_2=arr("p2"),
        phi_2_tilde=arr("p2t"),
        eps=np.asarray(cols["eps"], dtype=int), h=np.asarray(cols["h"], dtype=int),
        events=events, termination=termination, termination_step=term_step,
        diverged=diverged)


def twin_run_distortion_power(cfg: ScenarioConfig) -> float:
    """Mean squared gap between L r of the attacked run and of its attack-free
    twin under identical noise and watermark streams."""
    if cfg.attack is None:
        raise ConfigError("twin-run distortion power needs an attack in the config")
    if cfg.horizon < cfg.detector.window:
        raise WarmupError("horizon shorter than the detection window")
    attacked = run_closed_loop(cfg)
    clean = run_closed_loop(replace(cfg, attack=None))
    steps = min(attacked.steps, clean.steps)
    l = cfg.gains.l
    diff = (attacked.residual[:steps] - clean.residual[:steps]) @ l.T
    return float(np.sum(diff * diff) / steps)


def lqg_cost(trace: SimTrace, q, r) -> float:
    """Time-averaged x^T Q x + u^T R u over the trace."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    sx = np.einsum("ki,ij,kj->", trace.x, q, trace.x)
    su = np.einsum("ki,ij,kj->", trace.u, r, trace.u)
    return float((sx + su) / trace.steps)


def estimation_error_power(trace: SimTrace, window: int, k: int, c=None) -> float:
    """Windowed mean of ||C (x - xhat(k|k))||^2 ending at step k.

    Before the window fills this averages over the available samples
    (warm-up behaviour)."""
    if k < 0 or k >= trace.steps:
        raise ValueError(f"step {k} outside trace of {trace.steps} steps")
    if c is None:
        c = np.eye(trace.x.shape[1])
    c = np.atleast_2d(np.asarray(c, dtype=float))
    start = max(0, k - window + 1)
    err = (trace.x[start:k + 1] - trace.x_hat_post[start:k + 1]) @ c.T
    return float(np.mean(np.sum(err * err, axis=1)))


# --- trace export ---------------------------------------------------------------

def trace_header(m_x: int = 4, m_y: int = 2) -> list[str]:
    head = ["k"]
    head += [f"x{i+1}" for i in range(m_x)]
    head += [f"xhat{i+1}" for i in range(m_x)]
    head += ["u"]
    head += [f"y{i+1}" for i in range(m_y)]
    head += [f"ya{i+1}" for i in range(m_y)]
    head += [f"ytilde{i+1}" for i in range(m_y)]
    head += [f"r{i+1}" for i in range(m_y)]
    head += ["phi_d1", "phi_d2"]
    head += [f"phi_1{i+1}" for i in range(m_y)]
    head += ["phi_2", "phi_2_tilde", "eps", "h", "event"]
    return head


def trace_to_csv(trace: SimTrace) -> str:
    """Comma-separated trace with one row per executed step; quantities a
    scheme does not produce are left empty."""
    m_x = trace.x.shape[1]
    m_y = trace.y.shape[1]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(trace_header(m_x, m_y))

    def cells(array, k, width):
        if array is None:
            return [""] * width
        row = np.atleast_1d(array[k])
        return [repr(float(val)) for val in row]

    for k in range(trace.steps):
        row = [str(k)]
        row += cells(trace.x, k, m_x)
        row += cells(trace.x_hat_post, k, m_x)
        row += cells(trace.u, k, 1)
        row += cells(trace.y, k, m_y)
        row += cells(trace.y_a, k, m_y)
        row += cells(trace.y_tilde, k, m_y)
        row += cells(trace.residual, k, m_y)
        row += cells(trace.phi_d1, k, 1)
        row += cells(trace.phi_d2, k, 1)
        row += cells(trace.phi_1, k, m_y)
        row += cells(trace.phi_2, k, 1)
        row += cells(trace.phi_2_tilde, k, 1)
        row += [str(int(trace.eps[k])), str(int(trace.h[k])), trace.events[k]]
        writer.writerow(row)
    return out.getvalue()


def write_trace_csv(path, trace: SimTrace) -> None:
    with open(path, "w") as fh:
        fh.write(trace_to_csv(trace))
