"""Closed-form attack/watermark statistics, closed-loop block matrices,
switched-system dwell-time certificates, and Monte Carlo cross-checks.

Closed forms implemented here:

* conventional scheme under injection:  E[w_d(k-1) L r_d(k)] = -s2 L C B and
  steady residual covariance L C M_d C^T L^T with
  M_d = Phi1 M_d Phi1^T + s2 B B^T;
* new scheme under injection:  E[w_yi(k) L r(k)] = -s2_i L[:, i] and steady
  covariance L (C M C^T + S_w) L^T with
  M = Phi1 M Phi1^T + (A+BK) L S_w ((A+BK) L)^T;
* attack-free cost inflation from control-side watermarking:
  dJ = s2 tr(B^T S B + R).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace

import numpy as np

from . import numerics
from .attack import FdiaSpec
from .model import LoopGains, PlantModel
from .sim import CONVENTIONAL, ScenarioConfig, run_closed_loop

SCHEME_CONVENTIONAL = "conventional"
SCHEME_NEW_NO_COMP = "new_no_comp"
SCHEME_NEW_WITH_COMP = "new_with_comp"


@dataclass(frozen=True)
class ClosedLoopModel:
    """Every block matrix of the attacked / attack-free / delayed loops."""
    phi1: np.ndarray            # (A+BK)(I-LC)
    phi2: np.ndarray            # A_a - (A+BK)
    h_block: np.ndarray         # [-BK(I+LC), BK]
    xi: np.ndarray              # [Phi1, Phi2; 0, A_a]
    a0: np.ndarray              # [A, H; 0, Xi]  (3 m_x states)
    lambda_d: np.ndarray        # conventional noise input
    lambda0: np.ndarray         # new scheme under attack
    lambda1: np.ndarray         # attack-free subsystem noise input
    a1_switch: np.ndarray       # attack-free subsystem dynamics (3 m_x)
    a0_delay: np.ndarray        # compensated loop [x; xhat(k-1|k-1)]
    a1_delay: np.ndarray
    gamma0_delay: np.ndarray
    e_selector: np.ndarray      # E = [I, 0]
    e_complement: np.ndarray    # E^c = [0, I]


def build_closed_loop(plant: PlantModel, gains: LoopGains,
                      attack: FdiaSpec | None = None,
                      scheme: str = SCHEME_NEW_NO_COMP) -> ClosedLoopModel:
    """Assemble the block matrices of the closed loop (all variants at once;
    ``scheme`` is accepted for interface symmetry but every block is cheap)."""
    del scheme
    a, b, c, gamma = plant.a, plant.b, plant.c, plant.gamma
    l, k = gains.l, gains.k_gain
    m_x, m_y, m_n = plant.m_x, plant.m_y, plant.m_n
    m_u = plant.m_u
    i_x = np.eye(m_x)
    abk = a + b @ k
    a_a = attack.a_attack if attack is not None else np.zeros((m_x, m_x))

    phi1 = abk @ (i_x - l @ c)
    phi2 = a_a - abk
    h_block = np.hstack([-(b @ k) @ (i_x + l @ c), b @ k])
    xi = np.block([[phi1, phi2], [np.zeros((m_x, m_x)), a_a]])
    a0 = np.block([[a, h_block], [np.zeros((2 * m_x, m_x)), xi]])

    z_xn = np.zeros((m_x, m_n))
    z_xy = np.zeros((m_x, m_y))
    z_xu = np.zeros((m_x, m_u))
    lambda_d = np.block([[gamma, z_xy, b],
                         [z_xn, z_xy, -b],
                         [z_xn, z_xy, z_xu]])
    lambda0 = np.block([[gamma, z_xy, (b @ k) @ l],
                        [z_xn, z_xy, abk @ l],
                        [z_xn, z_xy, z_xy]])
    lambda1 = np.block([[gamma, (b @ k) @ l, z_xy],
                        [z_xn, -(abk @ l), z_xy],
                        [z_xn, z_xy, z_xy]])
    a1_switch = np.block([
        [a + (b @ k) @ (l @ c), -(b @ k) @ (i_x - l @ c), np.zeros((m_x, m_x))],
        [-(abk @ (l @ c)), phi1, np.zeros((m_x, m_x))],
        [np.zeros((m_x, 3 * m_x))]])

    a0_delay = np.block([[a, (b @ k) @ (i_x - l @ c) @ abk],
                         [np.zeros((m_x, m_x)), (i_x - l @ c) @ abk]])
    a1_delay = np.vstack([(b @ k) @ (l @ c), l @ c])
    gamma0_delay = np.block([[gamma, (b @ k) @ l],
                             [np.zeros((m_x, m_n)), l]])
    e_selector = np.hstack([i_x, np.zeros((m_x, m_x))])
    e_complement = np.hstack([np.zeros((m_x, m_x)), i_x])

    return ClosedLoopModel(phi1=phi1, phi2=phi2, h_block=h_block, xi=xi, a0=a0,
                           lambda_d=lambda_d, lambda0=lambda0, lambda1=lambda1,
                           a1_switch=a1_switch, a0_delay=a0_delay,
                           a1_delay=a1_delay, gamma0_delay=gamma0_delay,
                           e_selector=e_selector, e_complement=e_complement)


def _phi1(plant: PlantModel, gains: LoopGains) -> np.ndarray:
    return (plant.a + plant.b @ gains.k_gain) @ (np.eye(plant.m_x) - gains.l @ plant.c)


def limitation1_expectations(plant: PlantModel, gains: LoopGains,
                             sigma2_wd: float,
                             attack: FdiaSpec | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Conventional scheme under injection: (cross covariance, steady residual
    covariance).  cross = -s2 L C B; steady = L C M_d C^T L^T."""
    del attack  # the limits do not depend on A_a (the attack state decays)
    phi1 = _phi1(plant, gains)
    rho = numerics.spectral_radius(phi1)
    if rho >= 1.0:
        raise numerics.DivergenceError(f"rho(Phi1) = {rho:.4f} >= 1")
    cross = -sigma2_wd * (gains.l @ plant.c @ plant.b)
    m_d = numerics.solve_discrete_lyapunov(phi1, sigma2_wd * (plant.b @ plant.b.T))
    steady = gains.l @ plant.c @ m_d @ plant.c.T @ gains.l.T
    return cross.ravel(), steady


def theorem2_expectations(plant: PlantModel, gains: LoopGains,
                          sigma_wy) -> tuple[list, np.ndarray]:
    """New scheme under injection: per-output cross covariances
    -s2_i L[:, i] and steady covariance L (C M C^T + S_w) L^T."""
    sigma_wy = np.atleast_2d(np.asarray(sigma_wy, dtype=float))
    phi1 = _phi1(plant, gains)
    rho = numerics.spectral_radius(phi1)
    if rho >= 1.0:
        raise numerics.DivergenceError(f"rho(Phi1) = {rho:.4f} >= 1")
    cross = [-sigma_wy[i, i] * gains.l[:, i] for i in range(plant.m_y)]
    abk_l = (plant.a + plant.b @ gains.k_gain) @ gains.l
    m = numerics.solve_discrete_lyapunov(phi1, abk_l @ sigma_wy @ abk_l.T)
    steady = gains.l @ (plant.c @ m @ plant.c.T + sigma_wy) @ gains.l.T
    return cross, steady


def limitation3_delta_j(sigma2_wd: float, s, b, r) -> float:
    """Attack-free LQG cost added by control-side watermarking:
    s2 tr(B^T S B + R)."""
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if b.shape[0] == 1 and b.shape[1] > 1:
        b = b.T
    s = np.atleast_2d(np.asarray(s, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    return float(sigma2_wd * np.trace(b.T @ s @ b + r))


def normal_residual_trace(gains: LoopGains) -> float:
    """tr(L Sigma_o L^T): the centering term of the trace tests."""
    return float(np.trace(gains.l @ gains.sigma_o @ gains.l.T))


def complexity_ratio(m_x: int, m_y: int) -> float:
    """Cost ratio of a plain residual-energy test to the watermark tests:
    m_y^2 / (m_x^2 + m_x m_y)."""
    if m_x < 1 or m_y < 1:
        raise ValueError("dimensions must be >= 1")
    return (m_y * m_y) / (m_x * m_x + m_x * m_y)


def watermark_cost_delta(trace_marked, trace_plain, q, r) -> float:
    """Seed-matched estimate of the cost added by watermarking.

    For twin runs sharing noise streams, the cost difference splits into
    quadratic terms in the state/input deviations plus cross terms that are
    exactly zero-mean (the deviations are driven only by the watermark, which
    is independent of the noise).  Averaging just the quadratic terms is the
    control-variate form of the estimator: same expectation, with the
    +-10%-scale cross-term noise of the raw cost difference removed."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    steps = min(trace_marked.steps, trace_plain.steps)
    dx = trace_marked.x[:steps] - trace_plain.x[:steps]
    du = trace_marked.u[:steps] - trace_plain.u[:steps]
    sx = np.einsum("ki,ij,kj->", dx, q, dx)
    su = np.einsum("ki,ij,kj->", du, r, du)
    return float((sx + su) / steps)


# --- switched-system dwell-time certificate -------------------------------------

@dataclass(frozen=True)
class DwellTimeCertificate:
    lambda_plus: float
    lambda_minus: float
    g0: float | None
    g1: float | None
    g: float | None
    lambda_star: float
    lambda_dagger: float | None
    ratio_bound: float
    observed_ratio: float
    tau_ave: float | None
    verdict: str                      # "satisfied" | "violated"
    conditioning_warning: bool = False


def dwell_ratio_bound(lambda_plus: float, lambda_minus: float,
                      lambda_star: float) -> float:
    """Minimum stable/unstable activation ratio:
    (ln l+ - l* ln l-) / ((l* - 1) ln l-)."""
    if not (lambda_plus > 1.0 and 0.0 < lambda_minus < 1.0):
        raise ValueError("need lambda_plus > 1 > lambda_minus > 0")
    if not (0.0 <= lambda_star < 1.0):
        raise ValueError("need lambda_star in [0, 1)")
    return ((math.log(lambda_plus) - lambda_star * math.log(lambda_minus))
            / ((lambda_star - 1.0) * math.log(lambda_minus)))


def certificate_from_rates(lambda_plus: float, lambda_minus: float,
                           lambda_star: float, t0: int, t1: int,
                           lambda_dagger: float | None = None,
                           g0: float | None = None,
                           g1: float | None = None,
                           conditioning_warning: bool = False) -> DwellTimeCertificate:
    bound = dwell_ratio_bound(lambda_plus, lambda_minus, lambda_star)
    observed = t1 / t0
    g = min(g0, g1) if (g0 is not None and g1 is not None) else None
    tau_ave = None
    if (g is not None and g < 0 and lambda_dagger is not None
            and lambda_dagger != lambda_star):
        tau_ave = g / (lambda_dagger - lambda_star)
    return DwellTimeCertificate(
        lambda_plus=lambda_plus, lambda_minus=lambda_minus, g0=g0, g1=g1, g=g,
        lambda_star=lambda_star, lambda_dagger=lambda_dagger,
        ratio_bound=bound, observed_ratio=observed, tau_ave=tau_ave,
        verdict="satisfied" if observed >= bound else "violated",
        conditioning_warning=conditioning_warning)


def dwell_time_certificate(a0, a1, lambda_star: float,
                           lambda_dagger: float | None,
                           t0: int, t1: int) -> DwellTimeCertificate:
    """Certificate computed from the switched-system matrices themselves:
    l+ = rho(a0), l- = rho(a1), g_i = ln(smax(V_i)/smin(V_i)) / ln(l-)."""
    lam_plus = numerics.spectral_radius(a0)
    lam_minus = numerics.spectral_radius(a1)
    eig0 = numerics.eigen_decompose(a0)
    eig1 = numerics.eigen_decompose(a1)
    warn = eig0.conditioning_warning or eig1.conditioning_warning
    ln_lm = math.log(lam_minus)

    def g_of(eig):
        smax, smin = numerics.singular_value_extremes(eig.eigenvector_matrix)
        if smin <= 0.0:
            return None
        return math.log(smax / smin) / ln_lm

    return certificate_from_rates(lam_plus, lam_minus, lambda_star, t0, t1,
                                  lambda_dagger=lambda_dagger,
                                  g0=g_of(eig0), g1=g_of(eig1),
                                  conditioning_warning=warn)


# --- Monte Carlo validation of the ergodic approximations ------------------------

@dataclass
class MonteCarloResult:
    cross_estimates: list            # per output component: mean of w_i * L r
    cross_std_errors: list
    cov_estimate: np.ndarray         # mean of (L r)(L r)^T
    cov_std_error: np.ndarray
    replicas: int
    steps_per_replica: int
    burn_in: int
    failures: int = 0


def monte_carlo_test_means(cfg: ScenarioConfig, replicas: int,
                           burn_in: int = 200) -> MonteCarloResult:
    """Replica-averaged sample means of the watermark/residual cross products
    and of the residual outer products, with across-replica standard errors.

    Replica r reruns the scenario with seeds offset by r.  The first
    ``burn_in`` steps of each run are dropped so the averages estimate the
    steady state."""
    if replicas < 2:
        raise ValueError("need at least 2 replicas for standard errors")
    total = cfg.horizon * replicas
    if total < 10_000:
        raise ValueError(f"horizon * replicas = {total} < 1e4 samples")
    if cfg.horizon <= burn_in + cfg.detector.window:
        raise ValueError("horizon too short for the requested burn-in")

    l = cfg.gains.l
    conventional = cfg.scheme == CONVENTIONAL
    n_cross = cfg.plant.m_u if conventional else cfg.plant.m_y

    cross_runs = [[] for _ in range(n_cross)]
    cov_runs = []
    failures = 0
    for rep in range(replicas):
        rep_cfg = dc_replace(cfg, noise_seed=cfg.noise_seed + rep,
                             watermark_seed=cfg.watermark_seed + rep)
        try:
            trace = run_closed_loop(rep_cfg)
            lr = trace.residual[burn_in:] @ l.T
            if lr.shape[0] < 10:
                raise ValueError("run terminated too early to average")
        except Exception:
            failures += 1
            continue
        w = trace.w_seq[burn_in:]
        if conventional:
            # pair w_d(k-1) with r_d(k)
            lr_k = lr[1:]
            w_prev = w[:-1]
            for i in range(n_cross):
                cross_runs[i].append((w_prev[:, i:i + 1] * lr_k).mean(axis=0))
        else:
            for i in range(n_cross):
                cross_runs[i].append((w[:, i:i + 1] * lr).mean(axis=0))
        cov_runs.append(np.einsum("ki,kj->ij", lr, lr) / lr.shape[0])

    done = replicas - failures
    if done < 2:
        raise ValueError(f"only {done} replicas completed ({failures} failed)")
    cross_estimates, cross_se = [], []
    for i in range(n_cross):
        stack = np.asarray(cross_runs[i])
        cross_estimates.append(stack.mean(axis=0))
        cross_se.append(stack.std(axis=0, ddof=1) / math.sqrt(done))
    cov_stack = np.asarray(cov_runs)
    return MonteCarloResult(
        cross_estimates=cross_estimates, cross_std_errors=cross_se,
        cov_estimate=cov_stack.mean(axis=0),
        cov_std_error=cov_stack.std(axis=0, ddof=1) / math.sqrt(done),
        replicas=done, steps_per_replica=cfg.horizon, burn_in=burn_in,
        failures=failures)
