"""Dense small-matrix utilities: Lyapunov/Riccati solvers and spectral helpers.

Everything here operates on plain numpy arrays (row-major, float64) and is a
pure function of its inputs.  Solvers are iteration- or kron-based rather than
Schur-based; they are meant for the small (<= 12 state) systems this package
simulates and every solution is validated against an explicit residual bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Default tolerances; every solver accepts per-call overrides.
LYAPUNOV_RTOL = 1e-10
DARE_RESIDUAL_TOL = 1e-9
DARE_MAX_ITER = 10_000
EIGEN_RECONSTRUCTION_RTOL = 1e-6


class DimensionError(ValueError):
    """Input matrix has the wrong shape for the operation."""


class InputError(ValueError):
    """Input matrix violates a structural requirement (e.g. symmetry)."""


class DivergenceError(ValueError):
    """Dynamics matrix is not stable enough for the fixed point to exist."""


class ConvergenceError(RuntimeError):
    """Iterative solver hit its cap; carries the final residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (final residual {residual:.3e})")
        self.residual = residual


def _as_square(m, name: str = "matrix") -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def spectral_radius(m) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    m = _as_square(m)
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def frobenius(m) -> float:
    return float(np.linalg.norm(np.asarray(m, dtype=float), "fro"))


def solve_discrete_lyapunov(phi, q, rtol: float = LYAPUNOV_RTOL) -> np.ndarray:
    """Solve M = phi M phi^T + q for symmetric M.

    Uses the vectorized linear solve (I - phi (x) phi) vec(M) = vec(q), then
    symmetrizes.  Requires rho(phi) < 1 and symmetric q; the returned M
    satisfies ||M - (phi M phi^T + q)||_F <= rtol * (1 + ||M||_F).
    """
    phi = _as_square(phi, "phi")
    q = _as_square(q, "q")
    if phi.shape != q.shape:
        raise DimensionError(f"phi {phi.shape} and q {q.shape} differ")
    if not np.allclose(q, q.T, rtol=0.0, atol=1e-12 * (1.0 + np.abs(q).max())):
        raise InputError("q must be symmetric")
    rho = spectral_radius(phi)
    if rho >= 1.0:
        raise DivergenceError(f"rho(phi) = {rho:.6f} >= 1, no steady state")
    n = phi.shape[0]
    lhs = np.eye(n * n) - np.kron(phi, phi)
    m = np.linalg.solve(lhs, q.reshape(-1)).reshape(n, n)
    m = 0.5 * (m + m.T)
    resid = frobenius(m - (phi @ m @ phi.T + q))
    if resid > rtol * (1.0 + frobenius(m)):
        raise ConvergenceError("Lyapunov residual above tolerance", resid)
    return m


def solve_dare_estimator(a, c, process_cov, meas_cov,
                         tol: float = DARE_RESIDUAL_TOL,
                         max_iter: int = DARE_MAX_ITER) -> np.ndarray:
    """Steady-state one-step-prediction covariance P of the Kalman filter.

    Fixed point of  P = A (P - P C^T (C P C^T + R)^-1 C P) A^T + Q  with
    Q = process_cov, R = meas_cov, iterated from P0 = process_cov until the
    Frobenius residual drops below ``tol`` (absolute) or ``max_iter`` is hit.
    """
    a = _as_square(a, "a")
    c = np.asarray(c, dtype=float)
    q = _as_square(process_cov, "process_cov")
    r = _as_square(meas_cov, "meas_cov")
    if c.shape != (r.shape[0], a.shape[0]):
        raise DimensionError(f"c has shape {c.shape}, expected ({r.shape[0]}, {a.shape[0]})")
    p = q.copy()
    resid = np.inf
    for _ in range(max_iter):
        innov = c @ p @ c.T + r
        gain = np.linalg.solve(innov.T, (p @ c.T).T).T
        p_next = a @ (p - gain @ c @ p) @ a.T + q
        p_next = 0.5 * (p_next + p_next.T)
        resid = frobenius(p_next - p)
        p = p_next
        if resid < tol:
            return p
    raise ConvergenceError("estimator DARE did not converge", resid)


def solve_dare_controller(a, b, q, r,
                          tol: float = DARE_RESIDUAL_TOL,
                          max_iter: int = DARE_MAX_ITER) -> np.ndarray:
    """Steady-state LQR cost matrix S.

    Fixed point of  S = A^T S A - A^T S B (B^T S B + R)^-1 B^T S A + Q,
    iterated from S0 = Q.
    """
    a = _as_square(a, "a")
    b = np.asarray(b, dtype=float)
    if b.ndim == 1:
        b = b[:, None]
    q = _as_square(q, "q")
    r = _as_square(r, "r")
    if b.shape[0] != a.shape[0]:
        raise DimensionError(f"b has {b.shape[0]} rows, expected {a.shape[0]}")
    s = q.copy()
    resid = np.inf
    for _ in range(max_iter):
        bsb = b.T @ s @ b + r
        gain = np.linalg.solve(bsb, b.T @ s @ a)
        s_next = a.T @ s @ a - a.T @ s @ b @ gain + q
        s_next = 0.5 * (s_next + s_next.T)
        resid = frobenius(s_next - s)
        s = s_next
        if resid < tol:
            return s
    raise ConvergenceError("controller DARE did not converge", resid)


@dataclass
class EigenResult:
    """Eigendecomposition with unit-Euclidean-norm eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvector_matrix: np.ndarray
    condition_number: float
    conditioning_warning: bool = False


def eigen_decompose(m, rtol: float = EIGEN_RECONSTRUCTION_RTOL,
                    cond_limit: float = 1e12) -> EigenResult:
    """Diagonalize m = V D V^-1 with unit-norm columns of V.

    A near-defective matrix (eigenvector condition number above
    ``cond_limit``, or reconstruction error above ``rtol * ||m||``) is not an
    error; the result carries ``conditioning_warning=True`` instead.
    """
    m = _as_square(m)
    w, v = np.linalg.eig(m)
    v = v / np.linalg.norm(v, axis=0, keepdims=True)
    cond = float(np.linalg.cond(v))
    warn = cond > cond_limit
    if not warn:
        recon = v @ np.diag(w) @ np.linalg.inv(v)
        scale = max(np.linalg.norm(m), 1e-300)
        warn = np.linalg.norm(recon - m) > rtol * scale
    return EigenResult(eigenvalues=w, eigenvector_matrix=v,
                       condition_number=cond, conditioning_warning=warn)


def singular_value_extremes(m) -> tuple[float, float]:
    """(largest, smallest) singular value of a rectangular matrix.

    Accepts complex input (eigenvector matrices of real nonsymmetric
    matrices are generally complex)."""
    m = np.asarray(m)
    if not np.iscomplexobj(m):
        m = m.astype(float)
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got ndim {m.ndim}")
    sv = np.linalg.svd(m, compute_uv=False)
    return float(sv[0]), float(sv[-1])
