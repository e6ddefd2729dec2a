"""Assembly of the delay-dependent stability/performance LMI.

The certified system is the compensated estimation loop

    zbar(k+1) = A0 zbar(k) + A1 E zbar(k-h(k)) + Gamma0 psibar(k),

with delays h(k) <= hbar.  Feasibility of the block inequality built here
certifies asymptotic stability and the bound

    lim avg ||e(k)||^2 <= beta (tr Sigma_n + tr Sigma_v)

for the full estimation error (theorem4 variant) or its output projection
C e(k) (corollary2 variant, third column block right-multiplied by C^T).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VARIANTS = ("theorem4", "corollary2")

DOC_KEYS = ("a0", "a1", "gamma0", "e_selector", "e_complement", "c",
            "sigma_n", "sigma_v")


class SchemaError(ValueError):
    """Exchange document is missing keys or has inconsistent dimensions."""


@dataclass(frozen=True)
class LmiProblem:
    a0: np.ndarray           # 2m x 2m
    a1: np.ndarray           # 2m x m
    gamma0: np.ndarray       # 2m x q
    e_selector: np.ndarray   # m x 2m
    e_complement: np.ndarray # m x 2m
    c: np.ndarray            # p x m
    sigma_n: np.ndarray
    sigma_v: np.ndarray
    hbar: int
    variant: str

    @property
    def n2(self) -> int:
        return self.a0.shape[0]

    @property
    def nd(self) -> int:
        return self.e_selector.shape[0]

    @property
    def nq(self) -> int:
        return self.gamma0.shape[1]

    @property
    def e_dim(self) -> int:
        return self.c.shape[0] if self.variant == "corollary2" else self.nd

    @property
    def error_map(self) -> np.ndarray:
        """Right factor applied to the error column block (C^T or identity)."""
        return self.c.T if self.variant == "corollary2" else np.eye(self.nd)

    @property
    def noise_power(self) -> float:
        return float(np.trace(self.sigma_n) + np.trace(self.sigma_v))


def build_lmi(doc: dict, hbar: int, variant: str = "corollary2") -> LmiProblem:
    """Validate an exchange document and freeze it into an LmiProblem."""
    if variant not in VARIANTS:
        raise SchemaError(f"unknown variant {variant!r}")
    missing = [k for k in DOC_KEYS if k not in doc]
    if missing:
        raise SchemaError(f"exchange document missing keys: {missing}")
    if hbar < 0:
        raise SchemaError("hbar must be >= 0")
    mats = {k: np.atleast_2d(np.asarray(doc[k], dtype=float)) for k in DOC_KEYS}
    n2 = mats["a0"].shape[0]
    if mats["a0"].shape != (n2, n2):
        raise SchemaError("a0 must be square")
    nd = mats["e_selector"].shape[0]
    if n2 != 2 * nd:
        raise SchemaError(f"a0 is {n2}x{n2} but e_selector selects {nd} states")
    checks = {
        "a1": (n2, nd),
        "e_selector": (nd, n2),
        "e_complement": (nd, n2),
    }
    for key, shape in checks.items():
        if mats[key].shape != shape:
            raise SchemaError(f"{key} has shape {mats[key].shape}, expected {shape}")
    if mats["gamma0"].shape[0] != n2:
        raise SchemaError("gamma0 row count inconsistent with a0")
    if mats["c"].shape[1] != nd:
        raise SchemaError("c column count inconsistent with e_selector")
    nq = mats["gamma0"].shape[1]
    if mats["sigma_n"].shape[0] + mats["sigma_v"].shape[0] != nq:
        raise SchemaError("sigma_n/sigma_v dimensions inconsistent with gamma0")
    return LmiProblem(hbar=int(hbar), variant=variant, **mats)


def block_matrix(prob: LmiProblem, beta, z1, z2, z3, w1, w2, w3, w4, w5,
                 bmat=np.block):
    """The full LMI block matrix [Theta, Omega; Omega^T, Upsilon].

    Works both numerically (numpy values, bmat=np.block) and symbolically
    (cvxpy variables, bmat=cvxpy.bmat).  For hbar == 0 the two delay-scaled
    row/column blocks degenerate to zero diagonals and are dropped.
    """
    a0, a1, g0 = prob.a0, prob.a1, prob.gamma0
    e, ec = prob.e_selector, prob.e_complement
    n2, nd, nq, h = prob.n2, prob.nd, prob.nq, prob.hbar
    emap = prob.error_map
    e_dim = prob.e_dim
    z = np.zeros

    th11 = w1.T @ e + e.T @ w1 - z1 + e.T @ z3 @ e
    th12 = e.T @ w2 - w1.T
    th13 = e.T @ w3
    theta = bmat([[th11, th12, th13],
                  [th12.T, -w2.T - w2 - z3, -w3],
                  [th13.T, -w3.T, -beta * np.eye(nq)]])

    err_cols = [(e - ec @ a0).T @ emap, (-(ec @ a1)).T @ emap, (-(ec @ g0)).T @ emap]
    w5_cols = [a0.T @ w5.T, a1.T @ w5.T, g0.T @ w5.T]
    if h > 0:
        omega = bmat([
            [h * w1.T, h * (a0 - np.eye(n2)).T @ e.T @ w4.T, err_cols[0], w5_cols[0]],
            [h * w2.T, h * a1.T @ e.T @ w4.T, err_cols[1], w5_cols[1]],
            [h * w3.T, h * g0.T @ e.T @ w4.T, err_cols[2], w5_cols[2]]])
        upsilon = bmat([
            [-h * z2, z((nd, nd)), z((nd, e_dim)), z((nd, n2))],
            [z((nd, nd)), h * (z2 - w4.T - w4), z((nd, e_dim)), z((nd, n2))],
            [z((e_dim, nd)), z((e_dim, nd)), -np.eye(e_dim), z((e_dim, n2))],
            [z((n2, nd)), z((n2, nd)), z((n2, e_dim)), z1 - w5.T - w5]])
    else:
        omega = bmat([[err_cols[0], w5_cols[0]],
                      [err_cols[1], w5_cols[1]],
                      [err_cols[2], w5_cols[2]]])
        upsilon = bmat([[-np.eye(e_dim), z((e_dim, n2))],
                        [z((n2, e_dim)), z1 - w5.T - w5]])
    return bmat([[theta, omega], [omega.T, upsilon]])


def total_dimension(prob: LmiProblem) -> int:
    core = prob.n2 + prob.nd + prob.nq + prob.e_dim + prob.n2
    return core + (2 * prob.nd if prob.hbar > 0 else 0)
