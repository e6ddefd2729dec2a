"""Solving the LMI: verified feasibility at a fixed performance level, and
minimization of the level by bisection over verified-sound solves.

Every accepted solution is re-substituted numerically into the block matrix;
a certificate is issued only when the resubstituted maximum eigenvalue is
negative and every Z_i is positive definite, independent of what the SDP
solver claims.  (Interior-point solvers routinely report 'optimal' points
here that violate the inequality by 1e-2 when pushed toward the feasibility
boundary, so solver trust alone is not enough.)
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .problem import LmiProblem, block_matrix, build_lmi

EPS_MARGIN = 1e-9        # strict inequalities relaxed to +- eps I
SOLVER_ORDER = ("CLARABEL", "SCS", "CVXOPT")
SOLVER_OPTIONS = {"SCS": {"max_iters": 4000}}
BISECT_REL_TOL = 1e-2


class SolverFailure(RuntimeError):
    """No solver produced a verifiable solution."""


@dataclass
class Certificate:
    feasible: bool
    beta: float | None
    hbar: int
    variant: str
    performance_bound: float | None
    solver: str | None
    residual_eig_max: float | None
    z_min_eig: float | None = None
    variables: dict = field(default_factory=dict, repr=False)

    def to_doc(self) -> dict:
        return {
            "feasible": self.feasible,
            "beta": self.beta,
            "hbar": self.hbar,
            "variant": self.variant,
            "performance_bound": self.performance_bound,
            "solver": self.solver,
            "residual_eig_max": self.residual_eig_max,
        }


def _variables(prob: LmiProblem):
    """Decision variables; the delay blocks Z2/W4 exist only for hbar > 0."""
    n2, nd, nq = prob.n2, prob.nd, prob.nq
    vs = {
        "z1": cp.Variable((n2, n2), symmetric=True),
        "z3": cp.Variable((nd, nd), symmetric=True),
        "w1": cp.Variable((nd, n2)),
        "w2": cp.Variable((nd, nd)),
        "w3": cp.Variable((nd, nq)),
        "w5": cp.Variable((n2, n2)),
    }
    if prob.hbar > 0:
        vs["z2"] = cp.Variable((nd, nd), symmetric=True)
        vs["w4"] = cp.Variable((nd, nd))
    return vs


def _block_args(prob: LmiProblem, vals: dict):
    """Positional (z1..w5) arguments, filling the dropped hbar==0 blocks."""
    filler = np.zeros((prob.nd, prob.nd))
    return (vals["z1"], vals.get("z2", filler), vals["z3"], vals["w1"],
            vals["w2"], vals["w3"], vals.get("w4", filler), vals["w5"])


def _solve_at(prob: LmiProblem, beta: float, eps: float = 1e-6):
    """Feasibility solve at fixed beta; returns (vars dict | None, solver name)."""
    vs = _variables(prob)
    m = block_matrix(prob, beta, *_block_args(prob, vs), bmat=cp.bmat)
    dim = m.shape[0]
    margin = max(eps, EPS_MARGIN)
    cons = [m << -margin * np.eye(dim),
            vs["z1"] >> margin * np.eye(prob.n2),
            vs["z3"] >> margin * np.eye(prob.nd)]
    if "z2" in vs:
        cons.append(vs["z2"] >> margin * np.eye(prob.nd))
    problem = cp.Problem(cp.Minimize(0), cons)
    for solver in SOLVER_ORDER:
        if solver not in cp.installed_solvers():
            continue
        try:
            with warnings.catch_warnings():
                # inaccurate-solution warnings are expected near the
                # feasibility boundary; resubstitution is the arbiter
                warnings.simplefilter("ignore")
                problem.solve(solver=solver, **SOLVER_OPTIONS.get(solver, {}))
        except (cp.SolverError, Exception):
            continue
        if all(vs[k].value is not None for k in vs):
            vals = {k: np.asarray(v.value) for k, v in vs.items()}
            return vals, solver
    return None, None


def verify(prob: LmiProblem, beta: float, vals: dict) -> tuple[float, float]:
    """Resubstitute a candidate point: (max eigenvalue of the block matrix,
    smallest eigenvalue across the Z blocks)."""
    m = block_matrix(prob, beta, *_block_args(prob, vals))
    lam = float(np.linalg.eigvalsh(m).max())
    z_min = float(min(np.linalg.eigvalsh(vals[k]).min()
                      for k in ("z1", "z2", "z3") if k in vals))
    return lam, z_min


def _certificate(prob: LmiProblem, beta: float, vals: dict | None,
                 solver: str | None) -> Certificate:
    if vals is None:
        return Certificate(feasible=False, beta=None, hbar=prob.hbar,
                           variant=prob.variant, performance_bound=None,
                           solver=solver, residual_eig_max=None)
    lam, z_min = verify(prob, beta, vals)
    sound = lam < 0.0 and z_min > 0.0
    if not sound:
        return Certificate(feasible=False, beta=None, hbar=prob.hbar,
                           variant=prob.variant, performance_bound=None,
                           solver=solver, residual_eig_max=lam, z_min_eig=z_min)
    return Certificate(feasible=True, beta=float(beta), hbar=prob.hbar,
                       variant=prob.variant,
                       performance_bound=float(beta) * prob.noise_power,
                       solver=solver, residual_eig_max=lam, z_min_eig=z_min,
                       variables=vals)


def certify_at(doc_or_prob, hbar: int | None = None,
               variant: str = "corollary2", beta: float = 1.0) -> Certificate:
    """Verified feasibility check of the LMI at a fixed performance level."""
    prob = (doc_or_prob if isinstance(doc_or_prob, LmiProblem)
            else build_lmi(doc_or_prob, hbar, variant))
    vals, solver = _solve_at(prob, beta)
    return _certificate(prob, beta, vals, solver)


def certify(doc_or_prob, hbar: int | None = None,
            variant: str = "corollary2", beta_max: float = 1e6) -> Certificate:
    """Smallest verifiable performance level, by bisection.

    Direct minimization of beta pushes interior-point solvers onto the
    feasibility boundary where they return unverifiable points, so the level
    is minimized by bisection over fixed-beta solves, accepting only points
    that pass the resubstitution check."""
    prob = (doc_or_prob if isinstance(doc_or_prob, LmiProblem)
            else build_lmi(doc_or_prob, hbar, variant))
    hi, hi_cert = None, None
    level = 1.0
    while level <= beta_max:
        cert = certify_at(prob, beta=level)
        if cert.feasible:
            hi, hi_cert = level, cert
            break
        level *= 8.0
    if hi is None:
        return Certificate(feasible=False, beta=None, hbar=prob.hbar,
                           variant=prob.variant, performance_bound=None,
                           solver=None, residual_eig_max=None)
    lo = hi / 8.0 if hi > 1.0 else 0.0
    while hi - lo > BISECT_REL_TOL * hi:
        mid = 0.5 * (lo + hi)
        cert = certify_at(prob, beta=mid)
        if cert.feasible:
            hi, hi_cert = mid, cert
        else:
            lo = mid
    return hi_cert


def sweep_hbar(doc: dict, variant: str = "corollary2",
               hbar_max: int = 8) -> list[Certificate]:
    """certify() for hbar = 0..hbar_max; per-point failures are recorded as
    infeasible entries and the sweep continues."""
    out = []
    for h in range(hbar_max + 1):
        try:
            out.append(certify(doc, h, variant))
        except Exception:
            out.append(Certificate(feasible=False, beta=None, hbar=h,
                                   variant=variant, performance_bound=None,
                                   solver=None, residual_eig_max=None))
    return out


def write_certificate(path, cert: Certificate) -> None:
    with open(path, "w") as fh:
        json.dump(cert.to_doc(), fh, indent=1)
        fh.write("\n")
