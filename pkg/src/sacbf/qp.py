"""Constraint rows and the per-step quadratic program.

Rows are linear inequalities ``u_coeffs @ u + omega_coeff * omega >= rhs``
in the control and (optionally) a per-constraint relaxation multiplier.
The QP minimizes ||u||^2 plus quadratic penalties pulling each multiplier
to 1, subject to the rows, the input box, and omega in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from cvxopt import matrix as _cvx_matrix
from cvxopt import solvers as _cvx_solvers
from scipy.optimize import linprog

from . import barrier as bar
from .bounds import comparison_lower_bound
from .dynamics import InputBox, SystemModel

Array = np.ndarray

_cvx_solvers.options.update({
    "show_progress": False,
    "abstol": 1e-12,
    "reltol": 1e-12,
    "feastol": 1e-10,
    "maxiters": 200,
})

KKT_TOL = 1e-7
SLACK_TOL = 1e-8
SET_EXIT_TOL = 1e-9


class SetExitError(ValueError):
    """Barrier level negative at a sampling instant; the row's theory no
    longer applies."""


class QpContractError(ValueError):
    """Problem violates the solver contract (e.g. non-PSD Hessian)."""


class QpMaxIterError(RuntimeError):
    """Solver stopped at its iteration limit without a verdict."""


@dataclass(frozen=True)
class SacbfRow:
    """One linear inequality: u_coeffs @ u + omega_coeff * omega >= rhs."""

    u_coeffs: tuple
    omega_coeff: float
    rhs: float
    tag: str  # safety | reach | input_bound
    chain_id: str
    relaxed: bool = False
    set_exit: bool = False

    def __post_init__(self):
        object.__setattr__(self, "u_coeffs",
                           tuple(float(c) for c in self.u_coeffs))

    def evaluate(self, u: Array, omega: float = 1.0) -> float:
        """Left-hand side minus rhs (nonnegative when satisfied)."""
        return float(np.asarray(self.u_coeffs) @ np.asarray(u)
                     + self.omega_coeff * omega - self.rhs)


def sacbf_row(chain: bar.BarrierChain, model: SystemModel, state: Array,
              t_k: float, dt: float, m_bar: float, relaxed: bool = False,
              chain_id: Optional[str] = None,
              strict_membership: bool = True) -> SacbfRow:
    """Sampling-aware constraint row for one chain at one instant.

    Unrelaxed: Lg u >= (L - psi)/dt + m_bar dt / 2 - Lf - dpsi_t.
    Relaxed:   Lg u - (L/dt) omega >= -psi/dt + m_bar dt / 2 - Lf - dpsi_t,
    which multiplies the decay envelope by the relaxation variable.
    """
    if dt <= 0.0:
        raise ValueError("sampling period must be positive")
    if m_bar < 0.0:
        raise ValueError("second-derivative bound must be nonnegative")
    psi = bar.top_value(chain, model, state, t_k)
    set_exit = psi < -SET_EXIT_TOL
    if set_exit and strict_membership:
        raise SetExitError(
            f"psi_(m-1) = {psi} < 0 at t={t_k}: state left the barrier set"
        )
    alpha = chain.top_alpha
    envelope = comparison_lower_bound(max(psi, 0.0), alpha.lam, alpha.eta, dt)
    lf, lg, dpsi_t = bar.top_lie_derivatives(chain, model, state, t_k)
    if relaxed:
        omega_coeff = -envelope / dt
        rhs = -psi / dt + 0.5 * m_bar * dt - lf - dpsi_t
    else:
        omega_coeff = 0.0
        rhs = (envelope - psi) / dt + 0.5 * m_bar * dt - lf - dpsi_t
    return SacbfRow(u_coeffs=tuple(lg), omega_coeff=omega_coeff, rhs=rhs,
                    tag=chain.tag, chain_id=chain_id or chain.name,
                    relaxed=relaxed, set_exit=set_exit)


def hocbf_row(chain: bar.BarrierChain, model: SystemModel, state: Array,
              t: float, chain_id: Optional[str] = None,
              strict_membership: bool = True) -> SacbfRow:
    """Continuous-time baseline row: dpsi_{m-1}/dt + alpha_m(psi_{m-1}) >= 0."""
    psi = bar.top_value(chain, model, state, t)
    set_exit = psi < -SET_EXIT_TOL
    if set_exit and strict_membership:
        raise SetExitError(
            f"psi_(m-1) = {psi} < 0 at t={t}: state left the barrier set"
        )
    alpha = chain.top_alpha
    lf, lg, dpsi_t = bar.top_lie_derivatives(chain, model, state, t)
    rhs = -lf - dpsi_t - alpha(psi)
    return SacbfRow(u_coeffs=tuple(lg), omega_coeff=0.0, rhs=rhs,
                    tag=chain.tag, chain_id=chain_id or chain.name,
                    relaxed=False, set_exit=set_exit)


@dataclass(frozen=True)
class QpProblem:
    """Quadratic cost over z = (u, omega_1..omega_K) with inequality rows.

    ``ineq_matrix @ z >= ineq_rhs`` collects barrier rows, input-box rows,
    and the [0, 1] boxes of the relaxation variables.
    """

    hessian: Array
    linear_cost: Array
    ineq_matrix: Array
    ineq_rhs: Array
    row_tags: tuple
    decision_dim: int
    input_dim: int
    barrier_rows: tuple = ()
    omega_chain_ids: tuple = ()


@dataclass(frozen=True)
class QpSolution:
    status: str  # "optimal" | "infeasible"
    z_star: Optional[tuple]
    kkt_residuals: tuple  # (stationarity, primal, complementarity)
    objective: Optional[float] = None
    infeasibility_certificate: Optional[float] = None

    def control(self, input_dim: int) -> Array:
        return np.asarray(self.z_star[:input_dim])

    def omegas(self, input_dim: int) -> Array:
        return np.asarray(self.z_star[input_dim:])


def build_qp(rows: Sequence[SacbfRow], input_box: InputBox,
             weights=None) -> QpProblem:
    """Assemble cost u.u + sum_k q_k (omega_k - 1)^2 with all box rows.

    ``weights`` maps chain_id -> q_k for relaxed rows (a scalar applies to
    all of them; default 1).  Every relaxed row gets its own omega bounded
    in [0, 1].
    """
    q = input_box.dim
    relaxed_rows = [r for r in rows if r.relaxed]
    n_omega = len(relaxed_rows)
    dim = q + n_omega

    def weight_for(row):
        if weights is None:
            return 1.0
        if np.isscalar(weights):
            return float(weights)
        return float(weights[row.chain_id])

    omega_weights = [weight_for(r) for r in relaxed_rows]
    if any(w <= 0 for w in omega_weights):
        raise ValueError("relaxation weights must be positive")

    hessian = np.zeros((dim, dim))
    hessian[:q, :q] = 2.0 * np.eye(q)
    linear = np.zeros(dim)
    for k, w in enumerate(omega_weights):
        hessian[q + k, q + k] = 2.0 * w
        linear[q + k] = -2.0 * w

    a_rows, b_vals, tags = [], [], []
    omega_index = {id(r): q + k for k, r in enumerate(relaxed_rows)}
    for row in rows:
        vec = np.zeros(dim)
        vec[:q] = row.u_coeffs
        if row.relaxed:
            vec[omega_index[id(row)]] = row.omega_coeff
        a_rows.append(vec)
        b_vals.append(row.rhs)
        tags.append(row.tag)
    lo, hi = input_box.lower_array(), input_box.upper_array()
    for j in range(q):
        vec = np.zeros(dim)
        vec[j] = 1.0
        a_rows.append(vec)
        b_vals.append(lo[j])
        tags.append("input_bound")
        vec = np.zeros(dim)
        vec[j] = -1.0
        a_rows.append(vec)
        b_vals.append(-hi[j])
        tags.append("input_bound")
    for k in range(n_omega):
        vec = np.zeros(dim)
        vec[q + k] = 1.0
        a_rows.append(vec)
        b_vals.append(0.0)
        tags.append("omega_bound")
        vec = np.zeros(dim)
        vec[q + k] = -1.0
        a_rows.append(vec)
        b_vals.append(-1.0)
        tags.append("omega_bound")
    return QpProblem(
        hessian=hessian,
        linear_cost=linear,
        ineq_matrix=np.array(a_rows),
        ineq_rhs=np.array(b_vals),
        row_tags=tuple(tags),
        decision_dim=dim,
        input_dim=q,
        barrier_rows=tuple(rows),
        omega_chain_ids=tuple(r.chain_id for r in relaxed_rows),
    )


def _kkt_residuals(problem: QpProblem, z: Array, mu: Array):
    grad = problem.hessian @ z + problem.linear_cost - problem.ineq_matrix.T @ mu
    slack = problem.ineq_matrix @ z - problem.ineq_rhs
    stationarity = float(np.max(np.abs(grad))) if grad.size else 0.0
    primal = float(max(0.0, np.max(-slack))) if slack.size else 0.0
    comp = float(np.max(np.abs(mu * slack))) if slack.size else 0.0
    return stationarity, primal, comp


def _polish(problem: QpProblem, z: Array, mu: Array, slack_tol: float = 1e-9):
    """Re-solve on the active set identified by the raw solution."""
    slack = problem.ineq_matrix @ z - problem.ineq_rhs
    active = np.flatnonzero((mu > slack_tol) | (slack < slack_tol))
    dim = problem.decision_dim
    n_act = active.size
    a_act = problem.ineq_matrix[active]
    kkt = np.zeros((dim + n_act, dim + n_act))
    kkt[:dim, :dim] = problem.hessian
    kkt[:dim, dim:] = -a_act.T
    kkt[dim:, :dim] = a_act
    rhs = np.concatenate([-problem.linear_cost, problem.ineq_rhs[active]])
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    z_new = sol[:dim]
    mu_act = sol[dim:]
    if np.any(mu_act < -1e-8):
        return None
    slack_new = problem.ineq_matrix @ z_new - problem.ineq_rhs
    if np.min(slack_new, initial=0.0) < -1e-9:
        return None
    mu_new = np.zeros(problem.ineq_rhs.size)
    mu_new[active] = np.maximum(mu_act, 0.0)
    return z_new, mu_new


def _enumerate_active_sets(problem: QpProblem):
    """Exhaustive active-set search; exact fallback for the tiny step QPs.

    The Hessian is positive definite, so any KKT point is the unique
    optimum; the first working set that produces one settles the problem.
    """
    from itertools import combinations

    dim = problem.decision_dim
    n_rows = problem.ineq_rhs.size
    for k in range(dim + 1):
        for active in combinations(range(n_rows), k):
            active = np.array(active, dtype=int)
            a_act = problem.ineq_matrix[active]
            kkt = np.zeros((dim + k, dim + k))
            kkt[:dim, :dim] = problem.hessian
            kkt[:dim, dim:] = -a_act.T
            kkt[dim:, :dim] = a_act
            rhs = np.concatenate([-problem.linear_cost,
                                  problem.ineq_rhs[active]])
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
            z = sol[:dim]
            mu_act = sol[dim:]
            if np.any(mu_act < -1e-9):
                continue
            mu = np.zeros(n_rows)
            mu[active] = np.maximum(mu_act, 0.0)
            resid = _kkt_residuals(problem, z, mu)
            if max(resid) <= KKT_TOL:
                return z, mu, resid
    return None


def _phase_one_gap(problem: QpProblem) -> float:
    """Largest uniform slack s with A z >= b + s (capped at 1); negative
    means infeasible and its magnitude is the certificate residual."""
    dim = problem.decision_dim
    n_rows = problem.ineq_rhs.size
    c = np.zeros(dim + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-problem.ineq_matrix, np.ones((n_rows, 1))])
    res = linprog(c, A_ub=a_ub, b_ub=-problem.ineq_rhs,
                  bounds=[(None, None)] * dim + [(None, 1.0)],
                  method="highs")
    if not res.success:
        raise QpMaxIterError(f"phase-1 feasibility LP failed: {res.message}")
    return float(res.x[-1])


def solve_qp(problem: QpProblem) -> QpSolution:
    """Solve the step QP; interior-point solve followed by an exact active-set
    polish so optimal solutions meet the KKT residual contract."""
    hess = np.asarray(problem.hessian, dtype=float)
    if not np.allclose(hess, hess.T, atol=1e-10):
        raise QpContractError("Hessian must be symmetric")
    eigs = np.linalg.eigvalsh(hess)
    if eigs.min() < -1e-10:
        raise QpContractError("Hessian must be positive semidefinite")

    p = _cvx_matrix(hess)
    q = _cvx_matrix(np.asarray(problem.linear_cost, dtype=float))
    g = _cvx_matrix(-np.asarray(problem.ineq_matrix, dtype=float))
    h = _cvx_matrix(-np.asarray(problem.ineq_rhs, dtype=float))

    option_sets = (
        {},  # module defaults (tight)
        {"abstol": 1e-9, "reltol": 1e-9, "feastol": 1e-8},
    )
    for extra in option_sets:
        opts = dict(_cvx_solvers.options)
        opts.update(extra)
        try:
            raw = _cvx_solvers.qp(p, q, g, h, options=opts)
        except (ValueError, ArithmeticError):
            continue
        if raw.get("x") is None:
            continue
        z = np.asarray(raw["x"]).ravel()
        mu = np.asarray(raw["z"]).ravel()
        for slack_tol in (1e-9, 1e-6, 1e-4):
            polished = _polish(problem, z, mu, slack_tol)
            if polished is None:
                continue
            z_p, mu_p = polished
            resid = _kkt_residuals(problem, z_p, mu_p)
            if max(resid) <= KKT_TOL:
                obj = float(0.5 * z_p @ hess @ z_p + problem.linear_cost @ z_p)
                return QpSolution(status="optimal", z_star=tuple(z_p),
                                  kkt_residuals=resid, objective=obj)
        resid = _kkt_residuals(problem, z, mu)
        if max(resid) <= KKT_TOL:
            obj = float(0.5 * z @ hess @ z + problem.linear_cost @ z)
            return QpSolution(status="optimal", z_star=tuple(z),
                              kkt_residuals=resid, objective=obj)
    # Interior point gave no usable answer: settle feasibility exactly.
    gap = _phase_one_gap(problem)
    if gap < -SLACK_TOL:
        return QpSolution(status="infeasible", z_star=None,
                          kkt_residuals=(np.inf, -gap, np.inf),
                          infeasibility_certificate=-gap)
    found = _enumerate_active_sets(problem)
    if found is not None:
        z, mu, resid = found
        hess = np.asarray(problem.hessian, dtype=float)
        obj = float(0.5 * z @ hess @ z + problem.linear_cost @ z)
        return QpSolution(status="optimal", z_star=tuple(z),
                          kkt_residuals=resid, objective=obj)
    raise QpMaxIterError(
        "QP is feasible but the interior-point solve did not converge"
    )
