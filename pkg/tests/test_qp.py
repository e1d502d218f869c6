"""Tests for constraint rows and the per-step QP solver."""

import numpy as np
import pytest

from _oracles import grid_search_qp
from sacbf.barrier import ClassKappaPower, make_circular_safety
from sacbf.dynamics import InputBox, make_unicycle
from sacbf.qp import (KKT_TOL, QpContractError, QpProblem, SacbfRow,
                      SetExitError, build_qp, hocbf_row, sacbf_row, solve_qp)


def _chain(lam=2.0):
    alpha = ClassKappaPower(lam, 1.0)
    return make_circular_safety((0.0, 0.0), 1.0, alphas=(alpha, alpha))


def _row(u_coeffs, rhs, relaxed=False, omega_coeff=0.0, chain_id="c"):
    return SacbfRow(u_coeffs=tuple(u_coeffs), omega_coeff=omega_coeff,
                    rhs=rhs, tag="safety", chain_id=chain_id, relaxed=relaxed)


def test_hocbf_row_hand_values():
    # At state (-3, 0, 0, 1) with lam = 2: psi_1 = 10, Lf = -10,
    # Lg = (0, -6), so the row reads 0 u1 - 6 u2 >= 10 - 20 = -10.
    model = make_unicycle()
    row = hocbf_row(_chain(), model, np.array([-3.0, 0.0, 0.0, 1.0]), 0.0)
    assert np.allclose(row.u_coeffs, (0.0, -6.0))
    assert np.isclose(row.rhs, -10.0)
    assert row.omega_coeff == 0.0


def test_sacbf_row_hand_values():
    # Same state; with psi = 10, L = 10 exp(-2 dt), the unrelaxed right-hand
    # side is (L - psi)/dt + m dt/2 - Lf - dpsi_t.
    model = make_unicycle()
    state = np.array([-3.0, 0.0, 0.0, 1.0])
    dt, m_bar = 0.1, 30.0
    row = sacbf_row(_chain(), model, state, 0.0, dt, m_bar)
    envelope = 10.0 * np.exp(-2.0 * dt)
    expected = (envelope - 10.0) / dt + 0.5 * m_bar * dt + 10.0
    assert np.allclose(row.u_coeffs, (0.0, -6.0))
    assert np.isclose(row.rhs, expected)
    # Relaxed variant moves the envelope onto the omega coefficient.
    relaxed = sacbf_row(_chain(), model, state, 0.0, dt, m_bar, relaxed=True)
    assert np.isclose(relaxed.omega_coeff, -envelope / dt)
    assert np.isclose(relaxed.rhs, -10.0 / dt + 0.5 * m_bar * dt + 10.0)
    # Relaxed rhs at omega = 1 coincides with the unrelaxed row.
    u = np.array([1.0, -2.0])
    assert np.isclose(relaxed.evaluate(u, 1.0), row.evaluate(u))


def test_row_rejects_bad_arguments():
    model = make_unicycle()
    state = np.array([-3.0, 0.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        sacbf_row(_chain(), model, state, 0.0, -0.1, 1.0)
    with pytest.raises(ValueError):
        sacbf_row(_chain(), model, state, 0.0, 0.1, -1.0)
    # Inside the obstacle the top level is negative: strict mode raises.
    inside = np.array([0.5, 0.0, 0.0, 1.0])
    with pytest.raises(SetExitError):
        hocbf_row(_chain(), model, inside, 0.0)
    row = hocbf_row(_chain(), model, inside, 0.0, strict_membership=False)
    assert row.set_exit


def test_limit_consistency_mbar_zero():
    """With m_bar = 0 the sampling-aware row approaches the baseline row as
    the sampling period vanishes (eta = 1)."""
    model = make_unicycle()
    state = np.array([-2.0, 1.0, 0.3, 1.5])
    base = hocbf_row(_chain(), model, state, 0.0)
    gaps = []
    for dt in (1e-2, 1e-4, 1e-6):
        row = sacbf_row(_chain(), model, state, 0.0, dt, 0.0)
        assert np.allclose(row.u_coeffs, base.u_coeffs)
        gaps.append(abs(row.rhs - base.rhs))
    assert gaps[-1] <= 1e-5
    assert gaps[0] > gaps[-1]


def test_build_qp_shapes_and_tags():
    box = InputBox((-1.0, -1.0), (1.0, 1.0))
    rows = [_row((1.0, 0.0), 0.2),
            _row((0.0, 1.0), -0.5, relaxed=True, omega_coeff=-2.0,
                 chain_id="r")]
    problem = build_qp(rows, box, weights={"c": 1.0, "r": 5.0})
    assert problem.decision_dim == 3
    assert problem.input_dim == 2
    # 2 barrier rows + 4 input-box rows + 2 omega-box rows.
    assert problem.ineq_matrix.shape == (8, 3)
    assert problem.row_tags.count("input_bound") == 4
    assert problem.row_tags.count("omega_bound") == 2
    assert problem.omega_chain_ids == ("r",)
    assert np.isclose(problem.hessian[2, 2], 10.0)
    with pytest.raises(ValueError):
        build_qp(rows, box, weights={"c": 1.0, "r": 0.0})


def test_solve_simple_active_constraint():
    # min u^2 subject to u >= 0.3: optimum at the boundary.
    box = InputBox((-1.0,), (1.0,))
    problem = build_qp([_row((1.0,), 0.3)], box)
    sol = solve_qp(problem)
    assert sol.status == "optimal"
    assert np.isclose(sol.control(1)[0], 0.3, atol=1e-7)
    assert max(sol.kkt_residuals) <= KKT_TOL


def test_relaxation_buys_feasibility():
    # The hard row 1.0 * u >= 2 is outside the box; with a relaxed row
    # u - 2 omega >= 0 the solver trades omega below 1 for feasibility.
    box = InputBox((-1.0,), (1.0,))
    hard = build_qp([_row((1.0,), 2.0)], box)
    assert solve_qp(hard).status == "infeasible"
    relaxed = build_qp([_row((1.0,), 0.0, relaxed=True, omega_coeff=-2.0)],
                       box)
    sol = solve_qp(relaxed)
    assert sol.status == "optimal"
    u, omega = sol.z_star
    assert omega < 1.0
    assert u - 2.0 * omega >= -1e-9


def test_infeasibility_certificate():
    box = InputBox((-1.0,), (1.0,))
    problem = build_qp([_row((1.0,), 5.0)], box)
    sol = solve_qp(problem)
    assert sol.status == "infeasible"
    assert sol.infeasibility_certificate > 0.0
    status, _ = grid_search_qp(problem)
    assert status == "infeasible"


def test_solver_matches_grid_search_small():
    rng = np.random.default_rng(12)
    for _ in range(10):
        box = InputBox((-1.0, -1.0), (1.0, 1.0))
        z0 = rng.uniform(-0.9, 0.9, 2)
        rows = []
        for j in range(3):
            coeffs = rng.normal(0.0, 1.0, 2)
            margin = rng.uniform(0.1, 0.8)
            rows.append(_row(coeffs, float(coeffs @ z0) - margin,
                             chain_id=f"c{j}"))
        problem = build_qp(rows, box)
        sol = solve_qp(problem)
        assert sol.status == "optimal"
        status, grid_obj = grid_search_qp(problem)
        assert status == "optimal"
        assert abs(sol.objective - grid_obj) <= 1e-4


def test_contract_rejects_bad_hessian():
    bad = QpProblem(hessian=np.array([[-1.0]]), linear_cost=np.zeros(1),
                    ineq_matrix=np.eye(1), ineq_rhs=np.array([-1.0]),
                    row_tags=("input_bound",), decision_dim=1, input_dim=1)
    with pytest.raises(QpContractError):
        solve_qp(bad)
    asym = QpProblem(hessian=np.array([[1.0, 0.5], [0.0, 1.0]]),
                     linear_cost=np.zeros(2), ineq_matrix=np.eye(2),
                     ineq_rhs=-np.ones(2), row_tags=("a", "b"),
                     decision_dim=2, input_dim=2)
    with pytest.raises(QpContractError):
        solve_qp(asym)
