"""Zero-order-hold closed-loop simulation with dense inter-sample audits.

Each step samples the state, assembles the controller's constraint rows,
solves the QP, holds the input over the interval while integrating the
continuous dynamics to high accuracy, and records barrier values on a
dense sub-grid so that between-sample behavior can be checked afterwards.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from . import barrier as bar
from . import qp as qpmod
from .bounds import comparison_lower_bound
from .dynamics import InputBox, SystemModel, make_unicycle
from .taylor import TaylorBoundEstimator, tube_radius

Array = np.ndarray

CONTROLLERS = ("hocbf", "sacbf", "r_sacbf")
INFEASIBILITY_POLICIES = ("hold_previous", "zero")
MEMBERSHIP_TOL = 1e-9


class ConfigError(ValueError):
    """Scenario configuration violates an invariant; message names the field."""


class InitialMembershipError(ValueError):
    """Initial state violates a barrier level, so the guarantee cannot start."""


class IntegrationError(RuntimeError):
    """The continuous-time integrator failed inside a sampling interval."""


@dataclass(frozen=True)
class ChainDecl:
    """Declaration of one barrier chain in a scenario."""

    kind: str  # "safety" | "reach"
    name: str
    center: tuple
    radius: float
    lams: tuple = (2.0, 2.0)
    etas: tuple = (1.0, 1.0)
    weight: float = 1.0
    eps0: Optional[float] = None
    t_start: Optional[float] = None
    t_reach: Optional[float] = None
    t_remain: Optional[float] = None
    squared: bool = True

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "lams", tuple(float(v) for v in self.lams))
        object.__setattr__(self, "etas", tuple(float(v) for v in self.etas))
        if self.kind not in ("safety", "reach"):
            raise ConfigError(f"chain {self.name!r}: unknown kind {self.kind!r}")
        if len(self.lams) != len(self.etas):
            raise ConfigError(f"chain {self.name!r}: lambda/eta length mismatch")
        if self.kind == "reach":
            for fld in ("eps0", "t_start", "t_reach"):
                if getattr(self, fld) is None:
                    raise ConfigError(f"chain {self.name!r}: missing {fld}")

    def build(self) -> bar.BarrierChain:
        m = len(self.lams)
        alphas = tuple(bar.ClassKappaPower(l, e)
                       for l, e in zip(self.lams, self.etas))
        if self.kind == "safety":
            return bar.make_circular_safety(self.center, self.radius,
                                            alphas=alphas, name=self.name,
                                            relative_degree=m)
        spec = bar.ReachSpec(center=self.center, eps0=self.eps0,
                             eps_d=self.radius, t_start=self.t_start,
                             t_reach=self.t_reach, t_remain=self.t_remain,
                             squared=self.squared)
        return bar.make_reach_remain(spec, alphas=alphas, name=self.name,
                                     relative_degree=m)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one closed-loop run."""

    state: tuple
    dt: float
    horizon: float
    controller: str
    chains: tuple
    u_lower: tuple
    u_upper: tuple
    model: str = "unicycle"
    nodes: int = 5
    safety_factor: float = 1.5
    seed: int = 0
    infeasibility: str = "hold_previous"
    audit_substep: Optional[float] = None
    integrator_tol: float = 1e-9
    u_rate: Optional[tuple] = (20.0, 20.0)

    def __post_init__(self):
        object.__setattr__(self, "state", tuple(float(v) for v in self.state))
        object.__setattr__(self, "u_lower", tuple(float(v) for v in self.u_lower))
        object.__setattr__(self, "u_upper", tuple(float(v) for v in self.u_upper))
        object.__setattr__(self, "chains", tuple(self.chains))
        if self.u_rate is not None:
            rate = np.atleast_1d(np.asarray(self.u_rate, dtype=float))
            if rate.size == 1:
                rate = np.repeat(rate, len(self.u_lower))
            object.__setattr__(self, "u_rate", tuple(float(r) for r in rate))

    def validate(self):
        if self.model != "unicycle":
            raise ConfigError(f"model: unknown model {self.model!r}")
        if self.dt <= 0:
            raise ConfigError("dt: must be positive")
        steps = self.horizon / self.dt
        if self.horizon <= 0 or abs(steps - round(steps)) > 1e-9:
            raise ConfigError("horizon: must be a positive multiple of dt")
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"controller: must be one of {CONTROLLERS}")
        if self.infeasibility not in INFEASIBILITY_POLICIES:
            raise ConfigError(
                f"infeasibility: must be one of {INFEASIBILITY_POLICIES}")
        if not 3 <= self.nodes <= 7:
            raise ConfigError("nodes: must lie in [3, 7]")
        if self.safety_factor < 1.0:
            raise ConfigError("safety_factor: must be >= 1")
        if self.audit_substep is not None and self.audit_substep <= 0:
            raise ConfigError("audit_substep: must be positive")
        if self.u_rate is not None:
            if len(self.u_rate) != len(self.u_lower):
                raise ConfigError("u_rate: length must match input bounds")
            if any(r <= 0 for r in self.u_rate):
                raise ConfigError("u_rate: must be positive when set")
        if len(self.u_lower) != len(self.u_upper):
            raise ConfigError("input bounds: lower/upper length mismatch")
        if any(lo > hi for lo, hi in zip(self.u_lower, self.u_upper)):
            raise ConfigError("input bounds: lower must not exceed upper")
        if not self.chains:
            raise ConfigError("chains: at least one barrier chain required")
        names = [c.name for c in self.chains]
        if len(set(names)) != len(names):
            raise ConfigError("chains: names must be unique")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def substep(self) -> float:
        return self.audit_substep if self.audit_substep is not None \
            else self.dt / 100.0

    def input_box(self) -> InputBox:
        return InputBox(self.u_lower, self.u_upper)

    def with_heading(self, heading: float) -> "ScenarioConfig":
        state = list(self.state)
        state[2] = float(heading)
        return replace(self, state=tuple(state))


@dataclass(frozen=True)
class ChainStepRecord:
    """Per-chain quantities sampled at one step."""

    chain: str
    psi_levels: tuple
    envelope: Optional[float]  # comparison bound over the step, None for hocbf
    m_bar: Optional[float]
    m_hat: Optional[float]
    correction: Optional[float]
    omega: Optional[float]
    slack: Optional[float]
    psi_dot: Optional[float]  # realized d(psi_top)/dt at t_k under applied u
    set_exit: bool = False


@dataclass
class StepRecord:
    t: float
    state: Array
    input: Array
    status: str  # "optimal" | "infeasible"
    chains: dict  # name -> ChainStepRecord
    tube_radius: Optional[float] = None
    dense_t: Optional[Array] = None
    dense_states: Optional[Array] = None  # shape (n_points, n)
    dense_psi: Optional[dict] = None  # name -> (psi0 array, psi_top array)


@dataclass
class TraceLog:
    config: ScenarioConfig
    steps: list = field(default_factory=list)
    chain_names: tuple = ()

    def summary(self) -> dict:
        out = {
            "controller": self.config.controller,
            "steps": len(self.steps),
            "infeasible_steps": sum(1 for s in self.steps
                                    if s.status != "optimal"),
            "final_time": (self.steps[-1].t + self.config.dt
                           if self.steps else 0.0),
        }
        first_violation = None
        for decl in self.config.chains:
            name = decl.name
            min_psi0 = np.inf
            min_top = np.inf
            reach_time = None
            for step in self.steps:
                dense = (step.dense_psi or {}).get(name)
                if dense is None:
                    continue
                psi0, psi_top = dense
                if psi0.min() < min_psi0:
                    min_psi0 = float(psi0.min())
                if psi_top.min() < min_top:
                    min_top = float(psi_top.min())
                if psi0.min() < 0:
                    idx = int(np.argmax(psi0 < 0))
                    when = float(step.dense_t[idx])
                    if first_violation is None or when < first_violation:
                        first_violation = when
                if decl.kind == "reach" and reach_time is None:
                    pos = step.dense_states[:, :2]
                    dist = np.linalg.norm(pos - np.asarray(decl.center), axis=1)
                    hits = np.flatnonzero(dist <= decl.radius)
                    if hits.size:
                        reach_time = float(step.dense_t[hits[0]])
            out[f"min_psi0[{name}]"] = min_psi0
            out[f"min_psi_top[{name}]"] = min_top
            if decl.kind == "reach":
                out[f"reach_time[{name}]"] = reach_time
        out["first_violation_time"] = first_violation
        return out


def step_zoh(model: SystemModel, input: Array, state: Array, t_k: float,
             dt: float, integrator_tolerance: float = 1e-9):
    """Integrate one interval with the input held constant; returns the
    terminal state."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    sol = _integrate(model, input, state, t_k, dt, integrator_tolerance)
    return sol.y[:, -1]


def _integrate(model: SystemModel, input: Array, state: Array, t_k: float,
               dt: float, tol: float):
    u = model.check_input(np.asarray(input, dtype=float))

    def rhs(t, x):
        return model.drift(x, t) + model.actuation(x, t) @ u

    sol = solve_ivp(rhs, (t_k, t_k + dt), np.asarray(state, dtype=float),
                    method="DOP853", rtol=min(tol, 1e-9), atol=tol * 1e-3,
                    dense_output=True)
    if not sol.success:
        raise IntegrationError(
            f"integrator failed on [{t_k}, {t_k + dt}]: {sol.message}")
    return sol


def _dense_psi_eval(chain, model, states, times):
    psi0 = np.empty(len(times))
    psi_top = np.empty(len(times))
    for i, (x, t) in enumerate(zip(states, times)):
        psi0[i] = chain.psi0.value(x, t)
        psi_top[i] = bar.top_value(chain, model, x, t)
    return psi0, psi_top


def build_model(config: ScenarioConfig) -> SystemModel:
    return make_unicycle()


def run_scenario(config: ScenarioConfig) -> TraceLog:
    """Execute the closed loop described by the configuration."""
    config.validate()
    model = build_model(config)
    if len(config.state) != model.state_dim:
        raise ConfigError("state: dimension mismatch with model")
    box = config.input_box()
    if box.dim != model.input_dim:
        raise ConfigError("input bounds: dimension mismatch with model")
    chains = [(decl, decl.build()) for decl in config.chains]
    rng = np.random.default_rng(config.seed)
    for _, chain in chains:
        bar.check_relative_degree(chain, model, rng=rng)

    state = np.asarray(config.state, dtype=float)
    dt = config.dt
    # The guarantee needs every level of every initially-active chain
    # nonnegative at the start.
    for decl, chain in chains:
        if not chain.active(0.0, dt):
            continue
        for level in range(chain.relative_degree):
            val = bar.eval_psi(chain, model, level, state, 0.0)
            if val < -MEMBERSHIP_TOL:
                raise InitialMembershipError(
                    f"chain {decl.name!r}: psi_{level} = {val} < 0 at t=0")

    uses_mbar = config.controller in ("sacbf", "r_sacbf")
    relaxed = config.controller == "r_sacbf"
    estimators = {}
    if uses_mbar:
        for decl, chain in chains:
            estimators[decl.name] = TaylorBoundEstimator(
                model, box, r=config.nodes,
                safety_factor=config.safety_factor, seed=config.seed)

    weights = {decl.name: decl.weight for decl, _ in chains}
    n_sub = max(2, int(round(dt / config.substep)))
    trace = TraceLog(config=config,
                     chain_names=tuple(decl.name for decl, _ in chains))
    prev_u = np.zeros(model.input_dim)

    for k in range(config.n_steps):
        t_k = k * dt
        active = [(decl, chain) for decl, chain in chains
                  if chain.active(t_k, dt)]

        # A slew limit keeps the applied input near the held input the
        # bound was evaluated at, so the bound remains representative of
        # the interval actually flown.
        step_box = box
        held = box.clip(prev_u)
        if uses_mbar and config.u_rate is not None:
            rate = np.asarray(config.u_rate, dtype=float)
            step_box = InputBox(
                np.maximum(np.asarray(config.u_lower), held - rate * dt),
                np.minimum(np.asarray(config.u_upper), held + rate * dt))

        # The sampling-aware modes bound the inter-sample second derivative
        # by evaluating the instantaneous bound along the predicted node
        # trajectory at the candidate inputs for this interval: the held
        # (previous) input plus the current guess of the input the QP will
        # pick.  Solving and re-estimating until the guess stops moving
        # makes the bound cover the input actually applied; the dominance
        # audit verifies it against the realized trajectory afterwards.
        guess = None
        for _ in range(6):
            m_used = {}
            rows = []
            row_meta = []
            for decl, chain in active:
                if uses_mbar:
                    if guess is None:
                        candidates = held[None, :]
                    else:
                        candidates = np.vstack([held[None, :],
                                                guess[None, :]])
                    est = estimators[decl.name].estimate(
                        chain, state, t_k, dt, candidates,
                        input_margin=0.0,
                        lipschitz_hull=(step_box.lower_array(),
                                        step_box.upper_array()))
                    m_used[decl.name] = est.m_bar
                    row = qpmod.sacbf_row(chain, model, state, t_k, dt,
                                          est.m_bar, relaxed=relaxed,
                                          chain_id=decl.name,
                                          strict_membership=False)
                else:
                    est = None
                    row = qpmod.hocbf_row(chain, model, state, t_k,
                                          chain_id=decl.name,
                                          strict_membership=False)
                rows.append(row)
                row_meta.append((decl, chain, est, row))

            problem = qpmod.build_qp(rows, step_box, weights)
            solution = qpmod.solve_qp(problem)
            if not uses_mbar or solution.status != "optimal":
                break
            u_new = solution.control(model.input_dim)
            anchor = held if guess is None else guess
            if np.linalg.norm(u_new - anchor) <= 1e-6:
                break
            guess = u_new
        if solution.status == "optimal":
            u = solution.control(model.input_dim)
            omega_by_chain = dict(zip(problem.omega_chain_ids,
                                      solution.omegas(model.input_dim)))
        elif config.infeasibility == "hold_previous":
            u = box.clip(prev_u)
            omega_by_chain = {}
        else:
            u = box.clip(np.zeros(model.input_dim))
            omega_by_chain = {}
        prev_u_next = u

        # The recorded tube is the containment ball for the input actually
        # applied over the interval, which the post-run audit checks.
        step_tube = None
        for _, _, est, _ in row_meta:
            if est is None or est.tube is None:
                continue
            radius = tube_radius(model, state, u, dt, est.tube.lipschitz_F,
                                 t_k)
            step_tube = (radius if step_tube is None
                         else max(step_tube, radius))

        sol = _integrate(model, u, state, t_k, dt, config.integrator_tol)
        dense_t = np.linspace(t_k, t_k + dt, n_sub + 1)
        dense_states = sol.sol(dense_t).T

        chain_records = {}
        dense_psi = {}
        z_star = (np.asarray(solution.z_star)
                  if solution.status == "optimal" else None)
        for decl, chain, est, row in row_meta:
            psi_levels = tuple(bar.eval_psi(chain, model, lvl, state, t_k)
                               for lvl in range(chain.relative_degree))
            alpha = chain.top_alpha
            envelope = None
            if uses_mbar:
                envelope = comparison_lower_bound(
                    max(psi_levels[-1], 0.0), alpha.lam, alpha.eta, dt)
            lf, lg, dpt = bar.top_lie_derivatives(chain, model, state, t_k)
            slack = None
            omega = omega_by_chain.get(decl.name) if relaxed else None
            if z_star is not None:
                slack = row.evaluate(u, omega if omega is not None else 1.0)
            chain_records[decl.name] = ChainStepRecord(
                chain=decl.name,
                psi_levels=psi_levels,
                envelope=envelope,
                m_bar=m_used.get(decl.name) if est is not None else None,
                m_hat=est.m_hat if est is not None else None,
                correction=est.correction if est is not None else None,
                omega=float(omega) if omega is not None else None,
                slack=slack,
                psi_dot=float(lf + lg @ u + dpt),
                set_exit=row.set_exit,
            )
            dense_psi[decl.name] = _dense_psi_eval(chain, model,
                                                   dense_states, dense_t)

        trace.steps.append(StepRecord(
            t=t_k, state=state.copy(), input=u.copy(),
            status=solution.status, chains=chain_records,
            tube_radius=step_tube, dense_t=dense_t,
            dense_states=dense_states, dense_psi=dense_psi))
        state = dense_states[-1]
        prev_u = prev_u_next
    return trace


# ---------------------------------------------------------------------------
# Audits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditViolation:
    step: int
    chain: str
    check: str  # dense_nonneg | terminal_envelope | certificate | dominance
    value: float
    tau: Optional[float] = None


@dataclass
class AuditReport:
    violations: list
    steps_checked: int

    @property
    def ok(self) -> bool:
        return not self.violations


def _dense_psi_ddot_max(trace: TraceLog, step: StepRecord, name: str):
    """Max |psi_dd| over the interval from finite differences of the
    realized psi_dot samples (independent of the bound estimator)."""
    config = trace.config
    decl = next(d for d in config.chains if d.name == name)
    chain = decl.build()
    model = build_model(config)
    times = step.dense_t
    u = step.input
    psi_dot = np.empty(len(times))
    for i, (x, t) in enumerate(zip(step.dense_states, times)):
        lf, lg, dpt = bar.top_lie_derivatives(chain, model, x, t)
        psi_dot[i] = lf + lg @ u + dpt
    h = times[1] - times[0]
    ddot = (psi_dot[2:] - psi_dot[:-2]) / (2.0 * h)
    if ddot.size == 0:
        return 0.0
    # Time-varying reach schedules have derivative kinks where a window
    # opens or closes; the bound certifies the smooth piece the step lives
    # on, so differences whose stencil straddles a kink are excluded.
    mask = np.ones(ddot.size, dtype=bool)
    for brk in (decl.t_start, decl.t_reach, decl.t_remain):
        if brk is not None:
            mask &= np.abs(times[1:-1] - brk) > 1.5 * h
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(ddot[mask])))


def audit_invariance(trace: TraceLog, tolerance: float = 1e-6) -> AuditReport:
    """Check the forward-invariance certificate on every satisfied step.

    For steps whose rows were satisfied: (a) dense psi_top stays above
    -tolerance, (b) the terminal value clears the (possibly relaxed) decay
    envelope, (c) the downward-opening certificate quadratic is nonnegative
    on the audit grid, and (d) the recorded interval bound dominates a
    finite-difference estimate of |psi_dd| along the realized trajectory.
    """
    violations = []
    checked = 0
    dt = trace.config.dt
    for k, step in enumerate(trace.steps):
        if step.status != "optimal":
            continue
        for name, rec in step.chains.items():
            if rec.m_bar is None or rec.slack is None:
                continue  # not a sampling-aware row (baseline controller)
            if rec.slack < -qpmod.SLACK_TOL:
                continue  # row not satisfied; certificate does not apply
            checked += 1
            psi0_dense, psi_top_dense = step.dense_psi[name]
            min_top = float(psi_top_dense.min())
            if min_top < -tolerance:
                violations.append(AuditViolation(k, name, "dense_nonneg",
                                                 min_top))
            omega = rec.omega if rec.omega is not None else 1.0
            terminal = float(psi_top_dense[-1])
            bound = omega * rec.envelope
            if terminal < bound - tolerance:
                violations.append(AuditViolation(k, name, "terminal_envelope",
                                                 terminal - bound))
            psi = rec.psi_levels[-1]
            a_coef = (omega * rec.envelope - psi) / dt
            b_coef = 0.5 * rec.m_bar * dt
            taus = step.dense_t - step.t
            cert = psi + taus * (a_coef + b_coef) - 0.5 * rec.m_bar * taus ** 2
            worst = int(np.argmin(cert))
            if cert[worst] < -tolerance:
                violations.append(AuditViolation(k, name, "certificate",
                                                 float(cert[worst]),
                                                 tau=float(taus[worst])))
            ddot_max = _dense_psi_ddot_max(trace, step, name)
            if rec.m_bar < ddot_max - tolerance:
                violations.append(AuditViolation(k, name, "dominance",
                                                 rec.m_bar - ddot_max))
    return AuditReport(violations=violations, steps_checked=checked)


def audit_bounds(trace: TraceLog, tolerance: float = 1e-6):
    """Dominance and tube-containment counts over a completed run.

    Returns (dominance_violations, tube_violations, steps_checked).
    """
    dom = 0
    tube = 0
    checked = 0
    for step in trace.steps:
        if step.tube_radius is None:
            continue
        checked += 1
        drift = np.linalg.norm(step.dense_states - step.state, axis=1)
        if float(drift.max()) > step.tube_radius + tolerance:
            tube += 1
        for name, rec in step.chains.items():
            if rec.m_bar is None:
                continue
            if rec.m_bar < _dense_psi_ddot_max(trace, step, name) - tolerance:
                dom += 1
    return dom, tube, checked


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def trace_to_csv(trace: TraceLog) -> str:
    """One row per step: time, state, input, status, then per-chain blocks."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    model = build_model(trace.config)
    levels = {decl.name: len(decl.lams) for decl in trace.config.chains}
    header = (["t"]
              + [f"x{i}" for i in range(model.state_dim)]
              + [f"u{i}" for i in range(model.input_dim)]
              + ["status"])
    for name in trace.chain_names:
        for lvl in range(levels[name]):
            header.append(f"{name}.psi{lvl}")
        header += [f"{name}.L", f"{name}.mbar", f"{name}.mhat",
                   f"{name}.correction", f"{name}.omega", f"{name}.slack"]
    writer.writerow(header)
    for step in trace.steps:
        row = ([f"{step.t:.10g}"]
               + [f"{v:.12g}" for v in step.state]
               + [f"{v:.12g}" for v in step.input]
               + [step.status])
        for name in trace.chain_names:
            rec = step.chains.get(name)
            if rec is None:
                row += [""] * (levels[name] + 6)
                continue
            row += [f"{v:.12g}" for v in rec.psi_levels]
            for v in (rec.envelope, rec.m_bar, rec.m_hat, rec.correction,
                      rec.omega, rec.slack):
                row.append("" if v is None else f"{v:.12g}")
        writer.writerow(row)
    return buf.getvalue()


def audit_to_csv(trace: TraceLog) -> str:
    """Dense audit samples: t, chain, psi_top, psi0."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["t", "chain_id", "psi_top", "psi0"])
    for step in trace.steps:
        for name in trace.chain_names:
            dense = (step.dense_psi or {}).get(name)
            if dense is None:
                continue
            psi0, psi_top = dense
            for t, p0, pt in zip(step.dense_t, psi0, psi_top):
                writer.writerow([f"{t:.10g}", name, f"{pt:.12g}", f"{p0:.12g}"])
    return buf.getvalue()


def summary_to_text(trace: TraceLog) -> str:
    lines = []
    for key, value in trace.summary().items():
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
