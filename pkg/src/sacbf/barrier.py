"""Barrier-function chains for high relative-degree constraints.

A chain starts from a base function psi_0 = b(x, t) and raises it through
psi_i = d(psi_{i-1})/dt + lam_i * psi_{i-1}**eta_i until the control input
appears.  For the catalog here (circular keep-out regions and shrinking
reach-and-remain discs, relative degree 2 under position-drift dynamics)
the first-order derivatives of the top function are assembled analytically
by the chain rule; its second-order derivatives are obtained by central
differences of those analytic first derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import SystemModel
from .numdiff import central_grad

Array = np.ndarray

# Step used when differentiating analytic first-derivative oracles once more.
_HESS_STEP = 1e-5
# Slack allowed when evaluating a reach chain at its window endpoints; wide
# enough that finite-difference probes of the time partials stay legal.
WINDOW_TOL = 1e-3


class BarrierDomainError(ValueError):
    """Power of a negative barrier value with a non-integer exponent."""


class OutOfWindowError(ValueError):
    """Time-varying barrier evaluated outside its active time window."""


@dataclass(frozen=True)
class ClassKappaPower:
    """Class-kappa function alpha(s) = lam * s**eta with lam, eta > 0."""

    lam: float
    eta: float

    def __post_init__(self):
        if self.lam <= 0 or self.eta <= 0:
            raise ValueError("class-kappa power needs lam > 0 and eta > 0")

    def __call__(self, s: float) -> float:
        return self.lam * kappa_power(s, self.eta)

    def slope(self, s: float) -> float:
        """d alpha / d s."""
        if self.eta == 1.0:
            return self.lam
        if self.eta > 1.0:
            return self.lam * self.eta * kappa_power(s, self.eta - 1.0)
        if s == 0.0:
            raise BarrierDomainError("alpha'(0) unbounded for eta < 1")
        return self.lam * self.eta * kappa_power(s, self.eta - 1.0)


def kappa_power(s: float, eta: float) -> float:
    """s**eta with integer eta defined for all s; fractional eta needs s >= 0."""
    if eta == 1.0:
        return s
    if float(eta).is_integer():
        return s ** int(eta)
    if s < 0.0:
        raise BarrierDomainError(
            f"fractional power {eta} undefined for negative value {s}"
        )
    return s ** eta


@dataclass(frozen=True)
class BaseBarrier:
    """psi_0 oracle bundle: value plus first and second partial derivatives."""

    value: Callable[[Array, float], float]
    grad: Callable[[Array, float], Array]
    hess: Callable[[Array, float], Array]
    dt: Callable[[Array, float], float]
    grad_dt: Callable[[Array, float], Array]
    dtt: Callable[[Array, float], float]


@dataclass(frozen=True)
class ReachSpec:
    """Shrinking-disc reach-and-remain specification.

    The boundary radius contracts from ``eps0`` at ``t_start`` to ``eps_d``
    at ``t_reach`` and (optionally) stays at ``eps_d`` until ``t_remain``.
    ``squared`` selects the schedule linear in the squared radius (the form
    used in the experiments) over the one linear in the radius itself.
    """

    center: tuple
    eps0: float
    eps_d: float
    t_start: float
    t_reach: float
    t_remain: Optional[float] = None
    norm_order: float = 2.0
    squared: bool = True

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.eps0 >= self.eps_d >= 0.0:
            raise ValueError("reach spec requires eps0 >= eps_d >= 0")
        t_end = self.t_reach if self.t_remain is None else self.t_remain
        if not (self.t_start < self.t_reach <= t_end):
            raise ValueError("reach spec requires t_start < t_reach <= t_remain")

    @property
    def t_end(self) -> float:
        return self.t_reach if self.t_remain is None else self.t_remain

    @property
    def contraction_rate(self) -> float:
        span = self.t_reach - self.t_start
        if self.squared:
            return (self.eps0 ** 2 - self.eps_d ** 2) / span
        return (self.eps0 - self.eps_d) / span


@dataclass(frozen=True)
class BarrierChain:
    """A base barrier with its class-kappa ladder and bookkeeping metadata.

    ``alphas`` has length equal to the relative degree; the first m-1 entries
    define psi_1 .. psi_{m-1} and the last one parameterizes the controller
    row built on top of the chain.
    """

    relative_degree: int
    alphas: tuple
    psi0: BaseBarrier
    tag: str  # "safety" or "reach"
    name: str = ""
    window: Optional[tuple] = None  # (t_start, t_end) for reach chains
    center: Optional[tuple] = None
    target_radius: Optional[float] = None
    reach: Optional[ReachSpec] = None

    def __post_init__(self):
        if self.relative_degree not in (1, 2):
            raise ValueError("only relative degrees 1 and 2 are supported")
        if len(self.alphas) != self.relative_degree:
            raise ValueError("need one class-kappa function per level")
        if self.tag not in ("safety", "reach"):
            raise ValueError(f"unknown chain tag {self.tag!r}")

    @property
    def top_alpha(self) -> ClassKappaPower:
        return self.alphas[-1]

    def active(self, t: float, dt: float = 0.0) -> bool:
        """Whether the chain constrains the interval [t, t + dt]."""
        if self.window is None:
            return True
        t0, t1 = self.window
        return t >= t0 - WINDOW_TOL and t + dt <= t1 + WINDOW_TOL


# ---------------------------------------------------------------------------
# Top-function oracles (chain rule through one differentiation level)
# ---------------------------------------------------------------------------

def top_value(chain: BarrierChain, model: SystemModel, state: Array, t: float) -> float:
    """psi_{m-1}(x, t)."""
    state = model.check_state(state)
    b = chain.psi0
    if chain.relative_degree == 1:
        return b.value(state, t)
    alpha = chain.alphas[0]
    f = model.drift(state, t)
    return float(b.grad(state, t) @ f + b.dt(state, t) + alpha(b.value(state, t)))


def top_grad(chain: BarrierChain, model: SystemModel, state: Array, t: float) -> Array:
    state = model.check_state(state)
    b = chain.psi0
    if chain.relative_degree == 1:
        return b.grad(state, t)
    alpha = chain.alphas[0]
    f = model.drift(state, t)
    fx = model.drift_jac_x(state, t)
    return (b.hess(state, t) @ f + fx.T @ b.grad(state, t) + b.grad_dt(state, t)
            + alpha.slope(b.value(state, t)) * b.grad(state, t))


def top_dt(chain: BarrierChain, model: SystemModel, state: Array, t: float) -> float:
    state = model.check_state(state)
    b = chain.psi0
    if chain.relative_degree == 1:
        return b.dt(state, t)
    alpha = chain.alphas[0]
    f = model.drift(state, t)
    ft = model.drift_dt(state, t)
    return float(b.grad_dt(state, t) @ f + b.grad(state, t) @ ft + b.dtt(state, t)
                 + alpha.slope(b.value(state, t)) * b.dt(state, t))


def top_hess(chain: BarrierChain, model: SystemModel, state: Array, t: float) -> Array:
    if chain.relative_degree == 1:
        return chain.psi0.hess(model.check_state(state), t)
    state = np.asarray(state, dtype=float)
    n = state.size
    hess = np.zeros((n, n))
    for i in range(n):
        step = _HESS_STEP * max(1.0, abs(state[i]))
        xp = state.copy()
        xm = state.copy()
        xp[i] += step
        xm[i] -= step
        hess[:, i] = (top_grad(chain, model, xp, t)
                      - top_grad(chain, model, xm, t)) / (2.0 * step)
    return 0.5 * (hess + hess.T)


def top_grad_dt(chain: BarrierChain, model: SystemModel, state: Array, t: float) -> Array:
    if chain.relative_degree == 1:
        return chain.psi0.grad_dt(model.check_state(state), t)
    step = _HESS_STEP * max(1.0, abs(t))
    return (top_grad(chain, model, state, t + step)
            - top_grad(chain, model, state, t - step)) / (2.0 * step)


def top_dtt(chain: BarrierChain, model: SystemModel, state: Array, t: float) -> float:
    if chain.relative_degree == 1:
        return chain.psi0.dtt(model.check_state(state), t)
    step = _HESS_STEP * max(1.0, abs(t))
    return (top_dt(chain, model, state, t + step)
            - top_dt(chain, model, state, t - step)) / (2.0 * step)


def top_lie_derivatives(chain: BarrierChain, model: SystemModel,
                        state: Array, t: float):
    """(Lf, Lg, dpsi/dt) with d(psi_{m-1})/dt = Lf + Lg @ u + dpsi/dt."""
    state = model.check_state(state)
    grad = top_grad(chain, model, state, t)
    lf = float(grad @ model.drift(state, t))
    lg = grad @ model.actuation(state, t)
    return lf, lg, top_dt(chain, model, state, t)


def eval_psi(chain: BarrierChain, model: SystemModel, level: int,
             state: Array, t: float) -> float:
    """psi_level(x, t) for 0 <= level <= relative_degree - 1."""
    if not 0 <= level <= chain.relative_degree - 1:
        raise ValueError(
            f"level {level} outside [0, {chain.relative_degree - 1}]"
        )
    if level == 0:
        return float(chain.psi0.value(model.check_state(state), t))
    return top_value(chain, model, state, t)


def check_relative_degree(chain: BarrierChain, model: SystemModel,
                          rng=None, samples: int = 8, tol: float = 1e-8) -> None:
    """Verify L_g psi_0 vanishes while L_g psi_{m-1} does not.

    Raises ValueError if the declared relative degree is inconsistent with
    the paired model at randomized states.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    if chain.window is not None:
        t0, t1 = chain.window
        times = rng.uniform(t0, t1, samples)
    else:
        times = rng.uniform(0.0, 1.0, samples)
    top_seen = 0.0
    for t in times:
        state = rng.normal(0.0, 2.0, model.state_dim)
        g = model.actuation(state, t)
        if chain.relative_degree > 1:
            lg0 = chain.psi0.grad(state, t) @ g
            if np.linalg.norm(lg0) > tol:
                raise ValueError(
                    f"chain {chain.name!r}: L_g psi_0 != 0, relative degree < "
                    f"{chain.relative_degree}"
                )
        top_seen = max(top_seen, np.linalg.norm(top_grad(chain, model, state, t) @ g))
    if top_seen <= tol:
        raise ValueError(
            f"chain {chain.name!r}: L_g psi_(m-1) vanishes at all sampled states"
        )


# ---------------------------------------------------------------------------
# Catalog constructors
# ---------------------------------------------------------------------------

def _scatter(position_grad: Array, state: Array, pos_idx) -> Array:
    out = np.zeros_like(np.asarray(state, dtype=float))
    out[list(pos_idx)] = position_grad
    return out


def make_circular_safety(center, radius, norm_order: float = 2.0,
                         alphas=None, name: str = "", relative_degree: int = 2,
                         pos_idx=(0, 1)) -> BarrierChain:
    """Keep-out barrier psi_0 = sum((pos - center)**p) - radius**p.

    ``norm_order`` must be a positive even integer; the quadratic p = 2 case
    is the one exercised by the scenarios.
    """
    if radius <= 0:
        raise ValueError("obstacle radius must be positive")
    p = float(norm_order)
    if not (p > 0 and p.is_integer() and int(p) % 2 == 0):
        raise ValueError("norm_order must be a positive even integer")
    p = int(p)
    center = np.asarray(center, dtype=float)
    if alphas is None:
        alphas = tuple(ClassKappaPower(1.0, 1.0) for _ in range(relative_degree))

    def value(x, t):
        d = x[list(pos_idx)] - center
        return float(np.sum(d ** p) - radius ** p)

    def grad(x, t):
        d = x[list(pos_idx)] - center
        return _scatter(p * d ** (p - 1), x, pos_idx)

    def hess(x, t):
        n = len(x)
        out = np.zeros((n, n))
        d = x[list(pos_idx)] - center
        diag = p * (p - 1) * d ** (p - 2)
        for k, i in enumerate(pos_idx):
            out[i, i] = diag[k]
        return out

    base = BaseBarrier(
        value=value,
        grad=grad,
        hess=hess,
        dt=lambda x, t: 0.0,
        grad_dt=lambda x, t: np.zeros(len(x)),
        dtt=lambda x, t: 0.0,
    )
    return BarrierChain(relative_degree=relative_degree, alphas=tuple(alphas),
                        psi0=base, tag="safety", name=name,
                        center=tuple(center), target_radius=float(radius))


def make_reach_remain(spec: ReachSpec, alphas=None, name: str = "",
                      relative_degree: int = 2, pos_idx=(0, 1)) -> BarrierChain:
    """Time-varying reach-and-remain barrier from a ReachSpec.

    Squared schedule: psi_0 = eps0**2 - K (t - t_start) - ||pos - center||**2
    while contracting, then eps_d**2 - ||pos - center||**2 during the remain
    phase.  Evaluation outside [t_start, t_end] raises OutOfWindowError.
    """
    if spec.norm_order != 2.0:
        raise ValueError("reach barriers are implemented for the 2-norm only")
    if alphas is None:
        alphas = tuple(ClassKappaPower(1.0, 1.0) for _ in range(relative_degree))
    center = np.asarray(spec.center, dtype=float)
    rate = spec.contraction_rate

    def _check_window(t):
        if t < spec.t_start - WINDOW_TOL or t > spec.t_end + WINDOW_TOL:
            raise OutOfWindowError(
                f"t={t} outside reach window [{spec.t_start}, {spec.t_end}]"
            )

    def _sq_radius(t):
        if t < spec.t_reach:
            if spec.squared:
                return spec.eps0 ** 2 - rate * (t - spec.t_start)
            return (spec.eps0 - rate * (t - spec.t_start)) ** 2
        return spec.eps_d ** 2

    def _sq_radius_dt(t):
        if t < spec.t_reach:
            if spec.squared:
                return -rate
            return -2.0 * rate * (spec.eps0 - rate * (t - spec.t_start))
        return 0.0

    def _sq_radius_dtt(t):
        if t < spec.t_reach and not spec.squared:
            return 2.0 * rate ** 2
        return 0.0

    def value(x, t):
        _check_window(t)
        d = x[list(pos_idx)] - center
        return float(_sq_radius(t) - np.sum(d ** 2))

    def grad(x, t):
        _check_window(t)
        d = x[list(pos_idx)] - center
        return _scatter(-2.0 * d, x, pos_idx)

    def hess(x, t):
        _check_window(t)
        n = len(x)
        out = np.zeros((n, n))
        for i in pos_idx:
            out[i, i] = -2.0
        return out

    def dt(x, t):
        _check_window(t)
        return float(_sq_radius_dt(t))

    def dtt(x, t):
        _check_window(t)
        return float(_sq_radius_dtt(t))

    base = BaseBarrier(
        value=value,
        grad=grad,
        hess=hess,
        dt=dt,
        grad_dt=lambda x, t: np.zeros(len(x)),
        dtt=dtt,
    )
    return BarrierChain(relative_degree=relative_degree, alphas=tuple(alphas),
                        psi0=base, tag="reach", name=name,
                        window=(spec.t_start, spec.t_end),
                        center=tuple(center), target_radius=float(spec.eps_d),
                        reach=spec)
