"""Control-affine system models with derivative oracles.

A system is dx/dt = f(x, t) + g(x, t) u.  Every model carries first-derivative
oracles (Jacobians with respect to the state and partials with respect to
time) because the inter-sampling bound needs them.  Models without analytic
Jacobians can be completed by finite differences via ``from_fields``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .numdiff import central_dt, central_jac

Array = np.ndarray


class DimensionError(ValueError):
    """Oracle output or argument does not match the declared dimensions."""


@dataclass(frozen=True)
class SystemModel:
    """Control-affine dynamics with first-derivative oracles.

    All oracles take (state, t).  ``actuation_jac_x`` returns an
    (n, q, n) tensor: entry [i, j, k] is d g[i, j] / d x[k].
    """

    state_dim: int
    input_dim: int
    drift: Callable[[Array, float], Array]
    actuation: Callable[[Array, float], Array]
    drift_jac_x: Callable[[Array, float], Array]
    actuation_jac_x: Callable[[Array, float], Array]
    drift_dt: Callable[[Array, float], Array]
    actuation_dt: Callable[[Array, float], Array]

    def check_state(self, state: Array) -> Array:
        state = np.asarray(state, dtype=float)
        if state.shape != (self.state_dim,):
            raise DimensionError(
                f"state has shape {state.shape}, expected ({self.state_dim},)"
            )
        return state

    def check_input(self, u: Array) -> Array:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.input_dim,):
            raise DimensionError(
                f"input has shape {u.shape}, expected ({self.input_dim},)"
            )
        return u


def from_fields(n, q, drift, actuation, drift_jac_x=None, actuation_jac_x=None,
                drift_dt=None, actuation_dt=None, fd_step=1e-6):
    """Build a SystemModel, filling missing derivative oracles by central
    finite differences with the given step."""
    if drift_jac_x is None:
        drift_jac_x = lambda x, t: central_jac(lambda s: drift(s, t), x, fd_step)
    if actuation_jac_x is None:
        actuation_jac_x = lambda x, t: central_jac(lambda s: actuation(s, t), x, fd_step)
    if drift_dt is None:
        drift_dt = lambda x, t: central_dt(lambda s: drift(x, s), t, fd_step)
    if actuation_dt is None:
        actuation_dt = lambda x, t: central_dt(lambda s: actuation(x, s), t, fd_step)
    return SystemModel(n, q, drift, actuation, drift_jac_x, actuation_jac_x,
                       drift_dt, actuation_dt)


def eval_field(model: SystemModel, state: Array, input: Array, t: float) -> Array:
    """Closed-loop vector field f(x, t) + g(x, t) u for a fixed input."""
    state = model.check_state(state)
    u = model.check_input(input)
    return model.drift(state, t) + model.actuation(state, t) @ u


def make_unicycle() -> SystemModel:
    """Unicycle with state (x, y, theta, v) and inputs (turn rate, acceleration)."""
    g_const = np.array([[0.0, 0.0],
                        [0.0, 0.0],
                        [1.0, 0.0],
                        [0.0, 1.0]])
    g_jac = np.zeros((4, 2, 4))
    zero4 = np.zeros(4)
    zero42 = np.zeros((4, 2))

    def drift(x, t):
        return np.array([x[3] * np.cos(x[2]), x[3] * np.sin(x[2]), 0.0, 0.0])

    def drift_jac_x(x, t):
        s, c = np.sin(x[2]), np.cos(x[2])
        jac = np.zeros((4, 4))
        jac[0, 2] = -x[3] * s
        jac[0, 3] = c
        jac[1, 2] = x[3] * c
        jac[1, 3] = s
        return jac

    return SystemModel(
        state_dim=4,
        input_dim=2,
        drift=drift,
        actuation=lambda x, t: g_const,
        drift_jac_x=drift_jac_x,
        actuation_jac_x=lambda x, t: g_jac,
        drift_dt=lambda x, t: zero4,
        actuation_dt=lambda x, t: zero42,
    )


@dataclass(frozen=True)
class InputBox:
    """Componentwise input bounds u_min <= u <= u_max."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("input bounds must be 1-D vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("input box requires lower <= upper componentwise")
        object.__setattr__(self, "lower", tuple(lo))
        object.__setattr__(self, "upper", tuple(hi))

    @property
    def dim(self) -> int:
        return len(self.lower)

    def lower_array(self) -> Array:
        return np.asarray(self.lower)

    def upper_array(self) -> Array:
        return np.asarray(self.upper)

    def vertices(self) -> Array:
        """All corner points, shape (2**q, q)."""
        lo, hi = self.lower_array(), self.upper_array()
        q = self.dim
        verts = np.empty((2 ** q, q))
        for k in range(2 ** q):
            for j in range(q):
                verts[k, j] = hi[j] if (k >> j) & 1 else lo[j]
        return verts

    def clip(self, u: Array) -> Array:
        return np.clip(np.asarray(u, dtype=float),
                       self.lower_array(), self.upper_array())

    def contains(self, u: Array, tol: float = 1e-9) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lower_array() - tol)
                    and np.all(u <= self.upper_array() + tol))
