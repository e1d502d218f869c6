"""Inter-sampling second-derivative bounds for the top barrier level.

The controller needs a certified constant dominating |psi_dd(t)| over one
zero-order-hold interval.  The instantaneous bound ``phi`` majorizes the
second derivative pointwise; the estimator samples it at Gauss-Legendre
nodes along a predicted trajectory, sweeps candidate inputs, and adds a
Lipschitz correction for everything between the samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import barrier as bar
from .dynamics import InputBox, SystemModel

Array = np.ndarray


def gauss_legendre_unit_nodes(r: int) -> Array:
    """Gauss-Legendre abscissae mapped from [-1, 1] to [0, 1]."""
    nodes, _ = np.polynomial.legendre.leggauss(r)
    return (nodes + 1.0) / 2.0


def phi(model: SystemModel, chain: bar.BarrierChain, state: Array,
        input: Array, t: float) -> float:
    """Pointwise upper bound on |psi_dd| at (state, input, t).

    Each term of the exact second-derivative expansion is replaced by the
    product of its factor norms (spectral norm for matrices, 2-norm for
    vectors), so the result dominates the true value by the triangle
    inequality.
    """
    state = model.check_state(state)
    u = model.check_input(input)
    f = model.drift(state, t)
    g = model.actuation(state, t)
    big_f = f + g @ u
    norm_f = np.linalg.norm(big_f)
    norm_u = np.linalg.norm(u)

    grad = bar.top_grad(chain, model, state, t)
    hess = bar.top_hess(chain, model, state, t)
    grad_dt = bar.top_grad_dt(chain, model, state, t)
    dtt = bar.top_dtt(chain, model, state, t)

    fx_norm = np.linalg.norm(model.drift_jac_x(state, t), 2)
    gx = model.actuation_jac_x(state, t)
    gx_norm = np.linalg.norm(gx.reshape(-1, model.state_dim), 2)
    ft_norm = np.linalg.norm(model.drift_dt(state, t))
    gt_norm = np.linalg.norm(model.actuation_dt(state, t), 2)
    grad_norm = np.linalg.norm(grad)

    return float(
        np.linalg.norm(hess, 2) * norm_f ** 2
        + grad_norm * (fx_norm + gx_norm * norm_u) * norm_f
        + 2.0 * np.linalg.norm(grad_dt) * norm_f
        + abs(dtt)
        + grad_norm * (ft_norm + gt_norm * norm_u)
    )


def second_derivative_expansion(model: SystemModel, chain: bar.BarrierChain,
                                state: Array, input: Array, t: float) -> float:
    """Exact psi_dd from the chain-rule expansion (for audits and tests)."""
    state = model.check_state(state)
    u = model.check_input(input)
    f = model.drift(state, t)
    g = model.actuation(state, t)
    big_f = f + g @ u
    grad = bar.top_grad(chain, model, state, t)
    hess = bar.top_hess(chain, model, state, t)
    grad_dt = bar.top_grad_dt(chain, model, state, t)
    dtt = bar.top_dtt(chain, model, state, t)
    fx = model.drift_jac_x(state, t)
    gx = model.actuation_jac_x(state, t)
    ft = model.drift_dt(state, t)
    gt = model.actuation_dt(state, t)
    accel = fx @ big_f + np.tensordot(gx, big_f, axes=([2], [0])) @ u + ft + gt @ u
    return float(big_f @ hess @ big_f + grad @ accel + 2.0 * grad_dt @ big_f + dtt)


def tube_radius(model: SystemModel, state: Array, input: Array, dt: float,
                lipschitz_F: float, t: float = 0.0) -> float:
    """Gronwall radius of the ball containing the state over one interval."""
    if dt <= 0.0:
        raise ValueError("tube radius needs dt > 0")
    if lipschitz_F < 0.0:
        raise ValueError("Lipschitz constant must be nonnegative")
    state = model.check_state(state)
    u = model.check_input(input)
    norm_f = float(np.linalg.norm(model.drift(state, t)
                                  + model.actuation(state, t) @ u))
    return _tube_radius_from_norm(norm_f, dt, lipschitz_F)


def _tube_radius_from_norm(norm_f: float, dt: float, lipschitz_F: float) -> float:
    if lipschitz_F <= 0.0:
        return dt * norm_f
    return math.expm1(lipschitz_F * dt) / lipschitz_F * norm_f


@dataclass(frozen=True)
class TubeSpec:
    """Anchor plus Gronwall radius for one sampling interval."""

    anchor_state: tuple
    radius: float
    lipschitz_F: float


@dataclass(frozen=True)
class BoundEstimate:
    """Node maximum, Lipschitz correction, and their certified sum."""

    m_hat: float
    correction: float
    m_bar: float
    nodes_used: int
    node_records: tuple
    tube: Optional[TubeSpec] = None


def estimate_lipschitz(fn, box, samples: int, seed: int = 0,
                       safety_factor: float = 1.5, rng=None) -> float:
    """Sampled two-point Lipschitz estimate over a box, inflated for safety.

    ``box`` is a (lower, upper) pair of equal-length vectors.  Deterministic
    for a fixed seed.  A single-point box returns 0.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples")
    lower = np.asarray(box[0], dtype=float)
    upper = np.asarray(box[1], dtype=float)
    if np.all(upper - lower <= 0.0):
        return 0.0
    rng = np.random.default_rng(seed) if rng is None else rng
    pts = rng.uniform(lower, upper, size=(2 * samples, lower.size))
    best = 0.0
    for k in range(samples):
        a, b = pts[2 * k], pts[2 * k + 1]
        gap = np.linalg.norm(a - b)
        if gap < 1e-12:
            continue
        fa = np.atleast_1d(np.asarray(fn(a), dtype=float))
        fb = np.atleast_1d(np.asarray(fn(b), dtype=float))
        best = max(best, np.linalg.norm(fa - fb) / gap)
    return safety_factor * best


def _rk4_propagate(model: SystemModel, state: Array, u: Array, t0: float,
                   t1: float, substeps: int = 4) -> Array:
    x = np.asarray(state, dtype=float).copy()
    h = (t1 - t0) / substeps
    t = t0
    for _ in range(substeps):
        k1 = model.drift(x, t) + model.actuation(x, t) @ u
        k2 = model.drift(x + 0.5 * h * k1, t + 0.5 * h) \
            + model.actuation(x + 0.5 * h * k1, t + 0.5 * h) @ u
        k3 = model.drift(x + 0.5 * h * k2, t + 0.5 * h) \
            + model.actuation(x + 0.5 * h * k2, t + 0.5 * h) @ u
        k4 = model.drift(x + h * k3, t + h) + model.actuation(x + h * k3, t + h) @ u
        x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return x


class TaylorBoundEstimator:
    """Per-chain estimator of the interval bound with Lipschitz caching.

    Candidate inputs are supplied by the caller: the closed loop passes the
    previously applied input plus its current guess of the next one and
    iterates until the bound covers the input it ends up applying; the
    one-shot helper below sweeps the input-box vertices instead.  Node
    states are propagated under the last candidate.  The local Lipschitz
    constants are re-sampled whenever the state has moved more than a tenth
    of the last tube radius; results are deterministic for a fixed seed
    regardless of cache hits.
    """

    LIPSCHITZ_SAMPLES = 64
    CACHE_FRACTION = 0.1

    def __init__(self, model: SystemModel, input_box: InputBox, r: int = 5,
                 safety_factor: float = 1.5, seed: int = 0):
        if not 3 <= r <= 7:
            raise ValueError("node count r must lie in [3, 7]")
        self.model = model
        self.input_box = input_box
        self.r = r
        self.safety_factor = safety_factor
        self.seed = seed
        self.gammas = gauss_legendre_unit_nodes(r)
        self._cache = None  # (anchor_state, rho, L_F, L_phi, u_lo, u_hi)

    def _lipschitz_constants(self, chain, state, t_k, rho, candidates,
                             u_lo, u_hi):
        model = self.model
        rng = np.random.default_rng(self.seed)
        span = max(rho, 1e-6)
        box_lo = state - span
        box_hi = state + span

        # L_F: Lipschitz of x -> f + g u over the tube, worst input over the
        # sampled hull (the field is affine in u, so its corners suffice).
        corners = np.vstack([candidates, InputBox(u_lo, u_hi).vertices()])
        l_f = 0.0
        for u in corners:
            def field_u(x, u=u):
                return model.drift(x, t_k) + model.actuation(x, t_k) @ u

            l_f = max(l_f, estimate_lipschitz(
                field_u, (box_lo, box_hi), self.LIPSCHITZ_SAMPLES,
                safety_factor=self.safety_factor, rng=rng))
        # L_phi: Lipschitz of (x, u) -> phi over the tube crossed with the
        # sampled input hull (the only region the node-variation correction
        # has to cover).
        joint_lo = np.concatenate([box_lo, u_lo])
        joint_hi = np.concatenate([box_hi, u_hi])
        n = model.state_dim

        def phi_joint(z):
            return phi(model, chain, z[:n], z[n:], t_k)

        l_phi = estimate_lipschitz(phi_joint, (joint_lo, joint_hi),
                                   self.LIPSCHITZ_SAMPLES,
                                   safety_factor=self.safety_factor, rng=rng)
        return l_f, l_phi

    def estimate(self, chain: bar.BarrierChain, state: Array, t_k: float,
                 dt: float, candidate_inputs,
                 input_margin: Optional[float] = None,
                 lipschitz_hull=None) -> BoundEstimate:
        """Certified bound on |psi_dd| over [t_k, t_k + dt].

        ``lipschitz_hull``, when given as a (lower, upper) pair, fixes the
        input region the Lipschitz constants are sampled over; it must
        contain every candidate.  A caller that iterates within one step can
        pass its admissible input box here so the sampled constants stay
        valid (and cached) as candidates are added.
        """
        model = self.model
        state = model.check_state(state)
        candidates = np.atleast_2d(np.asarray(candidate_inputs, dtype=float))
        candidates = np.unique(
            np.array([self.input_box.clip(u) for u in candidates]), axis=0)
        # Worst-case field magnitude over the candidate inputs (the norm is
        # convex in u, so a finite candidate sweep is exact on its hull's
        # vertices).
        f0 = model.drift(state, t_k)
        g0 = model.actuation(state, t_k)
        norm_f = max(float(np.linalg.norm(f0 + g0 @ u)) for u in candidates)

        if lipschitz_hull is None:
            u_lo = np.min(candidates, axis=0)
            u_hi = np.max(candidates, axis=0)
        else:
            u_lo = np.asarray(lipschitz_hull[0], dtype=float)
            u_hi = np.asarray(lipschitz_hull[1], dtype=float)
            if np.any(candidates < u_lo - 1e-9) \
                    or np.any(candidates > u_hi + 1e-9):
                raise ValueError("lipschitz_hull must contain all candidates")
        cached = self._cache
        if cached is not None \
                and np.linalg.norm(state - cached[0]) \
                <= self.CACHE_FRACTION * cached[1] \
                and np.all(u_lo >= cached[4] - 1e-12) \
                and np.all(u_hi <= cached[5] + 1e-12):
            _, _, l_f, l_phi, _, _ = cached
        else:
            rho_guess = dt * norm_f
            l_f, l_phi = self._lipschitz_constants(chain, state, t_k,
                                                   rho_guess, candidates,
                                                   u_lo, u_hi)
            self._cache = (state.copy(),
                           _tube_radius_from_norm(norm_f, dt, l_f),
                           l_f, l_phi, u_lo.copy(), u_hi.copy())
        rho = _tube_radius_from_norm(norm_f, dt, l_f)

        records = []
        m_hat = 0.0
        propagate_u = candidates[-1]
        x_i = state
        t_prev = t_k
        for gamma in self.gammas:
            t_i = t_k + gamma * dt
            x_i = _rk4_propagate(model, x_i, propagate_u, t_prev, t_i)
            t_prev = t_i
            for u_c in candidates:
                val = phi(model, chain, x_i, u_c, t_i)
                records.append((t_i, tuple(x_i), tuple(u_c), val))
                m_hat = max(m_hat, val)

        # The node states sit on the propagated trajectory, so the state
        # correction only has to cover (a) the gaps between node times, at
        # the worst-case field magnitude inside the tube, and (b) how far a
        # trajectory under any other candidate input peels away from the
        # propagated one over the interval.  The half-tube radius remains a
        # valid (cruder) cover, so take whichever is smaller.
        cover = max(self.gammas[0], 1.0 - self.gammas[-1],
                    0.5 * float(np.max(np.diff(self.gammas)))) * dt
        growth = math.exp(l_f * dt)
        mismatch = max(float(np.linalg.norm(g0 @ (u - propagate_u)))
                       for u in candidates)
        delta_x = min(rho / 2.0, norm_f * growth * cover + mismatch * dt * growth)
        if input_margin is not None:
            # Caller vouches that the candidates already cover the admissible
            # inputs (e.g. the corners of a rate-limit box, exact when phi is
            # convex in u) and supplies the residual margin directly.
            delta_u = float(input_margin)
        else:
            diam = 0.0
            for i in range(len(candidates)):
                for j in range(i + 1, len(candidates)):
                    diam = max(diam, float(np.linalg.norm(candidates[i]
                                                          - candidates[j])))
            delta_u = diam / 2.0
        correction = l_phi * (delta_x + delta_u)
        tube = TubeSpec(anchor_state=tuple(state), radius=rho, lipschitz_F=l_f)
        return BoundEstimate(m_hat=m_hat, correction=correction,
                             m_bar=m_hat + correction, nodes_used=self.r,
                             node_records=tuple(records), tube=tube)


def estimate_mbar(model: SystemModel, chain: bar.BarrierChain, state: Array,
                  t_k: float, dt: float, input_set: InputBox, r: int = 5,
                  prev_input=None, safety_factor: float = 1.5,
                  seed: int = 0) -> BoundEstimate:
    """One-shot interval bound: input-box vertices plus the previous input
    as candidates (conservative; independent of the decision variable)."""
    est = TaylorBoundEstimator(model, input_set, r=r,
                               safety_factor=safety_factor, seed=seed)
    if prev_input is None:
        prev_input = np.zeros(model.input_dim)
    candidates = np.vstack([input_set.vertices(),
                            np.asarray(prev_input, dtype=float)[None, :]])
    return est.estimate(chain, state, t_k, dt, candidates)
