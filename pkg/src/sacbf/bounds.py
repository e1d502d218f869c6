"""Closed-form lower envelope of a barrier level under its decay inequality.

Integrating d(psi)/dt >= -lam * psi**eta from a nonnegative start gives an
explicit lower bound on psi after any horizon; the bound is nonnegative, so
it certifies that the level cannot cross zero between samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Exponents this close to 1 take the exponential branch; avoids the removable
# singularity in 1/(1-eta).
_ETA_ONE_TOL = 1e-12


def comparison_lower_bound(psi0: float, lam: float, eta: float, dt: float) -> float:
    """Lower bound on psi(dt) given psi(0) = psi0 >= 0 and the decay ODE.

    Exponential for eta = 1, the clamped power form otherwise.  The clamp
    also covers finite-time extinction (eta < 1): once the bracket hits
    zero the trajectory stays at zero.
    """
    if psi0 < 0.0:
        raise ValueError(f"comparison bound requires psi0 >= 0, got {psi0}")
    if lam <= 0.0 or eta <= 0.0:
        raise ValueError("comparison bound requires lam > 0 and eta > 0")
    if dt < 0.0:
        raise ValueError(f"comparison bound requires dt >= 0, got {dt}")
    if abs(eta - 1.0) <= _ETA_ONE_TOL:
        return psi0 * float(np.exp(-lam * dt))
    if psi0 == 0.0:
        return 0.0
    bracket = psi0 ** (1.0 - eta) - lam * (1.0 - eta) * dt
    if bracket <= 0.0:
        # Only reachable for eta < 1 (extinction); for eta > 1 the bracket
        # is a sum of positives.
        return 0.0
    return bracket ** (1.0 / (1.0 - eta))


@dataclass(frozen=True)
class ComparisonBound:
    """Frozen parameters of the decay envelope for one sampling step."""

    psi_at_tk: float
    lambda_m: float
    eta_m: float
    horizon: float

    def __post_init__(self):
        if self.psi_at_tk < 0.0:
            raise ValueError("comparison bound requires psi_at_tk >= 0")

    def value(self) -> float:
        return comparison_lower_bound(self.psi_at_tk, self.lambda_m,
                                      self.eta_m, self.horizon)

    def at(self, tau: float) -> float:
        """Envelope value after an elapsed time tau <= horizon."""
        return comparison_lower_bound(self.psi_at_tk, self.lambda_m,
                                      self.eta_m, tau)
