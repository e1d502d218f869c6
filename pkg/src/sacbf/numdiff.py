"""Central finite-difference helpers shared by derivative oracles and tests."""

from __future__ import annotations

import numpy as np


def central_grad(fn, x, h=1e-6):
    """Gradient of a scalar function of a vector by central differences."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for i in range(x.size):
        step = h * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        out[i] = (fn(xp) - fn(xm)) / (2.0 * step)
    return out


def central_jac(fn, x, h=1e-6):
    """Jacobian of an array-valued function of a vector.

    The result has shape fn(x).shape + x.shape, i.e. derivative indices last.
    """
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fn(x), dtype=float)
    out = np.zeros(f0.shape + (x.size,))
    for i in range(x.size):
        step = h * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        out[..., i] = (np.asarray(fn(xp)) - np.asarray(fn(xm))) / (2.0 * step)
    return out


def central_dt(fn, t, h=1e-6):
    """Derivative of an array- or scalar-valued function of scalar time."""
    step = h * max(1.0, abs(t))
    fp = fn(t + step)
    fm = fn(t - step)
    if np.isscalar(fp):
        return (fp - fm) / (2.0 * step)
    return (np.asarray(fp, dtype=float) - np.asarray(fm, dtype=float)) / (2.0 * step)
