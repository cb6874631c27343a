"""Finite-difference gradient oracle.

Central differences over a flat float64 parameter vector. This is the
independent reference every analytic/backward gradient in the package is
checked against; it deliberately knows nothing about torch autograd.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


def finite_difference_gradient(
    scalar_fn: Callable[[np.ndarray], float],
    params: np.ndarray,
    eps: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient of ``scalar_fn`` at ``params``.

    ``scalar_fn`` must be deterministic and finite at every +/- eps
    perturbation; a non-finite value is reported with the offending
    coordinate.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    params = np.asarray(params, dtype=np.float64)
    grad = np.empty_like(params)
    for k in range(params.size):
        shifted = params.copy()
        shifted[k] = params[k] + eps
        f_plus = float(scalar_fn(shifted))
        shifted[k] = params[k] - eps
        f_minus = float(scalar_fn(shifted))
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise ValueError(
                f"non-finite function value at coordinate {k}: "
                f"f(+eps)={f_plus}, f(-eps)={f_minus}"
            )
        grad[k] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(1e-12, ||a||_inf + ||n||_inf), a scale-free gradient gap."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(1e-12, np.abs(analytic).max(initial=0.0) + np.abs(numeric).max(initial=0.0))
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)
