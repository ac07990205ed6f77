"""Geometry primitives on the unit hypersphere.

Positions are unit-norm 1-D float64 arrays; momenta live in the tangent
space of their base point (inner product with the base is zero). All
functions are pure, so they are safe under any amount of concurrency.
"""

from __future__ import annotations

import numpy as np

from .errors import ZeroVectorError

# Anything below this norm is treated as the zero vector (unit-scale data).
ZERO_NORM_TOL = 1e-12


def normalize(v: np.ndarray) -> np.ndarray:
    """Return v / ||v||_2.

    Raises ZeroVectorError when ||v|| is at machine-epsilon scale, which
    signals a degenerate input (e.g. the midpoint of antipodal prototypes).
    """
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n <= ZERO_NORM_TOL:
        raise ZeroVectorError(f"cannot normalize vector with norm {n:.3e}")
    return v / n


def project_tangent(q: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Project q onto the tangent space at z: (I - z z^T) q."""
    q = np.asarray(q, dtype=float)
    z = np.asarray(z, dtype=float)
    return q - z * (z @ q)


def geodesic_step(
    z: np.ndarray, q: np.ndarray, eps: float
) -> tuple[np.ndarray, np.ndarray]:
    """Advance (z, q) along the great circle through z in direction q.

    The position rotates by arc length ||q||*eps and the momentum is
    transported with it:

        z' = z cos(||q|| eps) + (q/||q||) sin(||q|| eps)
        q' = -z ||q|| sin(||q|| eps) + q cos(||q|| eps)

    The rotation preserves ||q|| (kinetic energy) and keeps q' tangent at
    z'. Zero momentum is a valid limit and returns (z, q) unchanged. The
    position is re-normalized on return so drift cannot accumulate over
    long trajectories.
    """
    z = np.asarray(z, dtype=float)
    q = np.asarray(q, dtype=float)
    speed = float(np.linalg.norm(q))
    if speed == 0.0:
        return z, q
    arc = speed * eps
    c = np.cos(arc)
    s = np.sin(arc)
    z_new = z * c + (q / speed) * s
    q_new = -z * (speed * s) + q * c
    return normalize(z_new), q_new
