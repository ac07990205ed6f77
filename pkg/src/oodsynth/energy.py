"""OOD-ness potential over a cluster pair, its gradient, and the vMF KDE.

The OOD-ness of a point z against a pair of ID classes is the mean of its
two k-th-nearest-neighbor distances; the sampler's potential energy is the
negative log of that mean. The constant that an unnormalized density would
contribute is absorbed into the log, so exp(-potential) round-trips to the
OOD-ness exactly.

Two gradient conventions are provided:

* ``analytic`` -(u_hat + v_hat) / (d_u + d_v), the exact derivative of
               the potential when the neighbor indices are held fixed;
* ``scaled``   -(d_u + d_v)/2 * (u_hat + v_hat), the unit directions
               scaled by the OOD-ness itself (equivalently, the negative
               gradient of ood_prob^2 rather than of -log ood_prob).

Both share the direction u_hat + v_hat; their magnitudes differ by the
factor 2 * ood_prob^2. Only the analytic mode conserves the Hamiltonian
along leapfrog trajectories, which is what keeps the MH acceptance rate
near 1; the scaled mode is kept selectable for comparison. The neighbor
indices are re-queried at every evaluation, so the potential is treated
as piecewise smooth.

The ID probability is a kernel density estimate with the (unnormalized)
von Mises-Fisher kernel exp(kappa * mu^T z); the normalizer is class
independent and cancels in the final softmax, so Bessel functions are
never needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateDensityError, EmptyBufferError, InsufficientDataError
from .store import ClusterPair, IdStore


def vmf_kernel(z: np.ndarray, center: np.ndarray, kappa: float) -> float:
    """Unnormalized von Mises-Fisher kernel exp(kappa * center^T z)."""
    return float(np.exp(kappa * (np.asarray(center, dtype=float) @ np.asarray(z, dtype=float))))


def log_class_densities(store: IdStore, z: np.ndarray, kappa: float) -> np.ndarray:
    """log of the per-class vMF kernel density estimates at z (length C).

    One matvec against the concatenated buffers, then a log-sum-exp per
    class via shifted reduceat; stable for any positive bandwidth.
    """
    z = np.asarray(z, dtype=float)
    offsets = store.class_offsets()
    counts = np.diff(offsets)
    if np.any(counts == 0):
        empty = np.flatnonzero(counts == 0).tolist()
        raise EmptyBufferError(f"classes {empty} have no embeddings for the density estimate")
    ips = kappa * (store.all_embeddings() @ z)
    starts = offsets[:-1]
    highs = np.maximum.reduceat(ips, starts)
    sums = np.add.reduceat(np.exp(ips - np.repeat(highs, counts)), starts)
    return highs + np.log(sums) - np.log(counts)


def id_prob(store: IdStore, z: np.ndarray, kappa: float) -> np.ndarray:
    """Per-class ID probability vector: softmax of the class KDE values."""
    logs = log_class_densities(store, z, kappa)
    p = np.exp(logs - logsumexp(logs))
    return p / p.sum()


def neg_log_max_id_prob(store: IdStore, z: np.ndarray, kappa: float) -> float:
    """-log(max_c P_c^ID(z)), the quantity compared against the margin threshold."""
    logs = log_class_densities(store, z, kappa)
    return float(logsumexp(logs) - logs.max())


def hard_margin_threshold(
    store: IdStore, pair: ClusterPair, kappa: float, delta: float
) -> float:
    """Rejection threshold t_- at the pair midpoint: -log max_c P_c^ID(b) - delta."""
    b = store.midpoint(pair)
    return neg_log_max_id_prob(store, b, kappa) - delta


def passes_margin(store: IdStore, z: np.ndarray, kappa: float, t_minus: float) -> bool:
    """True iff z is sufficiently unlike every ID class: -log max_c P_c^ID(z) > t_-."""
    return neg_log_max_id_prob(store, z, kappa) > t_minus


@dataclass(frozen=True)
class EnergyContext:
    """Frozen view of the OOD-ness energy for one cluster pair.

    Pure functions over a store snapshot; safe to evaluate concurrently
    across chains.
    """

    store: IdStore
    pair: ClusterPair
    k: int
    kappa: float
    grad_mode: str = "analytic"

    def __post_init__(self):
        for c in (self.pair.u, self.pair.v):
            if self.store.count(c) < self.k:
                raise InsufficientDataError(
                    f"class {c} holds {self.store.count(c)} embeddings, fewer than k={self.k}"
                )
        if self.grad_mode not in ("analytic", "scaled"):
            raise ValueError(f"unknown grad_mode {self.grad_mode!r}")

    def _pair_query(self, z: np.ndarray):
        d_u, n_u = self.store.knn_distance(self.pair.u, z, self.k)
        d_v, n_v = self.store.knn_distance(self.pair.v, z, self.k)
        return d_u, n_u, d_v, n_v

    def ood_prob(self, z: np.ndarray) -> float:
        """Mean of the two per-class k-th-neighbor distances."""
        d_u, _, d_v, _ = self._pair_query(z)
        return 0.5 * (d_u + d_v)

    def potential(self, z: np.ndarray) -> float:
        """-log(ood_prob(z)); may be negative since distances can exceed 1."""
        p = self.ood_prob(z)
        if p == 0.0:
            raise DegenerateDensityError("z coincides with buffered points of both classes")
        return -math.log(p)

    def grad_potential(self, z: np.ndarray, mode: str | None = None) -> np.ndarray:
        _, grad = self.value_and_grad(z, mode)
        return grad

    def value_and_grad(
        self, z: np.ndarray, mode: str | None = None
    ) -> tuple[float, np.ndarray]:
        """Potential and its ambient-space gradient from one neighbor query."""
        mode = mode or self.grad_mode
        z = np.asarray(z, dtype=float)
        d_u, n_u, d_v, n_v = self._pair_query(z)
        if d_u == 0.0 or d_v == 0.0:
            raise DegenerateDensityError("z coincides with a k-th nearest neighbor")
        p = 0.5 * (d_u + d_v)
        value = -math.log(p)
        dirs = (z - n_u) / d_u + (z - n_v) / d_v
        if mode == "scaled":
            grad = -p * dirs
        else:
            grad = -dirs / (2.0 * p)
        return value, grad

    def margin_exceeds(self, z: np.ndarray, t_minus: float) -> bool:
        return passes_margin(self.store, z, self.kappa, t_minus)
