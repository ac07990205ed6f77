"""Markov transition kernels on the unit hypersphere.

Five variants share one Metropolis-Hastings skeleton: spherical HMC
(default), random-walk MH, MALA (HMC with a single integrator step),
mMALA, and RMHMC (momentum drawn with a covariance estimated from the
recently accepted positions). A proposal is accepted only if it passes
both the MH test and the hard-margin test, and rejected proposals are
discarded: the chain keeps its current position and contributes nothing
for that round.

Kernels only need an energy object exposing ``potential(z)``,
``value_and_grad(z)`` and ``margin_exceeds(z, t_minus)``, so they can be
validated against analytic stand-in targets independently of the kNN
energy. No burn-in or step-size adaptation is performed here: chains are
meant to roam, not to converge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import BadConfigError, DegenerateDensityError
from .sphere import geodesic_step, normalize, project_tangent
from .store import ClusterPair

DEGENERATE_RETRIES = 3
COV_RIDGE = 1e-6


class SamplerVariant(str, Enum):
    RANDOM_WALK = "random_walk"
    HMC = "hmc"
    MALA = "mala"
    MMALA = "mmala"
    RMHMC = "rmhmc"


@dataclass
class HmcConfig:
    """Sampler hyperparameters.

    MALA and mMALA are single-step integrators by definition, so selecting
    either forces ``leapfrog_steps`` to 1.
    """

    leapfrog_steps: int = 3
    step_size: float = 0.1
    rounds: int = 5
    variant: SamplerVariant = SamplerVariant.HMC
    rng_seed: int = 0
    history_window: int = 2  # J: how many previous states feed the RMHMC covariance

    def __post_init__(self):
        self.variant = SamplerVariant(self.variant)
        if self.leapfrog_steps < 1:
            raise BadConfigError(f"leapfrog_steps must be >= 1, got {self.leapfrog_steps}")
        if self.step_size < 0:
            raise BadConfigError(f"step_size must be nonnegative, got {self.step_size}")
        if self.rounds < 1:
            raise BadConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.history_window < 1:
            raise BadConfigError(f"history_window must be >= 1, got {self.history_window}")
        if self.variant in (SamplerVariant.MALA, SamplerVariant.MMALA):
            self.leapfrog_steps = 1


@dataclass
class ChainState:
    """One Markov chain: current position, its pair, threshold, and history."""

    position: np.ndarray
    pair: ClusterPair
    t_minus: float
    rng: np.random.Generator
    history: list[tuple[int, np.ndarray]] = field(default_factory=list)
    round_index: int = 0


@dataclass
class TransitionRecord:
    proposed: np.ndarray
    h_init: float
    h_prop: float
    alpha: float
    mh_accept: bool
    margin_pass: bool
    accepted: bool


def draw_momentum(z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Standard-normal draw projected onto the tangent space at z."""
    return project_tangent(rng.standard_normal(z.shape[0]), z)


def hamiltonian(ctx, z: np.ndarray, q: np.ndarray) -> float:
    """Total energy: potential(z) + ||q||^2 / 2."""
    return ctx.potential(z) + 0.5 * float(q @ q)


def _integrate(
    ctx, z0: np.ndarray, q0: np.ndarray, steps: int, step_size: float
) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Leapfrog trajectory that also reports the endpoint potentials.

    Returns (z, q, potential(z0), potential(z)). Potential and gradient
    come from a single neighbor query per point, and the gradient at the
    end of one update is reused at the start of the next, so the whole
    trajectory costs steps + 1 energy evaluations.
    """
    z = np.asarray(z0, dtype=float)
    q = np.asarray(q0, dtype=float)
    eps = step_size
    u, grad = ctx.value_and_grad(z)
    u_first = u
    for _ in range(steps):
        q = q - 0.5 * eps * project_tangent(grad, z)
        z, q = geodesic_step(z, q, eps)
        u, grad = ctx.value_and_grad(z)
        q = q - 0.5 * eps * project_tangent(grad, z)
    return z, q, u_first, u


def leapfrog_trajectory(
    ctx, z0: np.ndarray, q0: np.ndarray, steps: int, step_size: float
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``steps`` leapfrog updates on the sphere.

    Each update is a half momentum kick with the tangent-projected
    gradient, a great-circle rotation of position and momentum, and a
    second half kick at the new position.
    """
    z, q, _, _ = _integrate(ctx, z0, q0, steps, step_size)
    return z, q


def _momentum_with_history(state: ChainState, cfg: HmcConfig) -> np.ndarray:
    """Momentum from N(0, Sigma*) with Sigma* estimated over recent accepted positions.

    Falls back to the identity covariance (a plain tangent normal) until
    at least two positions have been accepted. A small ridge keeps the
    estimate positive definite even for collinear histories.
    """
    z = state.position
    if len(state.history) < 2:
        return draw_momentum(z, state.rng)
    window = np.array([p for _, p in state.history[-(cfg.history_window + 1):]])
    cov = np.cov(window, rowvar=False) + COV_RIDGE * np.eye(z.shape[0])
    chol = np.linalg.cholesky(cov)
    return project_tangent(chol @ state.rng.standard_normal(z.shape[0]), z)


def _mh_alpha(h_init: float, h_prop: float) -> float:
    try:
        return math.exp(h_init - h_prop)
    except OverflowError:
        return math.inf


def _finish(state: ChainState, rec: TransitionRecord) -> tuple[ChainState, TransitionRecord]:
    state.round_index += 1
    if rec.accepted:
        state.position = rec.proposed
        state.history.append((state.round_index, rec.proposed))
    return state, rec


def _degenerate_rejection(state: ChainState) -> tuple[ChainState, TransitionRecord]:
    rec = TransitionRecord(
        proposed=state.position.copy(),
        h_init=math.nan,
        h_prop=math.nan,
        alpha=0.0,
        mh_accept=False,
        margin_pass=False,
        accepted=False,
    )
    return _finish(state, rec)


def _hamiltonian_transition(
    ctx, state: ChainState, cfg: HmcConfig, with_history_cov: bool
) -> tuple[ChainState, TransitionRecord]:
    z = state.position
    for _ in range(DEGENERATE_RETRIES):
        if with_history_cov:
            q = _momentum_with_history(state, cfg)
        else:
            q = draw_momentum(z, state.rng)
        u = state.rng.uniform()
        try:
            z_prop, q_prop, u_init, u_prop = _integrate(
                ctx, z, q, cfg.leapfrog_steps, cfg.step_size
            )
        except DegenerateDensityError:
            continue  # resample momentum and retry
        h_init = u_init + 0.5 * float(q @ q)
        h_prop = u_prop + 0.5 * float(q_prop @ q_prop)
        alpha = _mh_alpha(h_init, h_prop)
        mh_accept = u < min(1.0, alpha)
        margin_pass = ctx.margin_exceeds(z_prop, state.t_minus)
        rec = TransitionRecord(
            proposed=z_prop,
            h_init=h_init,
            h_prop=h_prop,
            alpha=alpha,
            mh_accept=mh_accept,
            margin_pass=margin_pass,
            accepted=mh_accept and margin_pass,
        )
        return _finish(state, rec)
    return _degenerate_rejection(state)


def hmc_transition(ctx, state: ChainState, cfg: HmcConfig) -> tuple[ChainState, TransitionRecord]:
    """One spherical-HMC round: momentum draw, leapfrog, MH plus margin test."""
    return _hamiltonian_transition(ctx, state, cfg, with_history_cov=False)


def mala_transition(ctx, state: ChainState, cfg: HmcConfig) -> tuple[ChainState, TransitionRecord]:
    return _hamiltonian_transition(ctx, state, cfg, with_history_cov=False)


def mmala_transition(ctx, state: ChainState, cfg: HmcConfig) -> tuple[ChainState, TransitionRecord]:
    return _hamiltonian_transition(ctx, state, cfg, with_history_cov=True)


def rmhmc_transition(ctx, state: ChainState, cfg: HmcConfig) -> tuple[ChainState, TransitionRecord]:
    return _hamiltonian_transition(ctx, state, cfg, with_history_cov=True)


def random_walk_transition(
    ctx, state: ChainState, cfg: HmcConfig
) -> tuple[ChainState, TransitionRecord]:
    """Gaussian-perturbation proposal re-projected to the sphere, then MH."""
    z = state.position
    for _ in range(DEGENERATE_RETRIES):
        g = state.rng.standard_normal(z.shape[0])
        u = state.rng.uniform()
        z_prop = normalize(z + cfg.step_size * g) if cfg.step_size > 0 else z.copy()
        try:
            u_init = ctx.potential(z)
            u_prop = ctx.potential(z_prop)
        except DegenerateDensityError:
            continue
        alpha = _mh_alpha(u_init, u_prop)
        mh_accept = u < min(1.0, alpha)
        margin_pass = ctx.margin_exceeds(z_prop, state.t_minus)
        rec = TransitionRecord(
            proposed=z_prop,
            h_init=u_init,
            h_prop=u_prop,
            alpha=alpha,
            mh_accept=mh_accept,
            margin_pass=margin_pass,
            accepted=mh_accept and margin_pass,
        )
        return _finish(state, rec)
    return _degenerate_rejection(state)


_TRANSITIONS = {
    SamplerVariant.RANDOM_WALK: random_walk_transition,
    SamplerVariant.HMC: hmc_transition,
    SamplerVariant.MALA: mala_transition,
    SamplerVariant.MMALA: mmala_transition,
    SamplerVariant.RMHMC: rmhmc_transition,
}


def transition(ctx, state: ChainState, cfg: HmcConfig) -> tuple[ChainState, TransitionRecord]:
    """Advance one round with the kernel selected by ``cfg.variant``."""
    return _TRANSITIONS[cfg.variant](ctx, state, cfg)
