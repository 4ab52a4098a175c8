"""Coarse beam sweeping and the per-slot recursive joint gain/direction update.

Initialization sweeps one beam per array element, then picks the codebook
direction maximizing the matched score and least-squares fits the gain.
Tracking is a stochastic-approximation recursion preconditioned by the
inverse Fisher matrix at the current estimate: at the true state with
noiseless data the update is an exact fixed point, and the drift's Jacobian
there is minus the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .arrays import (
    ArrayGeometry,
    ChannelParams,
    PilotConfig,
    ProbeSet,
    probe_matrix,
    sample_noise,
    steering_gradient,
    steering_vector,
)
from .crlb import CONDITION_CAP, fisher_matrix
from .errors import SingularInformationError

# Gain estimates below this magnitude make the information matrix useless.
GAIN_FLOOR = 1e-9


@dataclass(frozen=True)
class StepSchedule:
    """Step-size rule: epsilon/(k + k0) when diminishing, else a constant."""

    kind: str = "diminishing"
    epsilon: float = 1.0
    k0: float = 0.0
    constant_value: float = 0.7

    def __post_init__(self):
        if self.kind not in ("diminishing", "constant"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "diminishing" and (self.epsilon <= 0 or self.k0 < 0):
            raise ValueError("diminishing schedule needs epsilon > 0 and k0 >= 0")
        if self.kind == "constant" and self.constant_value <= 0:
            raise ValueError("constant step size must be positive")


def step_size(schedule: StepSchedule, k: int) -> float:
    """Step size for slot k >= 1."""
    if k < 1:
        raise ValueError(f"slot index must be >= 1, got {k}")
    if schedule.kind == "constant":
        return schedule.constant_value
    return schedule.epsilon / (k + schedule.k0)


@dataclass(frozen=True)
class Codebook:
    """Direction grid used by the initial sweep argmax."""

    m0: int
    n0: int
    points: np.ndarray

    @classmethod
    def for_geometry(cls, geom: ArrayGeometry, m0: Optional[int] = None, n0: Optional[int] = None) -> "Codebook":
        """Uniform m0 x n0 grid covering the reachable direction rectangle.

        Flat point index is (i - 1) * n0 + (j - 1), mirroring the element
        layout; defaults are twice the array dimensions.
        """
        m0 = 2 * geom.m if m0 is None else m0
        n0 = 2 * geom.n if n0 is None else n0
        if m0 < geom.m or n0 < geom.n:
            raise ValueError("codebook must be at least as large as the array")
        i = np.repeat(np.arange(1, m0 + 1), n0)
        j = np.tile(np.arange(1, n0 + 1), m0)
        points = np.stack([
            (2 * i - 1 - m0) * geom.m * geom.d1 / m0,
            (2 * j - 1 - n0) * geom.n * geom.d2 / n0,
        ], axis=1)
        points.setflags(write=False)
        return cls(m0=m0, n0=n0, points=points)


def sweep_matrix(geom: ArrayGeometry) -> np.ndarray:
    """One unit-norm sweep beam per element, aimed at a uniform direction grid."""
    i = np.repeat(np.arange(1, geom.m + 1), geom.n)
    j = np.tile(np.arange(1, geom.n + 1), geom.m)
    scale = 1.0 / math.sqrt(geom.size)
    cols = [
        scale * steering_vector(
            ((2 * ii - 1 - geom.m) * geom.d1, (2 * jj - 1 - geom.n) * geom.d2), geom
        )
        for ii, jj in zip(i, j)
    ]
    return np.stack(cols, axis=1)


def coarse_sweep(
    geom: ArrayGeometry,
    codebook: Codebook,
    pilot: PilotConfig,
    psi_true: ChannelParams,
    rng: Optional[np.random.Generator] = None,
) -> ChannelParams:
    """Initial estimate from one pilot per sweep beam.

    Scores every codebook direction by |a(chi)^H W y|, breaking ties in
    favour of the lowest flat codebook index, then least-squares fits the
    gain against the selected direction's swept response.  ``rng=None`` runs
    the sweep noiselessly (diagnostics and tests).
    """
    w = sweep_matrix(geom)
    y = pilot.s_p * psi_true.beta * (w.conj().T @ steering_vector(psi_true.x, geom))
    if rng is not None:
        y = y + sample_noise(pilot, rng, count=geom.size)

    # argmax over the codebook of |a(chi)^H (W y)|; ties -> lowest flat index
    wy = w @ y
    scores = np.abs(np.stack([
        np.vdot(steering_vector(p, geom), wy) for p in codebook.points
    ]))
    x0 = codebook.points[int(np.argmax(scores))]

    response = w.conj().T @ steering_vector(x0, geom)
    denom = np.vdot(response, response).real
    if denom < GAIN_FLOOR:
        raise SingularInformationError("swept response has zero norm; gain fit undefined")
    beta0 = np.vdot(response, y) / denom / pilot.s_p
    return ChannelParams(beta=complex(beta0), x=x0)


@dataclass(frozen=True)
class TrackerState:
    """Estimate after `slot` updates, with the fixed probing offsets and step rule."""

    psi: ChannelParams
    slot: int
    schedule: StepSchedule
    offsets: np.ndarray

    def __post_init__(self):
        d = np.array(self.offsets, dtype=float).reshape(3, 2)
        d.setflags(write=False)
        object.__setattr__(self, "offsets", d)


def make_probes(state: TrackerState, geom: ArrayGeometry) -> ProbeSet:
    """Probes for the next slot, centred on the current direction estimate."""
    return probe_matrix(state.psi.x, state.offsets, geom)


def _projections(psi_hat: ChannelParams, probes: ProbeSet):
    """e = W^H a(x_hat) and the two gain-scaled gradient projections."""
    a = steering_vector(psi_hat.x, probes.geom)
    da1, da2 = steering_gradient(psi_hat.x, probes.geom)
    wh = probes.w.conj().T
    e = wh @ a
    return e, psi_hat.beta * (wh @ da1), psi_hat.beta * (wh @ da2)


def _score(e, e1, e2, s_p: complex, resid: np.ndarray) -> np.ndarray:
    spc = np.conj(s_p)
    c0 = spc * np.vdot(e, resid)
    return np.array([
        c0.real,
        c0.imag,
        (spc * np.vdot(e1, resid)).real,
        (spc * np.vdot(e2, resid)).real,
    ])


def _checked_fisher(psi_hat: ChannelParams, probes: ProbeSet, pilot: PilotConfig) -> np.ndarray:
    if abs(psi_hat.beta) < GAIN_FLOOR:
        raise SingularInformationError("gain estimate too small to precondition the update")
    info = fisher_matrix(psi_hat, probes, pilot)
    if np.linalg.cond(info) > CONDITION_CAP:
        raise SingularInformationError("information matrix at the estimate is ill-conditioned")
    return info


def update(state: TrackerState, y: np.ndarray, pilot: PilotConfig, geom: ArrayGeometry) -> TrackerState:
    """One recursion step against the received 3-vector y.

    The innovation y - s_p*beta_hat*e is projected onto the response and
    gradient directions, preconditioned by the inverse information matrix,
    and applied with the schedule's step size for the new slot.
    """
    probes = make_probes(state, geom)
    e, e1, e2 = _projections(state.psi, probes)
    info = _checked_fisher(state.psi, probes, pilot)
    resid = np.asarray(y) - pilot.s_p * state.psi.beta * e
    k = state.slot + 1
    b_k = step_size(state.schedule, k)
    step = (2.0 / pilot.sigma2) * b_k * np.linalg.solve(info, _score(e, e1, e2, pilot.s_p, resid))
    psi_new = ChannelParams.from_vector(state.psi.as_vector() + step)
    return replace(state, psi=psi_new, slot=k)


def drift_f(
    psi_hat: ChannelParams,
    psi_true: ChannelParams,
    probes: ProbeSet,
    pilot: PilotConfig,
) -> np.ndarray:
    """Expected per-unit-step update direction at the given estimate.

    Vanishes exactly at psi_hat == psi_true; its Jacobian in the estimate is
    minus the identity there, which is what makes the recursion contract.
    """
    e, e1, e2 = _projections(psi_hat, probes)
    info = _checked_fisher(psi_hat, probes, pilot)
    mean_resid = pilot.s_p * (
        psi_true.beta * (probes.w.conj().T @ steering_vector(psi_true.x, probes.geom))
        - psi_hat.beta * e
    )
    return (2.0 / pilot.sigma2) * np.linalg.solve(info, _score(e, e1, e2, pilot.s_p, mean_resid))


def noise_term(
    psi_hat: ChannelParams,
    probes: ProbeSet,
    pilot: PilotConfig,
    z: np.ndarray,
) -> np.ndarray:
    """Zero-mean per-unit-step noise contribution for a given noise draw z.

    Linear in z; over the noise distribution its covariance is the inverse
    of the information matrix at the estimate.
    """
    e, e1, e2 = _projections(psi_hat, probes)
    info = _checked_fisher(psi_hat, probes, pilot)
    return (2.0 / pilot.sigma2) * np.linalg.solve(info, _score(e, e1, e2, pilot.s_p, np.asarray(z)))
