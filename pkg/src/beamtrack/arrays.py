"""Planar-array geometry, steering vectors, probing beamformers and the pilot observation model.

An M x N rectangular array lies in the x/y plane with element spacings given
in carrier wavelengths.  A single incoming path with elevation theta and
azimuth phi is summarised by the dimensionless direction parameters

    x1 = M * d1 * cos(theta) * cos(phi)
    x2 = N * d2 * cos(theta) * sin(phi)

and the per-element response is a pure phase progression in (x1, x2).
Element (m, n) (1-based) maps to flat index (m - 1) * N + (n - 1); this
row-major layout is the single ordering contract used everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DegenerateProbeError

TWO_PI = 2.0 * math.pi

# |w^H a| below this is treated as a vanishing probe response.
PROBE_RESPONSE_FLOOR = 1e-12


@dataclass(frozen=True)
class ArrayGeometry:
    """Rectangular planar array: m x n elements, spacings in wavelengths."""

    m: int
    n: int
    d1: float = 0.5
    d2: float = 0.5

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError(f"array dimensions must be >= 1, got {self.m} x {self.n}")
        if self.d1 <= 0 or self.d2 <= 0:
            raise ValueError(f"element spacings must be positive, got d1={self.d1}, d2={self.d2}")

    @property
    def size(self) -> int:
        return self.m * self.n

    @cached_property
    def _axis1_index(self) -> np.ndarray:
        """(m - 1) for every flat element index."""
        return np.repeat(np.arange(self.m, dtype=float), self.n)

    @cached_property
    def _axis2_index(self) -> np.ndarray:
        """(n - 1) for every flat element index."""
        return np.tile(np.arange(self.n, dtype=float), self.m)


@dataclass(frozen=True)
class AoA:
    """Angle of arrival: elevation theta in [0, pi/2], azimuth phi in [-pi, pi)."""

    theta: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= math.pi / 2:
            raise ValueError(f"theta must lie in [0, pi/2], got {self.theta}")
        if not -math.pi <= self.phi < math.pi:
            raise ValueError(f"phi must lie in [-pi, pi), got {self.phi}")


@dataclass(frozen=True)
class PilotConfig:
    """Known pilot symbol and complex noise variance per observation."""

    s_p: complex = 1.0 + 0.0j
    sigma2: float = 1.0

    def __post_init__(self):
        if abs(self.s_p) <= 0.0:
            raise ValueError("pilot symbol must be nonzero")
        if self.sigma2 <= 0.0:
            raise ValueError(f"noise variance must be positive, got {self.sigma2}")

    @classmethod
    def from_snr_db(cls, snr_db: float, s_p: complex = 1.0 + 0.0j) -> "PilotConfig":
        """Pilot with sigma2 chosen so that |s_p|^2 / sigma2 equals the given SNR."""
        return cls(s_p=s_p, sigma2=abs(s_p) ** 2 / 10.0 ** (snr_db / 10.0))

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(abs(self.s_p) ** 2 / self.sigma2)


@dataclass(frozen=True)
class ChannelParams:
    """Single-path channel state: complex gain beta and direction parameters x."""

    beta: complex
    x: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(2)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "beta", complex(self.beta))

    def as_vector(self) -> np.ndarray:
        """Real 4-vector [beta_re, beta_im, x1, x2]."""
        return np.array([self.beta.real, self.beta.imag, self.x[0], self.x[1]])

    @classmethod
    def from_vector(cls, psi) -> "ChannelParams":
        psi = np.asarray(psi, dtype=float).reshape(4)
        return cls(beta=complex(psi[0], psi[1]), x=psi[2:])


@dataclass(frozen=True)
class ProbeSet:
    """Three unit-norm probing beams centred on a direction estimate.

    Column i of ``w`` is the steering beam at ``base + offsets[i]`` scaled by
    1/sqrt(m*n), so every column has unit norm.
    """

    base: np.ndarray
    offsets: np.ndarray
    w: np.ndarray
    geom: ArrayGeometry


def aoa_to_direction(aoa: AoA, geom: ArrayGeometry) -> np.ndarray:
    """Map an angle of arrival to the direction parameter pair (x1, x2)."""
    c = math.cos(aoa.theta)
    return np.array([
        geom.m * geom.d1 * c * math.cos(aoa.phi),
        geom.n * geom.d2 * c * math.sin(aoa.phi),
    ])


def steering_vector(x, geom: ArrayGeometry) -> np.ndarray:
    """Array response a(x): element (m, n) carries phase 2*pi*((m-1)*x1/m + (n-1)*x2/n).

    Every entry has unit modulus, so ||a(x)||^2 == m * n exactly.
    """
    x = np.asarray(x, dtype=float)
    phase = TWO_PI * (geom._axis1_index * (x[0] / geom.m) + geom._axis2_index * (x[1] / geom.n))
    return np.exp(1j * phase)


def steering_gradient(x, geom: ArrayGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Entrywise derivatives (da/dx1, da/dx2) of the steering vector.

    d a_mn / dx1 = j*2*pi*(m-1)/m * a_mn and analogously along the second
    axis, so the (1, 1) element of both gradients is exactly zero.
    """
    a = steering_vector(x, geom)
    da1 = (1j * TWO_PI / geom.m) * geom._axis1_index * a
    da2 = (1j * TWO_PI / geom.n) * geom._axis2_index * a
    return da1, da2


def probe_matrix(base, offsets, geom: ArrayGeometry) -> ProbeSet:
    """Realize the three probing beams a(base + delta_i)/sqrt(m*n)."""
    base = np.asarray(base, dtype=float).reshape(2)
    offsets = np.asarray(offsets, dtype=float).reshape(3, 2)
    scale = 1.0 / math.sqrt(geom.size)
    w = np.stack(
        [scale * steering_vector(base + offsets[i], geom) for i in range(3)],
        axis=1,
    )
    return ProbeSet(base=base, offsets=offsets, w=w, geom=geom)


def noiseless_observation(psi: ChannelParams, probes: ProbeSet, pilot: PilotConfig) -> np.ndarray:
    """Mean observation s_p * beta * w_i^H a(x), one entry per probe."""
    a = steering_vector(psi.x, probes.geom)
    return pilot.s_p * psi.beta * (probes.w.conj().T @ a)


def sample_noise(pilot: PilotConfig, rng: np.random.Generator, count: int = 3) -> np.ndarray:
    """Circularly symmetric complex Gaussian noise with E|z|^2 = sigma2.

    Real and imaginary parts are independent N(0, sigma2/2).
    """
    scale = math.sqrt(pilot.sigma2 / 2.0)
    return scale * (rng.standard_normal(count) + 1j * rng.standard_normal(count))


def observe(
    psi: ChannelParams,
    probes: ProbeSet,
    pilot: PilotConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """One slot of noisy pilot observations y = s_p * beta * W^H a(x) + z."""
    return noiseless_observation(psi, probes, pilot) + sample_noise(pilot, rng)


def wrap_phase(angle):
    """Wrap angles to the interval (-pi, pi]."""
    angle = np.asarray(angle, dtype=float)
    wrapped = np.mod(angle + math.pi, TWO_PI) - math.pi
    return np.where(wrapped == -math.pi, math.pi, wrapped)


def phase_difference_residual(
    psi: ChannelParams,
    probes: ProbeSet,
    pilot: PilotConfig,
) -> np.ndarray:
    """Pairwise phases of the noiseless observations, wrapped to (-pi, pi].

    Returns [ang(y1)-ang(y2), ang(y1)-ang(y3), ang(y2)-ang(y3)].  These
    depend only on the probe offsets and the array shape, not on the channel
    state, so the three observation phases carry a single independent
    equation about the unknowns.
    """
    y = noiseless_observation(psi, probes, pilot)
    mags = np.abs(y)
    if np.any(mags < PROBE_RESPONSE_FLOOR):
        raise DegenerateProbeError(
            f"probe response magnitude below {PROBE_RESPONSE_FLOOR}; phase undefined"
        )
    ang = np.angle(y)
    return wrap_phase(np.array([ang[0] - ang[1], ang[0] - ang[2], ang[1] - ang[2]]))
