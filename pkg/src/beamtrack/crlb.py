"""Fisher information and the channel-vector estimation bound for three-pilot probing.

The unknown is the real 4-vector [beta_re, beta_im, x1, x2].  With unit-norm
steering-shaped probes W and complex Gaussian noise, the per-slot Fisher
matrix is built from the three projections

    g    = W^H a(x)
    gt1  = beta * W^H da/dx1
    gt2  = beta * W^H da/dx2

scaled by 2|s_p|^2/sigma2.  The bound on the mean squared channel-vector
error per element after k identical slots is

    (1/(m*n*k)) * trace(I^-1 T)

where T sums the outer products of the per-element sensitivity rows; T has a
closed form, and so do the entries of g and gt along each axis (Dirichlet
ratios), which gives a direction-free fast path used by the offset search.
All of these quantities are invariant to the true direction x, and the bound
is additionally invariant to beta.
"""

from __future__ import annotations

import math

import numpy as np

from .arrays import ArrayGeometry, ChannelParams, PilotConfig, ProbeSet, TWO_PI, steering_gradient, steering_vector
from .errors import OffsetDomainError, SingularInformationError

# Condition-number cap above which the 4x4 information matrix is rejected.
CONDITION_CAP = 1e12

# |delta| below which Dirichlet-type ratios switch to series limits.
_SERIES_BRANCH = 1e-3

_FACTORIALS = [math.factorial(p) for p in range(6)]


def _check_invertible(info: np.ndarray, context: str) -> None:
    if not np.all(np.isfinite(info)) or np.linalg.cond(info) > CONDITION_CAP:
        raise SingularInformationError(f"information matrix is singular or ill-conditioned ({context})")


def _assemble_fisher(g: np.ndarray, gt1: np.ndarray, gt2: np.ndarray, scale: float) -> np.ndarray:
    """Real symmetric 4x4 information matrix from the three projection vectors."""
    gg = np.vdot(g, g).real
    c1 = np.vdot(g, gt1)
    c2 = np.vdot(g, gt2)
    c12 = np.vdot(gt1, gt2).real
    return scale * np.array([
        [gg, 0.0, c1.real, c2.real],
        [0.0, gg, c1.imag, c2.imag],
        [c1.real, c1.imag, np.vdot(gt1, gt1).real, c12],
        [c2.real, c2.imag, c12, np.vdot(gt2, gt2).real],
    ])


def fisher_matrix(psi: ChannelParams, probes: ProbeSet, pilot: PilotConfig) -> np.ndarray:
    """Per-slot Fisher information at the given channel state and realized probes."""
    geom = probes.geom
    a = steering_vector(psi.x, geom)
    da1, da2 = steering_gradient(psi.x, geom)
    wh = probes.w.conj().T
    g = wh @ a
    gt1 = psi.beta * (wh @ da1)
    gt2 = psi.beta * (wh @ da2)
    return _assemble_fisher(g, gt1, gt2, 2.0 * abs(pilot.s_p) ** 2 / pilot.sigma2)


def weighting_matrix(geom: ArrayGeometry, beta: complex) -> np.ndarray:
    """Closed form of the 4x4 sensitivity weighting sum T.

    Equals sum_{m,n} v^H v with v = [1, j, j*2*pi*(m-1)*beta/m, j*2*pi*(n-1)*beta/n].
    Hermitian, with (1, 1) entry exactly m*n.
    """
    m, n = geom.m, geom.n
    beta = complex(beta)
    ab = abs(beta) ** 2
    bc = beta.conjugate()
    pi = math.pi
    r1 = (m - 1) / m
    r2 = (n - 1) / n
    return (m * n) * np.array([
        [1.0, 1.0j, 1j * pi * beta * r1, 1j * pi * beta * r2],
        [-1.0j, 1.0, pi * beta * r1, pi * beta * r2],
        [-1j * pi * bc * r1, pi * bc * r1,
         (2.0 / 3.0) * pi ** 2 * ab * (m - 1) * (2 * m - 1) / m ** 2,
         pi ** 2 * ab * (m - 1) * (n - 1) / (m * n)],
        [-1j * pi * bc * r2, pi * bc * r2,
         pi ** 2 * ab * (m - 1) * (n - 1) / (m * n),
         (2.0 / 3.0) * pi ** 2 * ab * (n - 1) * (2 * n - 1) / n ** 2],
    ])


def _bound_from_fisher(info: np.ndarray, weighting: np.ndarray, mn: int, k: int, context: str) -> float:
    if k < 1:
        raise ValueError(f"slot count k must be >= 1, got {k}")
    _check_invertible(info, context)
    tr = np.trace(np.linalg.solve(info, weighting))
    if abs(tr.imag) > 1e-10 * max(1.0, abs(tr.real)):
        raise SingularInformationError(f"trace has non-negligible imaginary part ({context})")
    return float(tr.real) / (mn * k)


def crlb(psi: ChannelParams, probes: ProbeSet, pilot: PilotConfig, k: int = 1) -> float:
    """Per-element channel-vector MSE bound after k slots of the given probing."""
    info = fisher_matrix(psi, probes, pilot)
    t = weighting_matrix(probes.geom, psi.beta)
    return _bound_from_fisher(info, t, probes.geom.size, k, "crlb")


def _dirichlet_ratio(delta: float, size: int) -> float:
    """sin(pi*delta) / sin(pi*delta/size), with removable singularities filled in."""
    nearest = size * round(delta / size)
    if abs(delta - nearest) < 1e-8:
        return size * math.cos(math.pi * delta) / math.cos(math.pi * delta / size)
    return math.sin(math.pi * delta) / math.sin(math.pi * delta / size)


def g_closed_form(delta, geom: ArrayGeometry) -> complex:
    """Probe response w^H a for offset delta, as a product of Dirichlet ratios.

    Equals (1/sqrt(m*n)) * sum_{m,n} exp(-j*2*pi*((m-1)*d1/m + (n-1)*d2/n)).
    """
    d1, d2 = float(delta[0]), float(delta[1])
    m, n = geom.m, geom.n
    phase = math.pi * ((m - 1) * d1 / m + (n - 1) * d2 / n)
    return complex(
        _dirichlet_ratio(d1, m) * _dirichlet_ratio(d2, n) / math.sqrt(m * n)
        * np.exp(-1j * phase)
    )


def _weighted_axis_sum(delta: float, size: int) -> complex:
    """sum_{p=0}^{size-1} j*(2*pi/size)*p*exp(-j*2*pi*delta*p/size).

    The rational closed form cancels catastrophically near delta = 0, so a
    short series in delta takes over inside the branch window.
    """
    if abs(delta) <= _SERIES_BRANCH:
        p = np.arange(size, dtype=float)
        t = -1j * TWO_PI * delta / size
        acc = 0.0 + 0.0j
        for order in range(6):
            acc += t ** order / _FACTORIALS[order] * np.sum(p ** (order + 1))
        return complex(1j * TWO_PI / size * acc)
    u = np.exp(-1j * TWO_PI * delta / size)
    kernel = (size - 1) * np.exp(-1j * TWO_PI * delta) \
        - size * np.exp(-1j * TWO_PI * (size - 1) * delta / size) + 1.0
    return complex(1j * TWO_PI / size * kernel / (1.0 - u) ** 2 * u)


def _require_main_lobe(delta) -> None:
    if not (abs(delta[0]) < 1.0 and abs(delta[1]) < 1.0):
        raise OffsetDomainError(f"offset {tuple(delta)} outside the open box (-1, 1)^2")


def gtilde_closed_form(delta, geom: ArrayGeometry, beta: complex, axis: int = 0) -> complex:
    """Gradient projection beta * w^H da/dx_axis for offset delta.

    Only offsets inside the main-lobe box (-1, 1)^2 are supported; the
    singularity handling does not cover the periodic images outside it.
    """
    _require_main_lobe(delta)
    d1, d2 = float(delta[0]), float(delta[1])
    m, n = geom.m, geom.n
    if axis == 0:
        along, across = (d1, m), (d2, n)
    elif axis == 1:
        along, across = (d2, n), (d1, m)
    else:
        raise ValueError(f"axis must be 0 or 1, got {axis}")
    col = _dirichlet_ratio(*across) * np.exp(
        -1j * math.pi * (across[1] - 1) * across[0] / across[1]
    )
    return complex(beta / math.sqrt(m * n) * _weighted_axis_sum(*along) * col)


def fisher_from_offsets(offsets, beta: complex, geom: ArrayGeometry, pilot: PilotConfig) -> np.ndarray:
    """Fisher matrix via the closed-form probe responses; direction-free fast path."""
    offsets = np.asarray(offsets, dtype=float).reshape(3, 2)
    g = np.array([g_closed_form(d, geom) for d in offsets])
    gt1 = np.array([gtilde_closed_form(d, geom, beta, axis=0) for d in offsets])
    gt2 = np.array([gtilde_closed_form(d, geom, beta, axis=1) for d in offsets])
    return _assemble_fisher(g, gt1, gt2, 2.0 * abs(pilot.s_p) ** 2 / pilot.sigma2)


DEFAULT_BETA = complex(1.0, 1.0) / math.sqrt(2.0)


def crlb_from_offsets(
    offsets,
    geom: ArrayGeometry,
    pilot: PilotConfig,
    k: int = 1,
    beta: complex = DEFAULT_BETA,
) -> float:
    """Per-element bound for a probe design given only its offsets.

    The result does not depend on beta; the default is an arbitrary unit gain.
    """
    info = fisher_from_offsets(offsets, beta, geom, pilot)
    t = weighting_matrix(geom, beta)
    return _bound_from_fisher(info, t, geom.size, k, "crlb_from_offsets")


# --- large-array limits ---------------------------------------------------

def _sinc(x: float) -> float:
    """sin(x)/x with the removable singularity filled in."""
    return float(np.sinc(x / math.pi))


def _limit_gradient_kernel(delta: float) -> complex:
    """(exp(-j*t)*(1 + j*t) - 1) / t^2 with t = 2*pi*delta; series near zero."""
    t = TWO_PI * delta
    if abs(delta) <= _SERIES_BRANCH:
        return complex(0.5 - 1j * t / 3.0 - t ** 2 / 8.0 + 1j * t ** 3 / 30.0 + t ** 4 / 144.0)
    return complex((np.exp(-1j * t) * (1.0 + 1j * t) - 1.0) / t ** 2)


def limit_g(delta) -> complex:
    """Large-array limit of w^H a / sqrt(m*n) at a fixed offset."""
    d1, d2 = float(delta[0]), float(delta[1])
    return complex(
        _sinc(math.pi * d1) * _sinc(math.pi * d2) * np.exp(-1j * math.pi * (d1 + d2))
    )


def limit_gtilde(delta, beta: complex, axis: int = 0) -> complex:
    """Large-array limit of beta * w^H da/dx_axis / sqrt(m*n)."""
    d1, d2 = float(delta[0]), float(delta[1])
    if axis == 0:
        along, across = d1, d2
    elif axis == 1:
        along, across = d2, d1
    else:
        raise ValueError(f"axis must be 0 or 1, got {axis}")
    return complex(
        1j * TWO_PI * beta * _sinc(math.pi * across) * np.exp(-1j * math.pi * across)
        * _limit_gradient_kernel(along)
    )


def limit_weighting(beta: complex) -> np.ndarray:
    """Large-array limit of the weighting sum divided by m*n."""
    beta = complex(beta)
    ab = abs(beta) ** 2
    bc = beta.conjugate()
    pi = math.pi
    return np.array([
        [1.0, 1.0j, 1j * pi * beta, 1j * pi * beta],
        [-1.0j, 1.0, pi * beta, pi * beta],
        [-1j * pi * bc, pi * bc, (4.0 / 3.0) * pi ** 2 * ab, pi ** 2 * ab],
        [-1j * pi * bc, pi * bc, pi ** 2 * ab, (4.0 / 3.0) * pi ** 2 * ab],
    ])


def asymptotic_crlb(beta: complex, offsets, pilot: PilotConfig, k: int = 1) -> float:
    """Large-array limit of (m*n) times the per-element bound for a probe design.

    Array-size free: compare against ``m * n * crlb_from_offsets(...)`` for a
    finite geometry.  The value does not depend on beta (which must be
    nonzero for the information matrix to be invertible).
    """
    offsets = np.asarray(offsets, dtype=float).reshape(3, 2)
    for d in offsets:
        _require_main_lobe(d)
    if beta == 0:
        raise SingularInformationError("zero channel gain leaves the direction rows unobserved")
    g = np.array([limit_g(d) for d in offsets])
    gt1 = np.array([limit_gtilde(d, beta, axis=0) for d in offsets])
    gt2 = np.array([limit_gtilde(d, beta, axis=1) for d in offsets])
    info = _assemble_fisher(g, gt1, gt2, 2.0 * abs(pilot.s_p) ** 2 / pilot.sigma2)
    return _bound_from_fisher(info, limit_weighting(beta), 1, k, "asymptotic_crlb")
