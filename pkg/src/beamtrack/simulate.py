"""Monte-Carlo experiments: scenario definitions, trial execution, aggregation, export.

Determinism contract: every trial draws from private substreams derived from
(seed, trial index, stream role), so results are byte-identical for a given
(scenario, seed) regardless of the worker count.  Worker count comes from
the BEAMTRACK_WORKERS environment variable (default 1, serial).
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .arrays import (
    AoA,
    ArrayGeometry,
    ChannelParams,
    PilotConfig,
    aoa_to_direction,
    noiseless_observation,
    observe,
    steering_vector,
)
from .crlb import DEFAULT_BETA, crlb_from_offsets
from .errors import ConfigError, SingularInformationError
from .offsets import REFERENCE_OFFSETS
from .tracking import Codebook, StepSchedule, TrackerState, coarse_sweep, make_probes, update

WORKERS_ENV = "BEAMTRACK_WORKERS"

# Substream roles per trial.
_STREAM_SCENE = 0   # initial angle draw
_STREAM_OBS = 1     # sweep + tracking observation noise
_STREAM_DYN = 2     # random-walk increments and fading


def _substream(seed: int, trial: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial, stream)))


@dataclass(frozen=True)
class StaticScenario:
    """Fixed channel, angle drawn uniformly per trial, diminishing steps by default."""

    geom: ArrayGeometry = ArrayGeometry(8, 8)
    pilot: PilotConfig = PilotConfig()
    beta: complex = DEFAULT_BETA
    schedule: StepSchedule = StepSchedule()
    slots: int = 500
    trials: int = 1000
    seed: int = 0
    m0: Optional[int] = None
    n0: Optional[int] = None
    offsets: np.ndarray = field(default=REFERENCE_OFFSETS)
    exclude_diverged: bool = False
    noiseless: bool = False            # diagnostic: exact observations
    aoa: Optional[tuple] = None        # diagnostic: fixed (theta, phi) instead of sampling

    def __post_init__(self):
        if self.slots < 1 or self.trials < 1:
            raise ConfigError("slots and trials must both be >= 1")
        d = np.array(self.offsets, dtype=float).reshape(3, 2)
        d.setflags(write=False)
        object.__setattr__(self, "offsets", d)
        object.__setattr__(self, "beta", complex(self.beta))

    @property
    def kind(self) -> str:
        return "static"

    def describe(self) -> dict:
        """JSON-serializable echo of every field that affects the run."""
        return {
            "kind": self.kind,
            "m": self.geom.m, "n": self.geom.n,
            "d1": self.geom.d1, "d2": self.geom.d2,
            "s_p": [self.pilot.s_p.real, self.pilot.s_p.imag],
            "sigma2": self.pilot.sigma2,
            "beta": [self.beta.real, self.beta.imag],
            "schedule": {
                "kind": self.schedule.kind,
                "epsilon": self.schedule.epsilon,
                "k0": self.schedule.k0,
                "constant_value": self.schedule.constant_value,
            },
            "slots": self.slots,
            "trials": self.trials,
            "seed": self.seed,
            "m0": self.m0, "n0": self.n0,
            "offsets": self.offsets.tolist(),
            "exclude_diverged": self.exclude_diverged,
            "noiseless": self.noiseless,
            "aoa": list(self.aoa) if self.aoa is not None else None,
        }


@dataclass(frozen=True)
class DynamicScenario(StaticScenario):
    """Random-walk angles with Rician fading; constant step size is the usual choice."""

    schedule: StepSchedule = StepSchedule(kind="constant", constant_value=0.7)
    slots: int = 200
    delta_std: float = 0.0
    rician_k_db: float = 15.0

    def __post_init__(self):
        super().__post_init__()
        if self.delta_std < 0:
            raise ConfigError("delta_std must be >= 0")

    @property
    def kind(self) -> str:
        return "dynamic"

    def describe(self) -> dict:
        d = super().describe()
        d["delta_std"] = self.delta_std
        d["rician_k_db"] = self.rician_k_db
        return d


@dataclass
class MseCurve:
    """Per-slot Monte-Carlo means with the running divergence fraction.

    ``mse_all`` averages every trial; ``mse_converged`` only those that never
    hit a numerical divergence and whose final direction error stayed inside
    the unit main-lobe box.  ``mse_mean`` selects between them according to
    ``exclude_diverged``.
    """

    slots: np.ndarray
    mse_all: np.ndarray
    mse_converged: np.ndarray
    diverged_fraction: np.ndarray
    crlb_ref: Optional[np.ndarray]
    trials: int
    converged_trials: int
    scenario: dict
    seed: int
    exclude_diverged: bool = False

    @property
    def mse_mean(self) -> np.ndarray:
        return self.mse_converged if self.exclude_diverged else self.mse_all


def rician_step(beta_los: complex, k_factor_db: float, rng: np.random.Generator) -> complex:
    """One fading draw: fixed line-of-sight phasor plus fresh diffuse scattering.

    The line-of-sight component keeps the direction of ``beta_los`` with
    power K/(K+1); the diffuse part is complex Gaussian with power 1/(K+1),
    so the mean power is 1.  An infinite K-factor returns the pure
    line-of-sight value (and still consumes one draw, keeping streams
    aligned across K values).
    """
    if abs(beta_los) == 0:
        raise ValueError("line-of-sight phasor must be nonzero")
    los = beta_los / abs(beta_los)
    z = (rng.standard_normal() + 1j * rng.standard_normal()) / math.sqrt(2.0)
    k_lin = 10.0 ** (k_factor_db / 10.0)
    if math.isinf(k_lin):
        return los
    return math.sqrt(k_lin / (k_lin + 1.0)) * los + math.sqrt(1.0 / (k_lin + 1.0)) * z


def _sample_aoa(scenario: StaticScenario, rng: np.random.Generator) -> AoA:
    if scenario.aoa is not None:
        return AoA(*scenario.aoa)
    return AoA(theta=rng.uniform(0.0, math.pi / 2), phi=rng.uniform(-math.pi, math.pi))


def _wrap_azimuth(phi: float) -> float:
    return (phi + math.pi) % (2.0 * math.pi) - math.pi


def _run_trial(scenario: StaticScenario, trial: int):
    """Per-slot squared channel error, per-slot diverged flags, converged flag."""
    geom, pilot = scenario.geom, scenario.pilot
    dynamic = isinstance(scenario, DynamicScenario)

    rng_scene = _substream(scenario.seed, trial, _STREAM_SCENE)
    rng_obs = None if scenario.noiseless else _substream(scenario.seed, trial, _STREAM_OBS)
    rng_dyn = _substream(scenario.seed, trial, _STREAM_DYN) if dynamic else None

    aoa = _sample_aoa(scenario, rng_scene)
    theta, phi = aoa.theta, aoa.phi
    x_true = aoa_to_direction(aoa, geom)
    psi_true = ChannelParams(scenario.beta, x_true)

    codebook = Codebook.for_geometry(geom, scenario.m0, scenario.n0)
    psi0 = coarse_sweep(geom, codebook, pilot, psi_true, rng_obs)
    state = TrackerState(psi=psi0, slot=0, schedule=scenario.schedule, offsets=scenario.offsets)

    mn = geom.size
    errors = np.empty(scenario.slots)
    diverged = np.zeros(scenario.slots, dtype=bool)
    diverged_at: Optional[int] = None
    h_true = psi_true.beta * steering_vector(psi_true.x, geom)

    for k in range(1, scenario.slots + 1):
        if dynamic:
            dth, dph = rng_dyn.standard_normal(2) * scenario.delta_std
            if scenario.delta_std > 0.0:
                # clamp/wrap arithmetic is skipped for a frozen walk so the
                # degenerate case stays bitwise identical to the static run
                theta = min(max(theta + dth, 0.0), math.pi / 2)
                phi = _wrap_azimuth(phi + dph)
                x_true = aoa_to_direction(AoA(theta, phi), geom)
            beta_k = rician_step(scenario.beta, scenario.rician_k_db, rng_dyn)
            psi_true = ChannelParams(beta_k, x_true)
            h_true = psi_true.beta * steering_vector(psi_true.x, geom)

        if diverged_at is None:
            probes = make_probes(state, geom)
            if rng_obs is None:
                y = noiseless_observation(psi_true, probes, pilot)
            else:
                y = observe(psi_true, probes, pilot, rng_obs)
            try:
                state = update(state, y, pilot, geom)
            except SingularInformationError:
                diverged_at = k

        h_hat = state.psi.beta * steering_vector(state.psi.x, geom)
        errors[k - 1] = np.linalg.norm(h_hat - h_true) ** 2 / mn
        diverged[k - 1] = diverged_at is not None

    in_lobe = bool(np.all(np.abs(state.psi.x - psi_true.x) < 1.0))
    return errors, diverged, diverged_at is None and in_lobe


def _worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        workers = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    return max(1, workers)


def _collect_trials(scenario: StaticScenario):
    workers = _worker_count()
    trials = range(scenario.trials)
    if workers == 1:
        results = [_run_trial(scenario, t) for t in trials]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, [scenario] * scenario.trials, trials, chunksize=8))
    errors = np.stack([r[0] for r in results])
    diverged = np.stack([r[1] for r in results])
    converged = np.array([r[2] for r in results], dtype=bool)
    return errors, diverged, converged


def _aggregate(scenario: StaticScenario, crlb_ref: Optional[np.ndarray]) -> MseCurve:
    errors, diverged, converged = _collect_trials(scenario)
    n_conv = int(converged.sum())
    mse_conv = errors[converged].mean(axis=0) if n_conv else np.full(scenario.slots, np.nan)
    return MseCurve(
        slots=np.arange(1, scenario.slots + 1),
        mse_all=errors.mean(axis=0),
        mse_converged=mse_conv,
        diverged_fraction=diverged.mean(axis=0),
        crlb_ref=crlb_ref,
        trials=scenario.trials,
        converged_trials=n_conv,
        scenario=scenario.describe(),
        seed=scenario.seed,
        exclude_diverged=scenario.exclude_diverged,
    )


def run_static(scenario: StaticScenario) -> MseCurve:
    """Monte-Carlo tracking of a fixed channel, with the per-slot bound attached.

    The reference column is the k-slot bound at the bundled reference
    offsets, i.e. the single-slot value divided by the slot index.
    """
    if isinstance(scenario, DynamicScenario):
        raise ConfigError("run_static expects a StaticScenario")
    ref1 = crlb_from_offsets(REFERENCE_OFFSETS, scenario.geom, scenario.pilot, k=1)
    crlb_ref = ref1 / np.arange(1, scenario.slots + 1)
    return _aggregate(scenario, crlb_ref)


def run_dynamic(scenario: DynamicScenario) -> MseCurve:
    """Monte-Carlo tracking of a random-walk channel; no bound column (it only
    applies to a fixed channel)."""
    if not isinstance(scenario, DynamicScenario):
        raise ConfigError("run_dynamic expects a DynamicScenario")
    return _aggregate(scenario, None)


# --- export / import -------------------------------------------------------

CSV_COLUMNS = ["slot", "mse_mean", "crlb_ref", "diverged_fraction", "trials"]


def _fmt(x: float) -> str:
    return repr(float(x))


def export(curve: MseCurve, path, fmt: str = "csv") -> None:
    """Write a curve to disk as CSV (fixed five columns) or JSON (full record)."""
    if fmt == "csv":
        try:
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(CSV_COLUMNS)
                for i, slot in enumerate(curve.slots):
                    writer.writerow([
                        int(slot),
                        _fmt(curve.mse_mean[i]),
                        _fmt(curve.crlb_ref[i]) if curve.crlb_ref is not None else "",
                        _fmt(curve.diverged_fraction[i]),
                        curve.trials,
                    ])
        except OSError as exc:
            raise ConfigError(f"cannot write {path}: {exc}") from exc
        return
    if fmt == "json":
        records = []
        for i, slot in enumerate(curve.slots):
            records.append({
                "slot": int(slot),
                "mse_mean": float(curve.mse_mean[i]),
                "mse_all": float(curve.mse_all[i]),
                "mse_converged": float(curve.mse_converged[i]),
                "crlb_ref": float(curve.crlb_ref[i]) if curve.crlb_ref is not None else None,
                "diverged_fraction": float(curve.diverged_fraction[i]),
            })
        payload = {
            "scenario": curve.scenario,
            "seed": curve.seed,
            "trials": curve.trials,
            "converged_trials": curve.converged_trials,
            "exclude_diverged": curve.exclude_diverged,
            "records": records,
        }
        try:
            with open(path, "w") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
                fh.write("\n")
        except OSError as exc:
            raise ConfigError(f"cannot write {path}: {exc}") from exc
        return
    raise ConfigError(f"unknown export format {fmt!r} (expected csv or json)")


def load_curve(path) -> MseCurve:
    """Rebuild a curve from its JSON export."""
    with open(path) as fh:
        payload = json.load(fh)
    records = payload["records"]
    crlb_vals = [r["crlb_ref"] for r in records]
    has_ref = any(v is not None for v in crlb_vals)
    return MseCurve(
        slots=np.array([r["slot"] for r in records], dtype=int),
        mse_all=np.array([r["mse_all"] for r in records]),
        mse_converged=np.array([r["mse_converged"] for r in records]),
        diverged_fraction=np.array([r["diverged_fraction"] for r in records]),
        crlb_ref=np.array(crlb_vals, dtype=float) if has_ref else None,
        trials=payload["trials"],
        converged_trials=payload["converged_trials"],
        scenario=payload["scenario"],
        seed=payload["seed"],
        exclude_diverged=payload["exclude_diverged"],
    )
