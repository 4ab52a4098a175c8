import math

import numpy as np
import pytest

from beamtrack import (
    AoA,
    ArrayGeometry,
    ChannelParams,
    Codebook,
    PilotConfig,
    REFERENCE_OFFSETS,
    SingularInformationError,
    StepSchedule,
    TrackerState,
    aoa_to_direction,
    coarse_sweep,
    drift_f,
    fisher_matrix,
    make_probes,
    noise_term,
    noiseless_observation,
    probe_matrix,
    steering_vector,
    step_size,
    sweep_matrix,
    update,
)
from beamtrack.arrays import sample_noise


def make_state(psi, slot=0, schedule=None, offsets=REFERENCE_OFFSETS):
    return TrackerState(
        psi=psi,
        slot=slot,
        schedule=schedule or StepSchedule(),
        offsets=offsets,
    )


class TestStepSchedule:
    def test_diminishing_values(self):
        s = StepSchedule(kind="diminishing", epsilon=1.0, k0=0.0)
        assert step_size(s, 4) == 0.25
        s = StepSchedule(kind="diminishing", epsilon=1.0, k0=10.0)
        assert step_size(s, 1) == pytest.approx(1 / 11)

    def test_constant_value(self):
        s = StepSchedule(kind="constant", constant_value=0.7)
        assert all(step_size(s, k) == 0.7 for k in (1, 10, 1000))

    def test_validation(self):
        with pytest.raises(ValueError):
            StepSchedule(kind="nope")
        with pytest.raises(ValueError):
            StepSchedule(kind="diminishing", epsilon=0.0)
        with pytest.raises(ValueError):
            step_size(StepSchedule(), 0)

    def test_square_summability_structure(self):
        # epsilon/(k + k0) sums like a log (unbounded) while its squares stay
        # below the epsilon^2 * pi^2/6 harmonic-square ceiling
        s = StepSchedule(kind="diminishing", epsilon=2.0, k0=3.0)
        b = np.array([step_size(s, k) for k in range(1, 20001)])
        assert b.sum() >= 2.0 * (math.log(20004) - math.log(4)) - 0.1
        assert (b ** 2).sum() <= 4.0 * math.pi ** 2 / 6


class TestCodebook:
    def test_default_size_doubles_array(self, geom8):
        cb = Codebook.for_geometry(geom8)
        assert cb.m0 == 16 and cb.n0 == 16
        assert cb.points.shape == (256, 2)

    def test_point_formula(self, geom8):
        cb = Codebook.for_geometry(geom8, m0=16, n0=16)
        # flat index (i-1)*n0 + (j-1)
        for i, j in [(1, 1), (3, 7), (16, 16)]:
            p = cb.points[(i - 1) * cb.n0 + (j - 1)]
            assert p[0] == pytest.approx((2 * i - 1 - 16) * 8 * 0.5 / 16)
            assert p[1] == pytest.approx((2 * j - 1 - 16) * 8 * 0.5 / 16)

    def test_too_small_codebook_rejected(self, geom8):
        with pytest.raises(ValueError):
            Codebook.for_geometry(geom8, m0=4)

    def test_points_cover_reachable_directions(self, geom8):
        cb = Codebook.for_geometry(geom8)
        assert np.abs(cb.points[:, 0]).max() <= geom8.m * geom8.d1
        assert np.abs(cb.points[:, 1]).max() <= geom8.n * geom8.d2


class TestSweepMatrix:
    def test_shape_and_unit_columns(self, geom8):
        w = sweep_matrix(geom8)
        assert w.shape == (64, 64)
        assert np.allclose(np.linalg.norm(w, axis=0), 1.0)


class TestCoarseSweep:
    def test_noiseless_on_grid_recovery(self, geom8, pilot):
        cb = Codebook.for_geometry(geom8)
        x = cb.points[137]
        psi = ChannelParams(1.0, x)
        est = coarse_sweep(geom8, cb, pilot, psi)
        assert np.array_equal(est.x, x)
        assert est.beta == pytest.approx(1.0, abs=1e-9)

    def test_zero_gain_tie_breaks_to_first_point(self, geom8, pilot):
        cb = Codebook.for_geometry(geom8)
        psi = ChannelParams(0.0, [0.3, 0.3])
        est = coarse_sweep(geom8, cb, pilot, psi)
        assert np.array_equal(est.x, cb.points[0])
        assert est.beta == 0.0

    def test_noisy_lands_in_main_lobe_usually(self, geom8, pilot, rng):
        cb = Codebook.for_geometry(geom8)
        hits = 0
        trials = 300
        for _ in range(trials):
            aoa = AoA(rng.uniform(0, math.pi / 2), rng.uniform(-math.pi, math.pi))
            x = aoa_to_direction(aoa, geom8)
            est = coarse_sweep(geom8, cb, pilot, ChannelParams((1 + 1j) / math.sqrt(2), x), rng)
            if np.all(np.abs(est.x - x) < 1.0):
                hits += 1
        assert hits / trials >= 0.95


class TestUpdate:
    def test_fixed_point_at_truth(self, geom8, pilot, rng):
        for _ in range(100):
            beta = rng.normal() + 1j * rng.normal()
            if abs(beta) < 1e-2:
                continue
            psi = ChannelParams(beta, rng.uniform(-3, 3, 2))
            state = make_state(psi)
            probes = make_probes(state, geom8)
            y = noiseless_observation(psi, probes, pilot)
            new = update(state, y, pilot, geom8)
            assert np.abs(new.psi.as_vector() - psi.as_vector()).max() <= 1e-10
            assert new.slot == 1

    def test_zero_step_freezes_state(self, geom8, pilot, rng):
        schedule = StepSchedule(kind="diminishing", epsilon=1e-300, k0=0.0)
        psi = ChannelParams(1.0 + 1.0j, [0.5, -0.5])
        state = make_state(psi, schedule=schedule)
        y = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        new = update(state, y, pilot, geom8)
        assert np.abs(new.psi.as_vector() - psi.as_vector()).max() < 1e-12

    def test_local_contraction(self, geom8, pilot):
        psi = ChannelParams(0.9 - 0.3j, [1.2, -2.1])
        direction = np.array([1.0, -1.0, 0.5, -0.25])
        direction /= np.linalg.norm(direction)
        pert = ChannelParams.from_vector(psi.as_vector() + 1e-4 * direction)
        state = make_state(pert, schedule=StepSchedule(kind="constant", constant_value=1.0))
        probes = make_probes(state, geom8)
        y = noiseless_observation(psi, probes, pilot)
        new = update(state, y, pilot, geom8)
        before = np.linalg.norm(pert.as_vector() - psi.as_vector())
        after = np.linalg.norm(new.psi.as_vector() - psi.as_vector())
        assert after < before

    def test_tiny_gain_raises(self, geom8, pilot):
        state = make_state(ChannelParams(1e-12, [0.0, 0.0]))
        with pytest.raises(SingularInformationError):
            update(state, np.zeros(3, dtype=complex), pilot, geom8)

    def test_slot_increments_and_offsets_fixed(self, geom8, pilot, rng):
        state = make_state(ChannelParams(1.0, [0.0, 0.0]))
        for k in range(1, 4):
            probes = make_probes(state, geom8)
            y = noiseless_observation(ChannelParams(1.0, [0.1, 0.1]), probes, pilot)
            state = update(state, y, pilot, geom8)
            assert state.slot == k
            assert np.array_equal(state.offsets, REFERENCE_OFFSETS)


class TestMakeProbes:
    def test_centred_on_estimate(self, geom8):
        psi = ChannelParams(1.0, [0.25, -0.75])
        probes = make_probes(make_state(psi), geom8)
        assert np.array_equal(probes.base, psi.x)
        assert np.allclose(np.linalg.norm(probes.w, axis=0), 1.0)

    def test_zero_offsets_align(self, geom8, pilot):
        psi = ChannelParams(1.0, [1.0, 1.0])
        probes = make_probes(make_state(psi, offsets=np.zeros((3, 2))), geom8)
        y = noiseless_observation(psi, probes, pilot)
        assert np.allclose(y, math.sqrt(geom8.size))


class TestDrift:
    def test_zero_at_truth(self, geom8, pilot, rng):
        for _ in range(20):
            psi = ChannelParams(rng.normal() + 1j * rng.normal(), rng.uniform(-2, 2, 2))
            if abs(psi.beta) < 1e-2:
                continue
            probes = probe_matrix(psi.x, REFERENCE_OFFSETS, geom8)
            f = drift_f(psi, psi, probes, pilot)
            assert np.abs(f).max() <= 1e-10

    def test_pulls_direction_back(self, geom8, pilot):
        psi = ChannelParams(1.0 + 1.0j, [0.5, -0.5])
        hat = ChannelParams(psi.beta, psi.x + [1e-3, 0.0])
        probes = probe_matrix(hat.x, REFERENCE_OFFSETS, geom8)
        f = drift_f(hat, psi, probes, pilot)
        assert f[2] < 0.0  # pushes x1_hat back down toward the truth

    def test_jacobian_is_minus_identity(self, geom8, pilot):
        psi = ChannelParams(0.7 - 1.2j, [1.3, -0.4])
        h = 1e-6
        jac = np.empty((4, 4))
        for i in range(4):
            e = np.zeros(4)
            e[i] = h
            up = ChannelParams.from_vector(psi.as_vector() + e)
            dn = ChannelParams.from_vector(psi.as_vector() - e)
            f_up = drift_f(up, psi, probe_matrix(up.x, REFERENCE_OFFSETS, geom8), pilot)
            f_dn = drift_f(dn, psi, probe_matrix(dn.x, REFERENCE_OFFSETS, geom8), pilot)
            jac[:, i] = (f_up - f_dn) / (2 * h)
        assert np.abs(jac + np.eye(4)).max() <= 1e-4

    def test_matches_monte_carlo_mean_step(self, geom8, rng):
        pilot = PilotConfig(s_p=1.0, sigma2=1.0)
        psi = ChannelParams(0.8 + 0.6j, [0.4, 0.9])
        hat = ChannelParams(psi.beta + (0.05 - 0.03j), psi.x + [0.08, -0.06])
        schedule = StepSchedule(kind="constant", constant_value=1.0)
        state = make_state(hat, schedule=schedule)
        probes = make_probes(state, geom8)
        f = drift_f(hat, psi, probes, pilot)
        mean_obs = noiseless_observation(psi, probes, pilot)

        n = 20000
        steps = np.empty((n, 4))
        base = hat.as_vector()
        for i in range(n):
            y = mean_obs + sample_noise(pilot, rng)
            steps[i] = update(state, y, pilot, geom8).psi.as_vector() - base
        se = steps.std(axis=0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(steps.mean(axis=0) - f) <= 3 * se)


class TestNoiseTerm:
    def test_zero_noise_gives_zero(self, geom8, pilot):
        psi = ChannelParams(1.0, [0.2, 0.3])
        probes = probe_matrix(psi.x, REFERENCE_OFFSETS, geom8)
        assert np.allclose(noise_term(psi, probes, pilot, np.zeros(3, complex)), 0.0)

    def test_linear_in_noise(self, geom8, pilot, rng):
        psi = ChannelParams(0.5 + 0.8j, [1.0, -1.0])
        probes = probe_matrix(psi.x, REFERENCE_OFFSETS, geom8)
        z = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        one = noise_term(psi, probes, pilot, z)
        scaled = noise_term(psi, probes, pilot, 3.5 * z)
        assert np.allclose(scaled, 3.5 * one, rtol=1e-12)

    def test_covariance_is_inverse_information(self, geom8, pilot, rng):
        psi = ChannelParams(0.8 + 0.6j, [0.4, 0.9])
        probes = probe_matrix(psi.x, REFERENCE_OFFSETS, geom8)
        info = fisher_matrix(psi, probes, pilot)
        target = np.linalg.inv(info)

        n = 100_000
        scale = math.sqrt(pilot.sigma2 / 2)
        z = scale * (rng.standard_normal((n, 3)) + 1j * rng.standard_normal((n, 3)))
        draws = np.stack([noise_term(psi, probes, pilot, zi) for zi in z])
        mean = draws.mean(axis=0)
        se = draws.std(axis=0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(mean) <= 4 * se)
        cov = np.cov(draws.T)
        rel = np.linalg.norm(cov - target) / np.linalg.norm(target)
        assert rel < 0.05

    def test_update_decomposes_into_drift_plus_noise(self, geom8, pilot, rng):
        # reconstructing the step from the drift and noise parts reproduces update
        psi = ChannelParams(0.9 + 0.2j, [0.6, -0.3])
        hat = ChannelParams(psi.beta + 0.1j, psi.x + [0.05, -0.02])
        schedule = StepSchedule(kind="diminishing", epsilon=1.0, k0=2.0)
        state = make_state(hat, slot=6, schedule=schedule)
        probes = make_probes(state, geom8)

        z = sample_noise(pilot, rng)
        y = noiseless_observation(psi, probes, pilot) + z
        via_update = update(state, y, pilot, geom8).psi.as_vector()

        b_k = step_size(schedule, 7)
        f = drift_f(hat, psi, probes, pilot)
        zt = noise_term(hat, probes, pilot, z)
        reconstructed = hat.as_vector() + b_k * (f + zt)
        assert np.abs(via_update - reconstructed).max() <= 1e-10
