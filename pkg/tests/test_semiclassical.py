import numpy as np
import pytest

from cavityglass.model import DriveParams, critical_coupling, model_coefficients, threshold_time
from cavityglass.semiclassical import (SdeConfig, coherent_energy, coherent_energy_grad,
                                       diffusion, drift, initial_classical_state,
                                       integrate_semiclassical, organization_onset)

TWO_PI = 2 * np.pi
KAPPA, DELTA, WZ = TWO_PI * 260e3, -TWO_PI * 80e6, TWO_PI * 10e3


def random_spins(n, M, rng):
    v = rng.normal(size=(n, 3))
    return M / 2 * v / np.linalg.norm(v, axis=1, keepdims=True)


def test_zero_coupling_is_pure_precession(glass3, rng):
    S = random_spins(3, 10.0, rng)
    c = model_coefficients(0.0, WZ, DELTA, KAPPA)
    d = drift(S, glass3, c)
    np.testing.assert_allclose(d, np.column_stack([-WZ * S[:, 1], WZ * S[:, 0], 0 * S[:, 2]]))
    np.testing.assert_array_equal(diffusion(S, glass3, c, rng.normal(size=3)), 0)


def test_free_precession_period(glass3):
    S0 = np.zeros((3, 3))
    S0[:, 0] = 0.5
    drive = DriveParams(ramp_start=1.0, ramp_end=2.0)
    period = TWO_PI / WZ
    sde = SdeConfig(dt=1e-9, t_final=period, sample_interval=period / 4, noise=True, seed=1)
    rec = integrate_semiclassical(glass3, drive, sde, initial=S0)
    np.testing.assert_allclose(rec.S[-1], S0, atol=1e-6)
    np.testing.assert_allclose(rec.S[1, :, 1], 0.5, atol=1e-6)  # quarter turn toward +y


def test_conservative_part_keeps_length(glass3, rng):
    # with a vanishing cavity loss only the Hamiltonian flow remains
    S = random_spins(3, 4.0, rng)
    c = model_coefficients(5e6, 0.4 * WZ, DELTA, 1e-3)
    d = drift(S, glass3, c)
    assert abs(np.sum(S * d)) < 1e-9 * np.abs(S).max() * np.abs(d).max()


def test_dissipation_shrinks_length():
    J1 = np.array([[1.0]])
    c = model_coefficients(5e6, 0.0, DELTA, KAPPA)
    for S in ([[0.1, 0.3, -0.2]], [[0.0, 0.0, 0.5]], [[0.3, -0.4, 0.0]]):
        S = np.array(S)
        assert np.sum(S * drift(S, J1, c)) < 0


def test_noise_variance_closed_form(glass3, rng):
    S = random_spins(3, 1.0, rng)
    c = model_coefficients(4e6, 0.5 * WZ, DELTA, KAPPA)
    dt = 1e-9
    draws = 100000
    dW = rng.normal(scale=np.sqrt(dt), size=(draws, 3))
    inc = np.array([diffusion(S, glass3, c, w)[:, 0] for w in dW])
    pref = c.g * np.sqrt(KAPPA) / (np.sqrt(2) * DELTA)
    # sum_k V_ik^2 lambda_k = J_ii for the positive semidefinite coupling matrix
    expect = (pref * S[:, 2] * c.alpha_minus.real) ** 2 * np.diag(glass3.entries) * dt
    np.testing.assert_allclose(inc.var(axis=0), expect, rtol=0.05)


def test_noise_off_is_deterministic(glass3):
    drive = DriveParams(ramp_start=5e-6, ramp_end=50e-6)
    sde = dict(dt=1e-9, t_final=6e-5, sample_interval=1e-5, noise=False)
    a = integrate_semiclassical(glass3, drive, SdeConfig(seed=1, **sde))
    b = integrate_semiclassical(glass3, drive, SdeConfig(seed=2, **sde))
    np.testing.assert_array_equal(a.S, b.S)


def test_seeded_reproducibility_and_length(glass3):
    drive = DriveParams(ramp_start=5e-6, ramp_end=50e-6)
    sde = dict(dt=1e-9, t_final=6e-5, sample_interval=1e-5)
    a = integrate_semiclassical(glass3, drive, SdeConfig(seed=7, **sde), M=3.0)
    b = integrate_semiclassical(glass3, drive, SdeConfig(seed=7, **sde), M=3.0)
    c = integrate_semiclassical(glass3, drive, SdeConfig(seed=8, **sde), M=3.0)
    np.testing.assert_array_equal(a.S, b.S)
    assert not np.array_equal(a.S, c.S)
    np.testing.assert_allclose(np.linalg.norm(a.S, axis=2), 1.5, rtol=1e-12)
    m = 2 * a.S[..., 0] / 3.0
    np.testing.assert_allclose(a.ising_energy, -np.einsum("ti,ij,tj->t", m, glass3.entries, m))
    with pytest.raises(ValueError):
        integrate_semiclassical(glass3, drive, SdeConfig(**sde), M=0.5)


def test_initial_state_tilt(glass3):
    S = initial_classical_state(glass3, 2.0, tilt=True, angle=1e-3)
    np.testing.assert_allclose(np.linalg.norm(S, axis=1), 1.0)
    np.testing.assert_array_equal(np.sign(S[:, 0]), np.sign(glass3.eigenvectors[:, 0]))
    S = initial_classical_state(glass3, 2.0, tilt=False)
    np.testing.assert_array_equal(S, [[0, 0, -1.0]] * 3)


def test_energy_gradient_finite_difference(glass3, rng):
    c = model_coefficients(6e6, 0.3 * WZ, DELTA, KAPPA)
    for M in (1.0, 7.0):
        n = random_spins(3, 2.0, rng)
        gr = coherent_energy_grad(n, glass3, c, M)
        h = 1e-6
        for i in range(3):
            for a in range(3):
                e = np.zeros_like(n)
                e[i, a] = h
                fd = (coherent_energy(n + e, glass3, c, M) - coherent_energy(n - e, glass3, c, M)) / (2 * h)
                assert fd == pytest.approx(gr[i, a], rel=1e-6, abs=1e-9 * np.abs(gr).max())


def test_single_spin_energy_matches_pole():
    J1 = np.array([[1.0]])
    c = model_coefficients(0.0, WZ, DELTA, KAPPA)
    assert coherent_energy(np.array([[0, 0, -1.0]]), J1, c, 1.0) == pytest.approx(-WZ / 2)


def test_onset_near_threshold(params):
    from cavityglass.cavity import coupling_matrix_for
    cp = coupling_matrix_for("spin_glass", 8, 3, params)[1]
    drive = DriveParams()
    t_c = threshold_time(drive) * 1e6
    sde = SdeConfig(dt=2e-9, t_final=4.2e-4, sample_interval=2e-6, noise=False)
    rec = integrate_semiclassical(cp, drive, sde, M=1e5)
    onset = organization_onset(rec, cp)
    assert abs(onset - t_c) < 0.1 * t_c
    assert critical_coupling(cp.lambda_max, WZ, DELTA, KAPPA, 1e5) < \
        critical_coupling(cp.lambda_max, WZ, DELTA, KAPPA, 1)
