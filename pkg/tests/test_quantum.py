from functools import reduce

import numpy as np
import pytest
from scipy.linalg import expm

from cavityglass.model import DriveParams, collapse_specs, critical_coupling, model_coefficients
from cavityglass.quantum import (PureState, SimConfig, apply_hamiltonian, apply_heff,
                                 apply_spin_sum, counters_from_jumps, effective_step,
                                 energy_diagnostics, entanglement_entropy, entropy_from_bloch,
                                 evolve_trajectory, ground_energy, initial_state,
                                 measurement_records, sample_jumps, spin_expectations, x_table)

TWO_PI = 2 * np.pi
KAPPA, DELTA, WZ = TWO_PI * 260e3, -TWO_PI * 80e6, TWO_PI * 10e3

# independent dense oracle: Paulis in the (|+>, |->) basis, spin i on bit i
SX = np.diag([1.0, -1.0]) / 2
SY = np.array([[0, 1j], [-1j, 0]]) / 2
SZ = np.array([[0, 1], [1, 0]]) / 2


def embed(op, i, n):
    return reduce(np.kron, [op if k == i else np.eye(2) for k in reversed(range(n))])


def dense_H(J, c):
    n = J.shape[0]
    G = c.g ** 2 / (4 * c.delta_c)
    H = sum(c.omega_z * embed(SZ, i, n) for i in range(n))
    for i in range(n):
        for j in range(n):
            A = c.alpha_plus * embed(SX, j, n) + 1j * c.alpha_minus * embed(SY, j, n)
            T = embed(SX, i, n) @ A
            H = H - G * J[i, j] * (T + T.conj().T)
    return H


def dense_C(spec, n):
    return sum(spec.weights_x[i] * embed(SX, i, n) + spec.weights_y[i] * embed(SY, i, n)
               for i in range(n))


def rand_state(n, rng):
    v = rng.normal(size=2 ** n) + 1j * rng.normal(size=2 ** n)
    return v / np.linalg.norm(v)


@pytest.fixture
def coeffs(glass3):
    gc = critical_coupling(glass3.lambda_max, WZ, DELTA, KAPPA)
    return model_coefficients(1.7 * gc, 0.6 * WZ, DELTA, KAPPA)


def test_initial_state_single_spin():
    psi = initial_state(1).amplitudes
    np.testing.assert_allclose(psi, [1 / np.sqrt(2), -1 / np.sqrt(2)])
    x, y, z = spin_expectations(psi)
    assert z[0] == pytest.approx(-1) and x[0] == pytest.approx(0, abs=1e-15)


def test_initial_state_product():
    psi = initial_state(5)
    assert np.linalg.norm(psi.amplitudes) == pytest.approx(1, abs=1e-14)
    x, y, z = spin_expectations(psi)
    np.testing.assert_allclose(z, -1, atol=1e-14)
    np.testing.assert_allclose(x, 0, atol=1e-14)
    np.testing.assert_allclose(y, 0, atol=1e-14)
    with pytest.raises(ValueError):
        initial_state(0)
    with pytest.raises(ValueError):
        initial_state(16)


def test_spin_sum_diagonal_case():
    psi = initial_state(3).amplitudes
    out = apply_spin_sum(psi, np.ones(3), np.zeros(3))
    np.testing.assert_allclose(out, x_table(3).sum(axis=1) / 2 * psi)


def test_spin_sum_single_flip_phase():
    plus = np.array([1.0, 0.0], complex)
    out = apply_spin_sum(plus, [0.0], [1.0])
    np.testing.assert_allclose(out, [0.0, -0.5j])  # sigma^y |+> = -i |->


def test_spin_sum_dense_oracle(rng):
    n = 3
    psi = rand_state(n, rng)
    wx = rng.normal(size=n) + 1j * rng.normal(size=n)
    wy = rng.normal(size=n) + 1j * rng.normal(size=n)
    D = sum(wx[i] * embed(SX, i, n) + wy[i] * embed(SY, i, n) for i in range(n))
    np.testing.assert_allclose(apply_spin_sum(psi, wx, wy), D @ psi, atol=1e-12)
    with pytest.raises(ValueError):
        apply_spin_sum(psi, wx[:2], wy)


def test_hamiltonian_dense_oracle(glass3, coeffs, rng):
    psi = rand_state(3, rng)
    H = dense_H(glass3.entries, coeffs)
    np.testing.assert_allclose(H, H.conj().T, atol=1e-9 * np.abs(H).max())
    scale = np.abs(H).max()
    np.testing.assert_allclose(apply_hamiltonian(psi, glass3, coeffs), H @ psi, atol=1e-12 * scale)
    specs = collapse_specs(glass3, coeffs)
    Heff = H - 0.5j * sum(dense_C(s, 3).conj().T @ dense_C(s, 3) for s in specs)
    np.testing.assert_allclose(apply_heff(psi, glass3, coeffs, specs), Heff @ psi,
                               atol=1e-12 * scale)


def test_effective_step_second_order_error(glass3, coeffs, rng):
    psi = rand_state(3, rng)
    specs = collapse_specs(glass3, coeffs)
    H = dense_H(glass3.entries, coeffs)
    Heff = H - 0.5j * sum(dense_C(s, 3).conj().T @ dense_C(s, 3) for s in specs)
    errs = []
    for dt in (2e-9, 1e-9):
        ref = expm(-1j * Heff * dt) @ psi
        ref /= np.linalg.norm(ref)
        got = effective_step(psi, glass3, coeffs, specs, dt).amplitudes
        errs.append(np.linalg.norm(got - ref))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_free_precession_returns(glass3):
    c = model_coefficients(0.0, WZ, DELTA, KAPPA)
    psi = PureState(np.array([1.0, 0.0], complex))  # |+>_x, precesses about z
    J1 = np.array([[1.0]])
    T = TWO_PI / WZ
    n_steps = 20000
    z0 = spin_expectations(psi)[2][0]
    for _ in range(n_steps):
        psi = effective_step(psi, J1, c, [], T / n_steps)
        assert spin_expectations(psi)[2][0] == pytest.approx(z0, abs=1e-12)
    assert abs(np.vdot([1.0, 0.0], psi.amplitudes)) == pytest.approx(1, abs=2e-3)


def test_diagonal_regime_operators_are_diagonal(glass3):
    c = model_coefficients(5e6, 0.0, DELTA, KAPPA)
    eye = np.eye(8, dtype=complex)
    H = np.column_stack([apply_hamiltonian(eye[:, s], glass3, c) for s in range(8)])
    np.testing.assert_allclose(H, np.diag(np.diag(H)), atol=1e-12 * np.abs(H).max())
    for sp in collapse_specs(glass3, c):
        C = dense_C(sp, 3)
        np.testing.assert_allclose(C, np.diag(np.diag(C)), atol=1e-15)


def test_norm_collapse_raises(glass3, coeffs):
    specs = collapse_specs(glass3, coeffs)
    with pytest.raises(FloatingPointError):
        effective_step(np.zeros(8, complex), glass3, coeffs, specs, 1e-9)


def test_jumps_dark_state_only_counters(glass3, rng):
    c = model_coefficients(0.0, WZ, DELTA, KAPPA)
    specs = collapse_specs(glass3, c)
    psi = initial_state(3)
    beta = 0.1 * np.sqrt(KAPPA)
    dt = 0.05 / (len(specs) * beta ** 2)
    n_ev = 0
    for _ in range(400):
        new, ev = sample_jumps(psi, specs, beta, dt, rng)
        n_ev += len(ev)
        assert abs(np.vdot(psi.amplitudes, new.amplitudes)) == pytest.approx(1, abs=1e-12)
    # each of 2N channels fires with probability beta^2 dt / 2
    expect = 400 * 2 * len(specs) * beta ** 2 / 2 * dt
    assert abs(n_ev - expect) < 5 * np.sqrt(expect)


def test_jump_probability_guard(glass3, coeffs):
    specs = collapse_specs(glass3, coeffs)
    with pytest.raises(ValueError, match="use dt"):
        sample_jumps(initial_state(3), specs, 0.1 * np.sqrt(KAPPA), 1.0, np.random.default_rng(0))


def test_counter_drift_matches_expectation(glass3, rng):
    c = model_coefficients(3e6, 0.0, DELTA, KAPPA)
    specs = collapse_specs(glass3, c)[:1]
    psi = PureState(rand_state(3, rng))
    C = dense_C(specs[0], 3)
    beta = 0.1 * np.sqrt(KAPPA)
    mean_c = np.vdot(psi.amplitudes, C @ psi.amplitudes)
    drift = 2 * beta * mean_c.real  # xi = 1 at the default LO phase
    cc = np.linalg.norm(C @ psi.amplitudes) ** 2
    dt = 0.05 / (cc + beta ** 2)
    draws = 100000
    # vectorised Bernoulli draws of the same per-step rates used by sample_jumps
    p_plus = (cc + beta ** 2 + drift) / 2 * dt
    p_minus = (cc + beta ** 2 - drift) / 2 * dt
    net = 0
    r = np.random.default_rng(9)
    for _ in range(200):
        _, ev = sample_jumps(psi, specs, beta, dt, r)
        net += sum(s for _, s in ev)
    u = r.random((draws, 2))
    net_v = np.sum(u[:, 0] < p_plus) - np.sum(u[:, 1] < p_minus)
    sd = np.sqrt(draws * (p_plus + p_minus))
    assert abs(net_v - draws * drift * dt) < 4 * sd
    assert abs(net - 200 * drift * dt) < 4 * np.sqrt(200 * (p_plus + p_minus)) + 1


def test_beta_zero_rates(glass3, coeffs):
    specs = collapse_specs(glass3, coeffs)
    psi = initial_state(3)
    total = sum(np.linalg.norm(dense_C(s, 3) @ psi.amplitudes) ** 2 for s in specs)
    dt = 0.2 / total
    with pytest.raises(ValueError) as e:
        sample_jumps(psi, specs, 0.0, dt, np.random.default_rng(0))
    assert "0.2" in str(e.value)


def test_entropies():
    prod = np.kron([1, 0], [0.6, 0.8]).astype(complex)
    assert entanglement_entropy(prod, 0) == pytest.approx(0, abs=1e-12)
    bell = np.array([1, 0, 0, 1], complex) / np.sqrt(2)
    assert entanglement_entropy(bell, 0) == pytest.approx(np.log(2), abs=1e-12)
    assert entanglement_entropy(bell, 1) == pytest.approx(np.log(2), abs=1e-12)
    ghz = np.zeros(16, complex)
    ghz[0] = ghz[-1] = 1 / np.sqrt(2)
    for i in range(4):
        assert entanglement_entropy(ghz, i) == pytest.approx(np.log(2), abs=1e-12)
    assert entropy_from_bloch(0, 0, 1) == pytest.approx(0)
    assert entropy_from_bloch(0, 0, 0) == pytest.approx(np.log(2))


def test_entropy_matches_bloch(glass3, coeffs, rng):
    psi = rand_state(3, rng)
    x, y, z = spin_expectations(psi)
    for i in range(3):
        assert entanglement_entropy(psi, i) == pytest.approx(entropy_from_bloch(x[i], y[i], z[i]),
                                                             abs=1e-10)


def test_measurement_records(glass3):
    V = glass3.eigenvectors
    assert np.all(measurement_records(np.zeros(3), V) == 0)
    np.testing.assert_allclose(measurement_records([0, 1, 0], V), V[:, 1])
    h = counters_from_jumps([1e-6, 2e-6, 3e-6], [1, 1, 0], [1, 1, -1], 3, [0, 1.5e-6, 5e-6])
    np.testing.assert_array_equal(h, [[0, 0, 0], [0, 1, 0], [-1, 2, 0]])


def test_energy_diagonal_case_exhaustive(glass3):
    c = model_coefficients(4e6, 0.0, DELTA, KAPPA)
    X = x_table(3)
    e = np.einsum("si,ij,sj->s", X, glass3.entries, X)
    G = c.g ** 2 / (4 * DELTA)
    assert ground_energy(glass3, c) == pytest.approx(np.min(-G * c.alpha_plus.real / 2 * e),
                                                     rel=1e-12)


def test_energy_variational(glass3, coeffs, rng):
    H = dense_H(glass3.entries, coeffs)
    w, v = np.linalg.eigh(H)
    E, E0 = energy_diagnostics(v[:, 0], glass3, coeffs.g, coeffs.alpha_plus, DELTA,
                               coeffs.omega_z, coeffs.alpha_minus, KAPPA)
    assert E / E0 == pytest.approx(1, abs=1e-10)
    for _ in range(10):
        E, _ = energy_diagnostics(rand_state(3, rng), glass3, coeffs.g, coeffs.alpha_plus,
                                  DELTA, coeffs.omega_z, coeffs.alpha_minus, KAPPA)
        assert E >= E0 - 1e-9 * abs(E0)


def test_iterative_ground_energy_both_parity_sectors(params):
    from cavityglass.cavity import coupling_matrix_for
    cp = coupling_matrix_for("spin_glass", 9, 4, params)[1]
    gc = critical_coupling(cp.lambda_max, WZ, DELTA, KAPPA)
    for f in (0.3, 0.6):
        c = model_coefficients(np.sqrt(5 * f) * gc, WZ * (1 - f), DELTA, KAPPA)
        H = dense_H(cp.entries, c)
        assert ground_energy(cp, c) == pytest.approx(np.linalg.eigvalsh(H)[0], rel=1e-8)


def _short_sim(**kw):
    return SimConfig(t_final=2e-4, sample_interval=2e-5, **kw)


def test_dark_drive_keeps_spins_down(glass3):
    drive = DriveParams(ramp_start=1.0, ramp_end=2.0)
    rec = evolve_trajectory(glass3, drive, _short_sim(), seed=0)
    np.testing.assert_allclose(rec.sz, -1, atol=1e-10)


def test_trajectory_invariants(glass3):
    drive = DriveParams(ramp_start=20e-6, ramp_end=120e-6)
    rec = evolve_trajectory(glass3, drive, _short_sim(record_states=True), seed=3)
    rec2 = evolve_trajectory(glass3, drive, _short_sim(record_states=True), seed=3)
    np.testing.assert_array_equal(rec.sx, rec2.sx)
    np.testing.assert_array_equal(rec.jump_times, rec2.jump_times)
    np.testing.assert_allclose(np.linalg.norm(rec.states, axis=1), 1, atol=1e-12)
    for a in (rec.sx, rec.sy, rec.sz):
        assert np.all(np.abs(a) <= 1 + 1e-9)
    np.testing.assert_allclose(rec.s, rec.h @ glass3.eigenvectors.T, atol=1e-12)
    h = counters_from_jumps(rec.jump_times, rec.jump_channels, rec.jump_signs, 3,
                            rec.sample_times * 1e-6)
    np.testing.assert_array_equal(rec.h, h)
    assert set(np.unique(rec.jump_signs)) <= {-1, 1}
    x, y, z = spin_expectations(rec.states[-1])
    np.testing.assert_allclose(rec.sx[-1], x, atol=1e-12)
    np.testing.assert_allclose(rec.entropy[-1],
                               [entanglement_entropy(rec.states[-1], i) for i in range(3)],
                               atol=1e-9)


def _mean_sz(coupling, drive, sim, n_traj):
    z = np.array([evolve_trajectory(coupling, drive, sim, seed=k).sz for k in range(n_traj)])
    return z.mean(axis=0), z.std(axis=0) / np.sqrt(n_traj)


def _dense_sz(coupling, drive, sim, times):
    from cavityglass.lindblad import dense_spin_ops, lindblad_reference
    rhos = lindblad_reference(coupling, drive, sim, times)
    _, _, Z = dense_spin_ops(coupling.n)
    return np.array([[2 * np.trace(r @ op).real for op in Z] for r in rhos])


def test_split_and_euler_match_master_equation(params):
    from cavityglass.cavity import coupling_matrix_for
    cp = coupling_matrix_for("spin_glass", 2, 5, params)[1]
    drive = DriveParams(ramp_start=5e-6, ramp_end=45e-6)
    base = dict(t_final=6e-5, sample_interval=3e-5)
    sim_s = SimConfig(**base)
    sim_e = SimConfig(method="euler", dt=5e-8, **base)
    ref = _dense_sz(cp, drive, sim_s, np.array([0.0, 3e-5, 6e-5]))
    for sim, n_traj in ((sim_s, 1000), (sim_e, 40)):
        m, se = _mean_sz(cp, drive, sim, n_traj)
        assert np.all(np.abs(m - ref) < 4 * se + 0.02)


def test_ensemble_average_independent_of_beta(params):
    from cavityglass.cavity import coupling_matrix_for
    cp = coupling_matrix_for("spin_glass", 2, 5, params)[1]
    drive = DriveParams(ramp_start=5e-6, ramp_end=45e-6)
    out = []
    for b in (0.1, 1.0):
        sim = SimConfig(t_final=8e-5, sample_interval=2e-5, beta=b * np.sqrt(KAPPA))
        out.append(_mean_sz(cp, drive, sim, 2000))
    (m1, s1), (m2, s2) = out
    assert np.all(np.abs(m1 - m2) <= 3 * np.hypot(s1, s2) + 1e-12)
