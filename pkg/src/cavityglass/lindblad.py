"""Dense operator builders and a Lindblad master-equation reference (small N only)."""
from __future__ import annotations

from functools import reduce

import numpy as np
from scipy.integrate import solve_ivp

from .cavity import CavityParams, CouplingMatrix
from .model import DriveParams, ModelCoefficients, collapse_specs
from .quantum import SimConfig, _setup, coefficients_at, initial_state

MAX_DENSE = 4

# single-spin Paulis in the sigma^x basis (|+>, |->)
PX = np.diag([1.0, -1.0]).astype(complex)
PY = np.array([[0, 1j], [-1j, 0]])
PZ = np.array([[0, 1], [1, 0]], dtype=complex)


def site_operator(op, i, n):
    """Embed a 2x2 operator on spin ``i``; spin i is bit i of the basis index."""
    mats = [op if k == i else np.eye(2) for k in reversed(range(n))]
    return reduce(np.kron, mats)


def dense_spin_ops(n):
    return ([site_operator(PX / 2, i, n) for i in range(n)],
            [site_operator(PY / 2, i, n) for i in range(n)],
            [site_operator(PZ / 2, i, n) for i in range(n)])


def dense_hamiltonian(J, coeffs: ModelCoefficients) -> np.ndarray:
    Jm = J.entries if isinstance(J, CouplingMatrix) else np.asarray(J, float)
    n = Jm.shape[0]
    Sx, Sy, Sz = dense_spin_ops(n)
    G = coeffs.g ** 2 / (4 * coeffs.delta_c)
    H = coeffs.omega_z * sum(Sz)
    for i in range(n):
        for j in range(n):
            T = Sx[i] @ (coeffs.alpha_plus * Sx[j] + 1j * coeffs.alpha_minus * Sy[j])
            H = H - G * Jm[i, j] * (T + T.conj().T)
    return H


def dense_collapse_ops(coupling: CouplingMatrix, coeffs: ModelCoefficients):
    n = coupling.n
    Sx, Sy, _ = dense_spin_ops(n)
    ops = []
    for sp in collapse_specs(coupling, coeffs):
        ops.append(sum(sp.weights_x[i] * Sx[i] + sp.weights_y[i] * Sy[i] for i in range(n)))
    return ops


def lindblad_rhs(rho, H, Cs):
    out = -1j * (H @ rho - rho @ H)
    for C in Cs:
        CdC = C.conj().T @ C
        out += C @ rho @ C.conj().T - 0.5 * (CdC @ rho + rho @ CdC)
    return out


def lindblad_reference(coupling: CouplingMatrix, drive: DriveParams, sim: SimConfig,
                       times, cavity: CavityParams | None = None, rtol: float = 1e-9,
                       atol: float = 1e-11):
    """Integrate d rho/dt = -i[H, rho] + sum_k D[C_k] rho on the drive schedule.

    Returns density matrices (sigma^x basis) at ``times`` (seconds).
    """
    cavity = cavity or CavityParams()
    n = coupling.n
    if n > MAX_DENSE:
        raise ValueError(f"dense reference limited to N <= {MAX_DENSE}")
    setup = _setup(coupling, drive, sim, cavity)
    d = 2 ** n
    psi0 = initial_state(n).amplitudes
    rho0 = np.outer(psi0, psi0.conj())

    def rhs(t, y):
        c = coefficients_at(t, setup)
        H = dense_hamiltonian(coupling, c)
        Cs = [np.sqrt(setup.scale) * C for C in dense_collapse_ops(coupling, c)] if c.g > 0 else []
        return lindblad_rhs(y.reshape(d, d), H, Cs).ravel()

    times = np.asarray(times, dtype=float)
    # integrate piecewise so the kinks of the schedule fall on segment boundaries
    brk = {0.0, float(times.max())}
    if not drive.quench:
        brk |= {b for b in (drive.ramp_start, drive.ramp_end) if 0 < b < times.max()}
    brk = sorted(brk)
    out = {}
    y = rho0.ravel().astype(complex)
    for a, b in zip(brk[:-1], brk[1:]):
        sol = solve_ivp(rhs, (a, b), y, method="DOP853", dense_output=True,
                        rtol=rtol, atol=atol)
        if not sol.success:
            raise ArithmeticError(sol.message)
        for t in times[(times > a) & (times <= b)]:
            out[t] = sol.sol(t).reshape(d, d)
        y = sol.y[:, -1]
    for t in times[times == 0]:
        out[t] = rho0
    rhos = np.array([out[t] for t in times])
    tr = np.real(np.trace(rhos, axis1=1, axis2=2))
    if np.max(np.abs(tr - 1)) > 1e-6:
        raise ArithmeticError("trace drift above 1e-6 in Lindblad integration")
    return rhos


def trace_distance(a, b) -> float:
    ev = np.linalg.eigvalsh(0.5 * ((a - b) + (a - b).conj().T))
    return float(0.5 * np.sum(np.abs(ev)))
