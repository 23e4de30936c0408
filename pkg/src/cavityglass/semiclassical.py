"""Mean-field stochastic dynamics of N collective spins of length M/2.

The drift and noise terms follow the homodyne (real Wiener) Ito equations for
<S^x>, <S^y>, <S^z> with anticommutators decoupled into products of means.
Integration is Euler-Maruyama with each spin rescaled to length M/2 after every
step, which keeps trajectories on the Bloch-sphere surface.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .cavity import CavityParams, CouplingMatrix
from .model import DriveParams, ModelCoefficients, critical_coupling, schedule_values, \
    model_coefficients


@dataclass(frozen=True)
class SdeConfig:
    dt: float = 1e-9
    t_final: float = 4e-3
    noise: bool = True
    seed: object = 0
    tilt: bool = True
    tilt_angle: float = 1e-6
    sample_interval: float = 10e-6

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_final > 0 or not self.sample_interval > 0:
            raise ValueError("t_final and sample_interval must be positive")


@dataclass
class ClassicalRecord:
    sample_times: np.ndarray  # microseconds
    S: np.ndarray  # (T, N, 3) in units where |S_i| = M/2
    energy: np.ndarray  # (T,) coherent-state <H>
    ising_energy: np.ndarray  # (T,) -sum J m_i m_j with m = 2 S^x / M
    M: float
    seed: object = None

    @property
    def magnetization_x(self) -> np.ndarray:
        return 2 * self.S[..., 0] / self.M


def _parts(J, coeffs: ModelCoefficients):
    Jm = J.entries if isinstance(J, CouplingMatrix) else np.asarray(J, float)
    return Jm, np.diag(Jm)


def drift(state, J, coeffs: ModelCoefficients, g=None) -> np.ndarray:
    """Deterministic increments per unit time, shape (N, 3)."""
    g = coeffs.g if g is None else g
    Jm, Jd = _parts(J, coeffs)
    Sx, Sy, Sz = np.asarray(state, float).T
    D, kap, w = coeffs.delta_c, coeffs.kappa, coeffs.omega_z
    ap, am = coeffs.alpha_plus, coeffs.alpha_minus
    reapam = (np.conj(ap) * am).real
    imapam = (np.conj(ap) * am).imag
    prec = w + am.real * g ** 2 * Jd / (4 * D)
    hz = g ** 2 / (2 * D)
    damp = g ** 2 * kap * Jd / (4 * D ** 2)
    JSx = Jm @ Sx
    JSy = Jm @ Sy
    dx = (-prec * Sy + hz * Sz * (am.imag - kap / D * reapam) * JSx
          - damp * (imapam * Sy + abs(am) ** 2 * Sx))
    dy = (prec * Sx + hz * Sz * (2 * ap.real * JSx - (am.imag + kap / D * reapam) * JSy)
          - damp * (imapam * Sx + abs(ap) ** 2 * Sy))
    dz = (hz * (am.imag * (Sy * JSy - Sx * JSx) + kap / D * reapam * (Sx * JSx + Sy * JSy)
                - 2 * ap.real * Sy * JSx)
          - damp * (abs(ap) ** 2 + abs(am) ** 2) * Sz)
    return np.stack([dx, dy, dz], axis=1)


def diffusion(state, J, coeffs: ModelCoefficients, dW, g=None, eigenvalues=None,
              eigenvectors=None) -> np.ndarray:
    """Stochastic increments for real Wiener increments ``dW`` (one per channel)."""
    g = coeffs.g if g is None else g
    if isinstance(J, CouplingMatrix):
        lam, vec = J.eigenvalues, J.eigenvectors
    else:
        lam, vec = eigenvalues, eigenvectors
        if lam is None:
            lam, vec = np.linalg.eigh(np.asarray(J, float))
            lam = np.clip(lam, 0, None)
    Sx, Sy, Sz = np.asarray(state, float).T
    pref = g * np.sqrt(coeffs.kappa) / (np.sqrt(2) * coeffs.delta_c)
    xi = vec @ (np.sqrt(lam) * np.asarray(dW, float))
    ap, am = coeffs.alpha_plus, coeffs.alpha_minus
    nx = pref * Sz * am.real * xi
    ny = -pref * Sz * ap.imag * xi
    nz = pref * (ap.imag * Sy - am.real * Sx) * xi
    return np.stack([nx, ny, nz], axis=1)


def coherent_energy(n, J, coeffs: ModelCoefficients, M: float = 1.0):
    """<H> in a product of spin-coherent states (unit vectors ``n``, spin j = M/2).

    ``n`` may carry leading batch axes: shape (..., N, 3).
    """
    Jm = J.entries if isinstance(J, CouplingMatrix) else np.asarray(J, float)
    Jd = np.diag(Jm)
    Joff = Jm - np.diag(Jd)
    j = M / 2
    G = coeffs.g ** 2 / (4 * coeffs.delta_c)
    ap, am = coeffs.alpha_plus, coeffs.alpha_minus
    nx, ny, nz = n[..., 0], n[..., 1], n[..., 2]
    hz = coeffs.omega_z + G * Jd * am.real
    E = j * np.sum(hz * nz, axis=-1)
    E = E - 2 * G * ap.real * (j * j * np.einsum("...i,ij,...j->...", nx, Joff, nx)
                               + np.sum(Jd * (j * (j - 0.5) * nx ** 2 + j / 2), axis=-1))
    if am.imag != 0:
        E = E + 2 * G * am.imag * (j * j * np.einsum("...i,ij,...j->...", nx, Joff, ny)
                                   + np.sum(Jd * j * (j - 0.5) * nx * ny, axis=-1))
    return E


def coherent_energy_grad(n, J, coeffs: ModelCoefficients, M: float = 1.0):
    Jm = J.entries if isinstance(J, CouplingMatrix) else np.asarray(J, float)
    Jd = np.diag(Jm)
    Joff = Jm - np.diag(Jd)
    j = M / 2
    G = coeffs.g ** 2 / (4 * coeffs.delta_c)
    ap, am = coeffs.alpha_plus, coeffs.alpha_minus
    nx, ny = n[..., 0], n[..., 1]
    gx = -2 * G * ap.real * (2 * j * j * nx @ Joff + 2 * Jd * j * (j - 0.5) * nx)
    gy = np.zeros_like(nx)
    if am.imag != 0:
        c = 2 * G * am.imag
        gx = gx + c * (j * j * ny @ Joff + Jd * j * (j - 0.5) * ny)
        gy = gy + c * (j * j * nx @ Joff + Jd * j * (j - 0.5) * nx)
    gz = np.broadcast_to(j * (coeffs.omega_z + G * Jd * am.real), nx.shape)
    return np.stack([gx, gy, gz], axis=-1)


# ----------------------------------------------------------------- integrator

@njit(cache=True)
def _coeffs_at(t, quench, r0, r1, gc, gsq, w0, D, kap):
    if quench:
        f = 1.0 if t > 0 else 0.0
    else:
        u = (t - r0) / (r1 - r0)
        u = min(max(u, 0.0), 1.0)
        f = u * u * (3 - 2 * u)
    g = gc * math.sqrt(gsq * f)
    w = w0 * (1 - f)
    t1 = D / complex(-D + w, -kap)
    t2 = D / complex(-D - w, -kap)
    ap = t1 + t2
    am = t1 - t2 if w != 0 else 0j
    return g, w, ap, am


@njit(cache=True)
def _integrate(S, Jm, sqlv, nsteps, dt, quench, r0, r1, gc, gsq, w0, D, kap, M,
               noise, sample_every, out):
    n = S.shape[0]
    Jd = np.empty(n)
    for i in range(n):
        Jd[i] = Jm[i, i]
    half = M / 2
    JSx = np.empty(n)
    JSy = np.empty(n)
    xi = np.empty(n)
    dW = np.empty(n)
    new = np.empty((n, 3))
    sq = math.sqrt(dt)
    si = 0
    for i in range(n):
        for a in range(3):
            out[0, i, a] = S[i, a]
    si = 1
    for step in range(nsteps):
        t = step * dt
        g, w, ap, am = _coeffs_at(t, quench, r0, r1, gc, gsq, w0, D, kap)
        reapam = (ap.conjugate() * am).real
        imapam = (ap.conjugate() * am).imag
        hz = g * g / (2 * D)
        for i in range(n):
            a = 0.0
            b = 0.0
            for j in range(n):
                a += Jm[i, j] * S[j, 0]
                b += Jm[i, j] * S[j, 1]
            JSx[i] = a
            JSy[i] = b
        if noise:
            for k in range(n):
                dW[k] = np.random.standard_normal() * sq
            for i in range(n):
                a = 0.0
                for k in range(n):
                    a += sqlv[i, k] * dW[k]
                xi[i] = a
        pref = g * math.sqrt(kap) / (math.sqrt(2.0) * D)
        for i in range(n):
            Sx = S[i, 0]
            Sy = S[i, 1]
            Sz = S[i, 2]
            prec = w + am.real * g * g * Jd[i] / (4 * D)
            damp = g * g * kap * Jd[i] / (4 * D * D)
            dx = (-prec * Sy + hz * Sz * (am.imag - kap / D * reapam) * JSx[i]
                  - damp * (imapam * Sy + abs(am) ** 2 * Sx))
            dy = (prec * Sx + hz * Sz * (2 * ap.real * JSx[i]
                                         - (am.imag + kap / D * reapam) * JSy[i])
                  - damp * (imapam * Sx + abs(ap) ** 2 * Sy))
            dz = (hz * (am.imag * (Sy * JSy[i] - Sx * JSx[i])
                        + kap / D * reapam * (Sx * JSx[i] + Sy * JSy[i])
                        - 2 * ap.real * Sy * JSx[i])
                  - damp * (abs(ap) ** 2 + abs(am) ** 2) * Sz)
            nx = Sx + dx * dt
            ny = Sy + dy * dt
            nz = Sz + dz * dt
            if noise:
                nx += pref * Sz * am.real * xi[i]
                ny += -pref * Sz * ap.imag * xi[i]
                nz += pref * (ap.imag * Sy - am.real * Sx) * xi[i]
            new[i, 0] = nx
            new[i, 1] = ny
            new[i, 2] = nz
        for i in range(n):
            r = math.sqrt(new[i, 0] ** 2 + new[i, 1] ** 2 + new[i, 2] ** 2)
            if not (r > 0 and r < 1e300):
                return -1
            for a in range(3):
                S[i, a] = new[i, a] * half / r
        if (step + 1) % sample_every == 0:
            for i in range(n):
                for a in range(3):
                    out[si, i, a] = S[i, a]
            si += 1
    return si


@njit(cache=True)
def _seed(s):
    np.random.seed(s)


def initial_classical_state(coupling: CouplingMatrix, M: float, tilt: bool = True,
                            angle: float = 1e-6) -> np.ndarray:
    """z-pole (all down) with an optional small tilt toward +-x set by the top eigenvector."""
    n = coupling.n
    S = np.zeros((n, 3))
    S[:, 2] = -M / 2
    if tilt:
        sgn = np.sign(coupling.eigenvectors[:, 0])
        sgn[sgn == 0] = 1
        S[:, 0] = M / 2 * np.sin(angle) * sgn
        S[:, 2] = -M / 2 * np.cos(angle)
    return S


def integrate_semiclassical(coupling: CouplingMatrix, drive: DriveParams, sde: SdeConfig,
                            M: float = 1.0, cavity: CavityParams | None = None,
                            initial=None) -> ClassicalRecord:
    """Euler-Maruyama integration with per-step renormalisation to |S_i| = M/2."""
    cavity = cavity or CavityParams()
    if not M >= 1:
        raise ValueError("M must be >= 1")
    g_c = critical_coupling(coupling.lambda_max, drive.omega_z0, cavity.delta_c,
                            cavity.kappa, M)
    nsteps = int(round(sde.t_final / sde.dt))
    every = max(1, int(round(sde.sample_interval / sde.dt)))
    n_out = nsteps // every + 1
    S = np.array(initial, float) if initial is not None else \
        initial_classical_state(coupling, M, sde.tilt, sde.tilt_angle)
    out = np.zeros((n_out, coupling.n, 3))
    sqlv = np.ascontiguousarray(coupling.eigenvectors * np.sqrt(coupling.eigenvalues))
    ss = sde.seed if isinstance(sde.seed, np.random.SeedSequence) else \
        np.random.SeedSequence(sde.seed)
    _seed(int(ss.generate_state(1, np.uint32)[0]))
    got = _integrate(S, np.ascontiguousarray(coupling.entries), sqlv, nsteps, sde.dt,
                     drive.quench, drive.ramp_start, drive.ramp_end, g_c,
                     drive.g_final_sq_over_gc_sq, drive.omega_z0, cavity.delta_c,
                     cavity.kappa, float(M), sde.noise, every, out)
    if got < 0 or not np.all(np.isfinite(out)):
        raise FloatingPointError("semiclassical integration blew up (non-finite spin)")
    times = np.arange(n_out) * every * sde.dt
    energy = np.empty(n_out)
    for i, t in enumerate(times):
        g, w = schedule_values(t, drive, g_c)
        c = model_coefficients(g, w, cavity.delta_c, cavity.kappa)
        energy[i] = coherent_energy(out[i] / (M / 2), coupling, c, M)
    m = 2 * out[..., 0] / M
    ising = -np.einsum("ti,ij,tj->t", m, coupling.entries, m)
    return ClassicalRecord(times * 1e6, out, energy, ising, float(M), sde.seed)


def top_mode_amplitude(record: ClassicalRecord, coupling: CouplingMatrix) -> np.ndarray:
    """Transverse projection of the spins on the top J eigenvector, normalised to spin length."""
    v = coupling.eigenvectors[:, 0]
    a = record.S[..., 0] @ v / (record.M / 2)
    b = record.S[..., 1] @ v / (record.M / 2)
    return np.hypot(a, b)


def organization_onset(record: ClassicalRecord, coupling: CouplingMatrix,
                       growth: float = 100.0) -> float:
    """Time (us) at which the top-mode amplitude stops shrinking and starts to grow.

    Below threshold the tilt in the unstable mode precesses and decays; above it the
    mode grows exponentially.  The onset is the minimum of the amplitude before it
    first exceeds ``growth`` times its initial value.  Returns NaN if it never grows.
    """
    R = top_mode_amplitude(record, coupling)
    big = np.nonzero(R > growth * R[0])[0]
    if big.size == 0:
        return float("nan")
    k = int(np.argmin(R[: big[0] + 1]))
    return float(record.sample_times[k])
