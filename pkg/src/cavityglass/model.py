"""Drive schedules, atom-only model coefficients and closed-form diagnostics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .cavity import CouplingMatrix

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class DriveParams:
    g_final_sq_over_gc_sq: float = 5.0
    omega_z0: float = TWO_PI * 10e3
    ramp_start: float = 100e-6
    ramp_end: float = 700e-6
    quench: bool = False

    def __post_init__(self):
        if not self.ramp_end > self.ramp_start:
            raise ValueError("ramp_end must exceed ramp_start")
        if not self.g_final_sq_over_gc_sq > 0:
            raise ValueError("g_final_sq_over_gc_sq must be positive")
        if not self.omega_z0 >= 0:
            raise ValueError("omega_z0 must be nonnegative")


@dataclass(frozen=True)
class ModelCoefficients:
    alpha_plus: complex
    alpha_minus: complex
    g: float
    delta_c: float
    kappa: float
    omega_z: float


@dataclass(frozen=True)
class CollapseSpec:
    index: int
    prefactor: complex
    weights_x: np.ndarray  # a_i = prefactor * v_i * alpha_plus
    weights_y: np.ndarray  # b_i = prefactor * v_i * i * alpha_minus


def ramp_fraction(t, drive: DriveParams | None = None):
    """Cubic smoothstep between ``ramp_start`` and ``ramp_end`` (vectorised)."""
    drive = drive or DriveParams()
    t = np.asarray(t, dtype=float)
    if drive.quench:
        out = np.where(t > 0, 1.0, 0.0)
    else:
        u = np.clip((t - drive.ramp_start) / (drive.ramp_end - drive.ramp_start), 0.0, 1.0)
        out = u * u * (3 - 2 * u)
    return float(out) if out.ndim == 0 else out


def schedule_values(t, drive: DriveParams, g_c: float):
    if not g_c > 0:
        raise ValueError("g_c must be positive")
    f = ramp_fraction(t, drive)
    g = g_c * np.sqrt(drive.g_final_sq_over_gc_sq * np.asarray(f))
    wz = drive.omega_z0 * (1 - np.asarray(f))
    if np.ndim(g) == 0:
        return float(g), float(wz)
    return g, wz


def threshold_time(drive: DriveParams) -> float:
    """Time at which g^2 crosses g_c^2, i.e. f(t_c) = 1 / g_final_sq_over_gc_sq."""
    target = 1.0 / drive.g_final_sq_over_gc_sq
    if drive.quench:
        return 0.0
    if target >= 1.0:
        return float(drive.ramp_end)
    return brentq(lambda t: ramp_fraction(t, drive) - target,
                  drive.ramp_start, drive.ramp_end, xtol=1e-15, rtol=1e-14)


def alpha_coefficients(omega_z, delta_c, kappa):
    if delta_c == 0:
        raise ValueError("delta_c must be nonzero")
    t1 = delta_c / (-delta_c + omega_z - 1j * kappa)
    t2 = delta_c / (-delta_c - omega_z - 1j * kappa)
    a_minus = t1 - t2
    if omega_z == 0:
        a_minus = 0j
    return complex(t1 + t2), complex(a_minus)


def model_coefficients(g, omega_z, delta_c, kappa) -> ModelCoefficients:
    ap, am = alpha_coefficients(omega_z, delta_c, kappa)
    return ModelCoefficients(ap, am, float(g), float(delta_c), float(kappa), float(omega_z))


def critical_coupling(lambda_max, omega_z, delta_c, kappa, M=1):
    if not lambda_max > 0:
        raise ValueError("lambda_max must be positive")
    if not omega_z > 0:
        raise ValueError("omega_z must be positive; threshold undefined")
    return float(np.sqrt(omega_z * (delta_c ** 2 + kappa ** 2) / (lambda_max * abs(delta_c) * M)))


def _eigs(J):
    if isinstance(J, CouplingMatrix):
        return J.eigenvalues
    lam = np.linalg.eigvalsh(np.asarray(J, dtype=float))
    return np.sort(lam)[::-1]


def stability_eigenvalues(g, J, omega_z, delta_c, kappa, M=1):
    """Normal-phase stability spectrum: N ones plus 1 - M g^2 |D| lam_k / (w (D^2 + k^2))."""
    if not omega_z > 0:
        raise ValueError("omega_z must be positive")
    lam = _eigs(J)
    nontrivial = 1 - M * g ** 2 * abs(delta_c) * lam / (omega_z * (delta_c ** 2 + kappa ** 2))
    return np.concatenate([nontrivial, np.ones_like(lam)])


def rate_estimates(g, J, delta_c, kappa, omega_z, g_c, beta):
    """Summed decoherence rate per spin and total homodyne detection rate (1/s).

    The detection estimate uses the bare channel rate ``lam_k kappa w g^2 / (|D| g_c^2)``
    boosted by ``beta^2``; ``omega_z`` should be the threshold-setting value.
    """
    lam = _eigs(J)
    decoh = kappa * g ** 2 / delta_c ** 2 * float(np.sum(lam))
    bare = lam * kappa * omega_z * g ** 2 / (abs(delta_c) * g_c ** 2)
    detect = float(np.sum(np.sqrt(np.maximum(bare, 0.0) * beta ** 2)))
    return float(decoh), detect


def effective_temperature(delta_c, kappa):
    """Return (signed, magnitude) of (D^2 + k^2) / (4 D) in angular-frequency units."""
    if delta_c == 0:
        raise ValueError("delta_c must be nonzero")
    t = (delta_c ** 2 + kappa ** 2) / (4 * delta_c)
    return float(t), float(abs(t))


def collapse_specs(coupling: CouplingMatrix, coeffs: ModelCoefficients) -> list[CollapseSpec]:
    specs = []
    for k in range(coupling.n):
        pref = coeffs.g * np.sqrt(coupling.eigenvalues[k] * coeffs.kappa) / (2 * coeffs.delta_c)
        v = coupling.eigenvectors[:, k]
        specs.append(CollapseSpec(k, complex(pref),
                                  pref * v * coeffs.alpha_plus,
                                  pref * v * 1j * coeffs.alpha_minus))
    return specs
