"""Confocal-cavity coupling matrices.

Positions are dimensionless (units of the fundamental-mode waist ``w0``), so
every formula below is written in ``x / w0``.  The interaction between two
spin ensembles is the even-parity confocal Green's function; a truncated
Hermite-Gauss mode sum is provided as an independent check of the closed form.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import eval_hermite, gammaln

EPS_CLAMP = 1e-8
IMAG_TOL = 1e-8

REGIME_STD = {"spin_glass": 2.0, "ferromagnetic": 0.5}


@dataclass(frozen=True)
class CavityParams:
    w0: float = 35.0  # micrometres; positions are stored in units of w0
    alpha_c: float = 0.02
    kappa: float = 2 * np.pi * 260e3
    delta_c: float = -2 * np.pi * 80e6
    n_modes_oracle: int = 60

    def __post_init__(self):
        if not self.w0 > 0:
            raise ValueError("w0 must be positive")
        if not self.alpha_c > 0:
            raise ValueError("alpha_c must be positive")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.delta_c < 0:
            raise ValueError("delta_c must be negative (red-detuned pump)")
        if self.n_modes_oracle < 1:
            raise ValueError("n_modes_oracle must be >= 1")


@dataclass(frozen=True)
class SpinLayout:
    positions: np.ndarray  # (N, 2), units of w0
    ensemble_size: int = 1
    regime: str = "spin_glass"
    seed: int | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 1:
            raise ValueError("positions must have shape (N, 2) with N >= 1")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class CouplingMatrix:
    entries: np.ndarray
    eigenvalues: np.ndarray = field(repr=False)  # descending
    eigenvectors: np.ndarray = field(repr=False)  # columns v^k, same order

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[0])

    @classmethod
    def from_matrix(cls, J) -> "CouplingMatrix":
        """Wrap an explicit symmetric matrix, computing and clamping its spectrum."""
        J = np.array(J, dtype=float, copy=True)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise ValueError("J must be square")
        if not np.array_equal(J, J.T):
            raise ValueError("J must be exactly symmetric")
        lam, vec = np.linalg.eigh(J)
        order = np.argsort(lam)[::-1]
        lam, vec = lam[order], vec[:, order]
        scale = max(np.linalg.norm(J, 2), np.finfo(float).tiny)
        if lam.min() < -EPS_CLAMP * scale:
            raise ValueError(
                f"J has eigenvalue {lam.min():.3e} below the clamp tolerance; "
                "the coupling matrix must be positive semidefinite")
        lam = np.where(lam < 0, 0.0, lam)
        return cls(J, lam, vec)


def sample_positions(regime: str, n: int, rng_seed, ensemble_size: int = 1) -> SpinLayout:
    """Gaussian positions about the cavity axis; std 2 w0 (glass) or 0.5 w0 (ferro)."""
    if regime not in REGIME_STD:
        raise ValueError(f"unknown regime {regime!r}")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng_seed)
    pos = rng.normal(0.0, REGIME_STD[regime], size=(n, 2))
    seed = rng_seed if isinstance(rng_seed, (int, np.integer)) else None
    return SpinLayout(pos, ensemble_size, regime, seed)


def green_function(r, r_prime, alpha: complex) -> complex:
    """Closed-form harmonic-oscillator Green's function (Mehler kernel).

    ``G = e^a / (2 pi sinh a) exp[-(r-r')^2 / (2 tanh(a/2)) - (r+r')^2 / (2 coth(a/2))]``
    with positions in units of w0.  Broadcasts over leading axes of ``r``/``r_prime``.
    """
    alpha = complex(alpha)
    if alpha.real <= 0:
        raise ValueError("Re(alpha) must be positive")
    r = np.asarray(r, dtype=float)
    rp = np.asarray(r_prime, dtype=float)
    dm = np.sum((r - rp) ** 2, axis=-1)
    dp = np.sum((r + rp) ** 2, axis=-1)
    th = np.tanh(alpha / 2)
    pref = np.exp(alpha) / (2 * np.pi * np.sinh(alpha))
    return pref * np.exp(-dm / (2 * th) - dp * th / 2)


def green_function_modesum(r, r_prime, alpha: complex, n_modes: int,
                           parity_mod4: bool = False) -> complex:
    """Truncated sum over Hermite-Gauss modes, sum_{l+m<n_modes} Xi(r) Xi(r') e^{-(l+m) a}.

    Mode functions are the 1-D oscillator eigenfunctions in ``x = sqrt(2) r / w0``
    (the TEM_lm intensity profile ``exp(-2 r^2 / w0^2)``).  With ``parity_mod4`` only
    modes with ``l + m = 0 mod 4`` are kept, which is the confocal interaction D directly.
    """
    alpha = complex(alpha)
    x1 = np.sqrt(2.0) * np.asarray(r, dtype=float)
    x2 = np.sqrt(2.0) * np.asarray(r_prime, dtype=float)
    n = np.arange(n_modes)
    # log-normalised Hermite functions avoid overflow for large orders
    lognorm = -0.5 * (n * np.log(2.0) + gammaln(n + 1) + 0.5 * np.log(np.pi))

    def hermite_fn(x):
        vals = np.array([eval_hermite(k, x) for k in n])
        return vals * np.exp(lognorm - x ** 2 / 2)

    ax, ay = hermite_fn(x1[0]), hermite_fn(x1[1])
    bx, by = hermite_fn(x2[0]), hermite_fn(x2[1])
    px = ax * bx
    py = ay * by
    l, m = np.meshgrid(n, n, indexing="ij")
    keep = (l + m) < n_modes
    if parity_mod4:
        keep &= ((l + m) % 4) == 0
    terms = np.outer(px, py) * np.exp(-(l + m) * alpha)
    return complex(np.sum(terms[keep]))


def _g_plus(r, rp, alpha):
    return 0.5 * (green_function(r, rp, alpha) + green_function(r, -np.asarray(rp), alpha))


def confocal_interaction(r, r_prime, params: CavityParams):
    """Even-parity confocal interaction D(r, r') = [G+(a) + G+(a + i pi/2)] / 2."""
    a = params.alpha_c
    val = 0.5 * (_g_plus(r, r_prime, a) + _g_plus(r, r_prime, a + 0.5j * np.pi))
    val = np.asarray(val)
    resid = np.abs(val.imag)
    if np.any(resid > IMAG_TOL * np.maximum(np.abs(val), 1e-300)):
        raise ArithmeticError("confocal interaction has a non-negligible imaginary part")
    out = val.real
    return float(out) if out.ndim == 0 else out


def build_coupling_matrix(layout: SpinLayout, params: CavityParams) -> CouplingMatrix:
    pos = layout.positions
    J = confocal_interaction(pos[:, None, :], pos[None, :, :], params)
    J = np.atleast_2d(J)
    J = 0.5 * (J + J.T)  # exact symmetry as stored
    return CouplingMatrix.from_matrix(J)


def coupling_matrix_for(regime: str, n: int, seed, params: CavityParams | None = None):
    params = params or CavityParams()
    layout = sample_positions(regime, n, seed)
    return layout, build_coupling_matrix(layout, params)
