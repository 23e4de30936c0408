"""Ising energy landscape of a coupling matrix: energies, local minima, product-state floor.

Configurations are encoded as integers with bit ``i`` set when s_i = -1, the same
convention as the quantum state index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .cavity import CouplingMatrix
from .model import ModelCoefficients
from .semiclassical import coherent_energy, coherent_energy_grad

MAX_EXHAUSTIVE = 24


@dataclass(frozen=True)
class SpinConfiguration:
    s: np.ndarray

    @property
    def encoding(self) -> int:
        return encode(self.s)


@dataclass
class LocalMinimum:
    configuration: np.ndarray
    encoding: int
    energy: float
    occurrence_count: int = 0

    @property
    def z2_partner(self) -> int:
        return self.encoding ^ ((1 << self.configuration.size) - 1)


def _jm(J):
    return J.entries if isinstance(J, CouplingMatrix) else np.asarray(J, dtype=float)


def encode(s) -> int:
    s = np.asarray(s)
    return int(np.sum((s < 0).astype(np.int64) << np.arange(s.size)))


def decode(code: int, n: int) -> np.ndarray:
    return 1 - 2 * ((int(code) >> np.arange(n)) & 1)


def ising_energy(s, J) -> float:
    """E = -sum_ij J_ij s_i s_j, diagonal included."""
    Jm = _jm(J)
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != Jm.shape[0]:
        raise ValueError("configuration length does not match J")
    return -np.einsum("...i,ij,...j->...", s, Jm, s)


@njit(cache=True)
def _scan_minima(J, n):
    """Gray-code sweep over canonical configurations (s_{n-1} = +1)."""
    s = np.ones(n)
    h = np.zeros(n)
    for i in range(n):
        for j in range(n):
            if j != i:
                h[i] += J[i, j]
    codes = []
    code = 0
    total = 1 << (n - 1)
    for k in range(total):
        if k > 0:
            # bit that changes between gray(k-1) and gray(k)
            b = 0
            kk = k
            while (kk & 1) == 0:
                kk >>= 1
                b += 1
            s[b] = -s[b]
            code ^= 1 << b
            for i in range(n):
                if i != b:
                    h[i] += 2 * J[i, b] * s[b]
        ok = True
        for i in range(n):
            if s[i] * h[i] <= 0:  # flip would not strictly raise E
                ok = False
                break
        if ok:
            codes.append(code)
    return codes


def enumerate_local_minima(J) -> list[LocalMinimum]:
    """All strict single-flip local minima, one canonical representative per Z2 pair."""
    Jm = _jm(J)
    n = Jm.shape[0]
    if n > MAX_EXHAUSTIVE:
        raise ValueError(f"exhaustive scan limited to N <= {MAX_EXHAUSTIVE}")
    if n == 1:
        codes = [0]
    else:
        codes = list(_scan_minima(np.ascontiguousarray(Jm), n))
    out = []
    for c in codes:
        s = decode(c, n)
        out.append(LocalMinimum(s, int(c), float(ising_energy(s, Jm))))
    out.sort(key=lambda m: (m.energy, m.encoding))
    return out


def all_energies(J) -> np.ndarray:
    """Ising energy of every configuration, indexed by encoding."""
    Jm = _jm(J)
    n = Jm.shape[0]
    if n > MAX_EXHAUSTIVE:
        raise ValueError(f"exhaustive scan limited to N <= {MAX_EXHAUSTIVE}")
    X = 1.0 - 2.0 * ((np.arange(2 ** n)[:, None] >> np.arange(n)) & 1)
    return -np.einsum("si,ij,sj->s", X, Jm, X)


def hamming(a, b) -> int:
    return int(np.sum(np.asarray(a) != np.asarray(b)))


def nearest_minimum(s, minima: list[LocalMinimum]):
    """Closest minimum (or its Z2 partner) in Hamming distance.

    Ties go to the lower energy, then the lower canonical encoding.
    """
    if not minima:
        raise ValueError("minima list is empty")
    s = np.asarray(s)
    best = None
    for m in minima:
        d = min(hamming(s, m.configuration), hamming(s, -m.configuration))
        key = (d, m.energy, m.encoding)
        if best is None or key < best[0]:
            best = (key, m)
    return best[1], best[0][0]


def assign_occurrences(configs, minima: list[LocalMinimum], cutoff: int = 0):
    """Count replicas landing within ``cutoff`` flips of each minimum; returns distances."""
    for m in minima:
        m.occurrence_count = 0
    dists = []
    for s in configs:
        m, d = nearest_minimum(s, minima)
        dists.append(d)
        if d <= cutoff:
            m.occurrence_count += 1
    return np.array(dists, dtype=int)


def _project(n, g):
    return g - np.sum(g * n, axis=-1, keepdims=True) * n


def semiclassical_energy_floor(J, g, coeffs: ModelCoefficients, n_samples: int = 10_000,
                               seed=0, M: float = 1.0, tol: float = 1e-8,
                               max_iter: int = 20_000, return_state: bool = False):
    """Lowest <H> found over product states by random restarts + projected gradient descent.

    ``g`` overrides ``coeffs.g``.  Convergence is declared when every restart's tangent
    gradient norm falls below ``tol`` times the largest single-spin field scale.
    This is a stochastic upper estimate of the true product-state minimum.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    c = ModelCoefficients(coeffs.alpha_plus, coeffs.alpha_minus, float(g), coeffs.delta_c,
                          coeffs.kappa, coeffs.omega_z)
    Jm = _jm(J)
    n = Jm.shape[0]
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n_samples, n, 3))
    x /= np.linalg.norm(x, axis=-1, keepdims=True)
    E = coherent_energy(x, Jm, c, M)
    grad = _project(x, coherent_energy_grad(x, Jm, c, M))
    scale = max(np.max(np.abs(coherent_energy_grad(np.ones((1, n, 3)) / np.sqrt(3), Jm, c, M))),
                1e-300)
    step = np.full(n_samples, 1.0 / scale)
    done = np.zeros(n_samples, bool)
    for _ in range(max_iter):
        gn = np.sqrt(np.sum(grad ** 2, axis=(-1, -2)))
        done |= gn <= tol * scale
        active = ~done
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        xa, ga, Ea, sa = x[idx], grad[idx], E[idx], step[idx] * 2.0
        g2 = np.sum(ga ** 2, axis=(-1, -2))
        todo = np.ones(idx.size, bool)
        newx = xa.copy()
        newE = Ea.copy()
        for _bt in range(60):
            if not todo.any():
                break
            t = np.nonzero(todo)[0]
            cand = xa[t] - sa[t, None, None] * ga[t]
            cand /= np.linalg.norm(cand, axis=-1, keepdims=True)
            Ec = coherent_energy(cand, Jm, c, M)
            acc = Ec <= Ea[t] - 1e-4 * sa[t] * g2[t]
            newx[t[acc]] = cand[acc]
            newE[t[acc]] = Ec[acc]
            todo[t[acc]] = False
            sa[t[~acc]] *= 0.5
        # failed line search or round-off sized progress: numerically stationary
        done[idx] |= todo | (Ea - newE <= 1e-14 * np.abs(Ea))
        x[idx] = newx
        E[idx] = newE
        step[idx] = sa
        grad[idx] = _project(x[idx], coherent_energy_grad(x[idx], Jm, c, M))
    k = int(np.argmin(E))
    if return_state:
        return float(E[k]), x[k]
    return float(E[k])
