"""Replica statistics: overlaps, histograms, clustering, Parisi averages, thermal fits."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.cluster.hierarchy import leaves_list, linkage
from scipy.optimize import minimize_scalar
from scipy.spatial.distance import squareform

from .cavity import CouplingMatrix
from .landscape import MAX_EXHAUSTIVE, all_energies

STEADY_TIME_US = 4000.0
RAW_BINS = 50


@dataclass
class ReplicaSet:
    """<sigma^x> snapshots for R replicas sharing one J: ``sx`` has shape (R, T, N)."""
    sx: np.ndarray
    sample_times: np.ndarray  # microseconds
    steady_time: float = STEADY_TIME_US

    def __post_init__(self):
        self.sx = np.asarray(self.sx, dtype=float)
        if self.sx.ndim != 3:
            raise ValueError("sx must have shape (R, T, N)")
        if np.any(np.abs(self.sx) > 1 + 1e-9):
            raise ValueError("<sigma^x> entries must lie in [-1, 1]")

    @property
    def n_replicas(self) -> int:
        return self.sx.shape[0]

    def snapshot(self, t=None) -> np.ndarray:
        t = self.steady_time if t is None else t
        k = int(np.argmin(np.abs(np.asarray(self.sample_times) - t)))
        return self.sx[:, k, :]


@dataclass
class OverlapMatrix:
    q: np.ndarray
    time: float | None = None


@dataclass
class Histogram:
    """Probabilities on the N+1 admissible values -1, -1+2/N, ..., 1 plus a raw binning."""
    centers: np.ndarray
    probabilities: np.ndarray
    errors: np.ndarray
    raw_edges: np.ndarray | None = None
    raw_probabilities: np.ndarray | None = None
    n_values: int = 0
    values: np.ndarray | None = field(default=None, repr=False)


OverlapHistogram = Histogram


@dataclass
class Dendrogram:
    """Merge tree: nodes 0..R-1 are leaves, R+k is the k-th merge; root has parent -1."""
    parent: np.ndarray
    height: np.ndarray
    n_leaves: int


@dataclass
class UltrametricStats:
    K: np.ndarray
    mean: float
    sigma_d: float


@dataclass
class ThermalFit:
    T_fit: float  # units of T_bar_c
    T_fit_abs: float
    residual: float
    grid: np.ndarray  # absolute temperatures
    objective: np.ndarray
    unconstrained: bool


def _as_snapshot(replicas, t=None) -> np.ndarray:
    if isinstance(replicas, ReplicaSet):
        return replicas.snapshot(t)
    return np.atleast_2d(np.asarray(replicas, dtype=float))


def overlap(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("replica vectors must have equal length")
    return float(np.mean(a * b))


def overlap_matrix(replicas, t=None) -> OverlapMatrix:
    X = _as_snapshot(replicas, t)
    q = X @ X.T / X.shape[1]
    q = 0.5 * (q + q.T)
    if isinstance(replicas, ReplicaSet):
        k = int(np.argmin(np.abs(replicas.sample_times - (replicas.steady_time if t is None else t))))
        t = float(replicas.sample_times[k])
    return OverlapMatrix(np.clip(q, -1.0, 1.0), t)


def admissible_values(n: int) -> np.ndarray:
    return -1.0 + 2.0 * np.arange(n + 1) / n


def _bin_index(v, n: int) -> np.ndarray:
    return np.clip(np.rint((np.asarray(v) + 1.0) * n / 2.0).astype(int), 0, n)


def _binned(idx, n, weights=None):
    p = np.bincount(idx, weights=weights, minlength=n + 1).astype(float)
    return p / p.sum()


def _raw(values):
    edges = np.linspace(-1, 1, RAW_BINS + 1)
    p, _ = np.histogram(np.clip(values, -1, 1), bins=edges)
    return edges, p / max(p.sum(), 1)


def _histogram(values, n, bootstrap_samples, seed):
    values = np.asarray(values, dtype=float)
    idx = _bin_index(values, n)
    probs = _binned(idx, n)
    rng = np.random.default_rng(seed)
    if bootstrap_samples > 0 and values.size > 0:
        boots = np.empty((bootstrap_samples, n + 1))
        for b in range(bootstrap_samples):
            boots[b] = _binned(idx[rng.integers(0, idx.size, idx.size)], n)
        err = boots.std(axis=0)
    else:
        err = np.zeros(n + 1)
    edges, raw = _raw(values)
    return Histogram(admissible_values(n), probs, err, edges, raw, values.size, values)


def offdiagonal(matrix) -> np.ndarray:
    q = matrix.q if isinstance(matrix, OverlapMatrix) else np.asarray(matrix)
    return q[np.triu_indices(q.shape[0], 1)]


def overlap_histogram(matrix, n_spins: int, exclude_self: bool = True,
                      bootstrap_samples: int = 100, seed=0) -> Histogram:
    """Bin the distinct-pair overlaps; bootstrap resamples pairs with replacement."""
    q = matrix.q if isinstance(matrix, OverlapMatrix) else np.asarray(matrix)
    if q.shape[0] < 2:
        raise ValueError("need at least two replicas")
    if exclude_self:
        vals = offdiagonal(q)
    else:
        vals = q[np.triu_indices(q.shape[0], 0)]
    return _histogram(vals, n_spins, bootstrap_samples, seed)


def hierarchical_cluster(matrix):
    """Average-linkage clustering on (1 - q)/2; returns (leaf ordering, Dendrogram)."""
    q = matrix.q if isinstance(matrix, OverlapMatrix) else np.asarray(matrix)
    R = q.shape[0]
    if R == 1:
        return np.array([0]), Dendrogram(np.array([-1]), np.array([0.0]), 1)
    d = np.clip((1.0 - q) / 2.0, 0.0, None)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    Z = linkage(squareform(d, checks=False), method="average")
    order = leaves_list(Z)
    parent = np.full(2 * R - 1, -1, dtype=int)
    height = np.zeros(2 * R - 1)
    for k, (a, b, h, _) in enumerate(Z):
        parent[int(a)] = R + k
        parent[int(b)] = R + k
        height[R + k] = h
    return order, Dendrogram(parent, height, R)


def magnetization_distribution(replicas, t=None, bootstrap_samples: int = 100,
                               seed=0) -> Histogram:
    X = _as_snapshot(replicas, t)
    m = X.mean(axis=1)
    return _histogram(m, X.shape[1], bootstrap_samples, seed)


def parisi_distribution(histograms) -> Histogram:
    """Unweighted average over J realizations; errors added in quadrature."""
    hs = list(histograms)
    if not hs:
        raise ValueError("need at least one histogram")
    c0 = hs[0].centers
    for h in hs[1:]:
        if h.centers.shape != c0.shape or not np.allclose(h.centers, c0):
            raise ValueError("histograms use different binnings")
    P = np.mean([h.probabilities for h in hs], axis=0)
    err = np.sqrt(np.sum([h.errors ** 2 for h in hs], axis=0)) / len(hs)
    raw = None
    if all(h.raw_probabilities is not None for h in hs):
        raw = np.mean([h.raw_probabilities for h in hs], axis=0)
    return Histogram(c0.copy(), P, err, hs[0].raw_edges, raw, sum(h.n_values for h in hs))


def _fwht(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    n = a.size.bit_length() - 1
    for k in range(n):
        a = a.reshape(-1, 2, 1 << k)
        a = np.concatenate([a[:, 0] + a[:, 1], a[:, 0] - a[:, 1]], axis=1)
    return a.reshape(-1)


class _ThermalModel:
    """Caches state energies and popcounts for repeated thermal histograms on one J."""

    def __init__(self, J):
        Jm = J.entries if isinstance(J, CouplingMatrix) else np.asarray(J, dtype=float)
        self.n = Jm.shape[0]
        if self.n > MAX_EXHAUSTIVE:
            raise ValueError(f"thermal enumeration limited to N <= {MAX_EXHAUSTIVE}")
        self.E = all_energies(Jm)
        self.E -= self.E.min()
        codes = np.arange(2 ** self.n)
        self.pop = np.zeros(codes.size, dtype=int)
        for i in range(self.n):
            self.pop += (codes >> i) & 1

    def probabilities(self, T: float) -> np.ndarray:
        if not T > 0:
            raise ValueError("temperature must be positive")
        p = np.exp(-self.E / T)
        p /= p.sum()
        # sum_s p_s p_{s^x} via the Walsh-Hadamard convolution theorem
        f = _fwht(p)
        A = _fwht(f * f) / p.size
        Pd = np.bincount(self.pop, weights=A, minlength=self.n + 1)
        Pd = np.clip(Pd, 0.0, None)
        # q = 1 - 2 d / N  sits at index N - d
        return (Pd / Pd.sum())[::-1]


def thermal_overlap(J, T: float) -> Histogram:
    """Exact Boltzmann overlap distribution over all ordered state pairs (same-state included)."""
    model = _ThermalModel(J)
    P = model.probabilities(T)
    return Histogram(admissible_values(model.n), P, np.zeros_like(P), n_values=0)


def tc_bar(J_ensemble, regime: str = "spin_glass") -> float:
    Js = list(J_ensemble)
    if not Js:
        raise ValueError("empty ensemble")
    lam = [J.lambda_max if isinstance(J, CouplingMatrix) else np.linalg.eigvalsh(J)[-1]
           for J in Js]
    factor = 2.0 if regime == "ferromagnetic" else 1.0
    return float(factor * np.mean(lam))


def fit_temperature(observed: Histogram, J, tc: float | None = None,
                    n_grid: int = 200, span=(1e-3, 10.0), rtol: float = 1e-4) -> ThermalFit:
    """Least-squares fit of a thermal overlap distribution to ``observed``.

    Temperatures are searched on a log grid spanning ``span`` times ``tc`` (default: the
    largest eigenvalue of J) and refined by bounded golden-section in log T.
    """
    p_obs = np.asarray(observed.probabilities, dtype=float)
    if abs(p_obs.sum() - 1) > 1e-9:
        raise ValueError("observed histogram is not normalized")
    model = _ThermalModel(J)
    if p_obs.size != model.n + 1:
        raise ValueError("histogram binning does not match N")
    if tc is None:
        tc = tc_bar([J])
    grid = tc * np.logspace(np.log10(span[0]), np.log10(span[1]), n_grid)

    def obj(T):
        return float(np.sum((p_obs - model.probabilities(T)) ** 2))

    vals = np.array([obj(T) for T in grid])
    k = int(np.argmin(vals))
    lo = np.log(grid[max(k - 1, 0)])
    hi = np.log(grid[min(k + 1, n_grid - 1)])
    res = minimize_scalar(lambda u: obj(np.exp(u)), bounds=(lo, hi), method="bounded",
                          options={"xatol": rtol})
    T_fit = float(np.exp(res.x)) if res.fun <= vals[k] else float(grid[k])
    best = min(float(res.fun), float(vals[k]))
    # paramagnetic data: objective insensitive to T near the optimum or pinned at a grid edge
    edge = k in (0, n_grid - 1)
    flat = obj(2 * T_fit) - best < 0.01 * best + 1e-12 and obj(0.5 * T_fit) - best < 0.01 * best + 1e-12
    return ThermalFit(T_fit / tc, T_fit, best, grid, vals, bool(edge or flat))


def ultrametric_stats(matrix) -> UltrametricStats:
    """K = (d_max - d_med)/sigma(d) over all replica triplets with d = 1 - |q|."""
    q = matrix.q if isinstance(matrix, OverlapMatrix) else np.asarray(matrix)
    R = q.shape[0]
    if R < 3:
        raise ValueError("need at least three replicas")
    d = 1.0 - np.abs(q)
    sigma = float(np.std(d[np.triu_indices(R, 1)]))
    tri = np.array(list(combinations(range(R), 3)))
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    D = np.sort(np.stack([d[a, b], d[a, c], d[b, c]], axis=1), axis=1)
    if sigma == 0:
        K = np.zeros(len(tri))
    else:
        K = (D[:, 2] - D[:, 1]) / sigma
    return UltrametricStats(K, float(K.mean()), sigma)


def binder_ratio(q) -> float:
    """1 - <q^4>/(3 <q^2>^2); NaN when <q^2> = 0 (undefined)."""
    q = np.asarray(q, dtype=float)
    m2 = np.mean(q ** 2)
    if m2 == 0:
        return float("nan")
    return float(1.0 - np.mean(q ** 4) / (3.0 * m2 ** 2))
