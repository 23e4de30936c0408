"""Experiment pipeline: J ensemble -> trajectories -> replica analysis -> report.

Disk layout under the output root::

    J_000/matrix.csv, layout.json, traj_0000.csv/.json, sc_traj_0000.csv/.json, ...
    analysis/J_000/*.csv, analysis/*.csv
    report/*.csv
    manifest.json

Every random stream is derived from ``(master_seed, stream, j, k, attempt)`` through
``SeedSequence`` spawn keys, so results do not depend on the worker count or order.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import __version__
from . import io
from .cavity import CouplingMatrix, build_coupling_matrix, sample_positions
from .config import ExperimentConfig
from .landscape import assign_occurrences, enumerate_local_minima, semiclassical_energy_floor
from .model import (critical_coupling, model_coefficients, schedule_values, stability_eigenvalues,
                    threshold_time)
from .quantum import evolve_trajectory
from .rsb import (ReplicaSet, binder_ratio, fit_temperature, hierarchical_cluster,
                  magnetization_distribution, offdiagonal, overlap_histogram, overlap_matrix,
                  parisi_distribution, tc_bar, ultrametric_stats)
from .semiclassical import SdeConfig, integrate_semiclassical

log = logging.getLogger(__name__)

STREAM_LAYOUT, STREAM_QUANTUM, STREAM_CLASSICAL = 0, 1, 2
PREFIX = {"quantum": "traj", "semiclassical": "sc_traj"}
NUMERICAL_ERRORS = (ArithmeticError, FloatingPointError, np.linalg.LinAlgError)


class EmptyStoreError(ValueError):
    """Raised when analysis finds no (or too few) stored trajectories."""


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    master_seed: int
    j_seeds: dict = field(default_factory=dict)
    trajectory_seeds: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    wall_clock_s: float = 0.0
    floors: dict = field(default_factory=dict)
    inventory: dict = field(default_factory=dict)


def seed_sequence(master_seed: int, stream: int, *key) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(stream, *key))


def layout_seed(master_seed: int, j: int) -> int:
    return int(seed_sequence(master_seed, STREAM_LAYOUT, j).generate_state(1, np.uint32)[0])


def j_dir(root, j: int) -> Path:
    return Path(root) / f"J_{j:03d}"


def _seed_repr(ss: np.random.SeedSequence) -> dict:
    return {"entropy": int(ss.entropy), "spawn_key": list(ss.spawn_key)}


# ------------------------------------------------------------------- ensemble

def build_ensemble(cfg: ExperimentConfig, root=None, write: bool = True):
    """Sample n_J layouts and coupling matrices; optionally persist them."""
    root = Path(root or cfg.output_root)
    ens = cfg.ensemble
    out = []
    for j in range(ens.n_j):
        lay = sample_positions(ens.regime, ens.n_spins, layout_seed(cfg.master_seed, j),
                               ensemble_size=int(round(ens.M)))
        cp = build_coupling_matrix(lay, cfg.cavity)
        out.append((lay, cp))
        if write:
            io.write_coupling(j_dir(root, j), lay, cp, threshold_info(cfg, cp))
    return out


def threshold_info(cfg: ExperimentConfig, cp: CouplingMatrix) -> dict:
    c, d = cfg.cavity, cfg.drive
    gc = critical_coupling(cp.lambda_max, d.omega_z0, c.delta_c, c.kappa, cfg.ensemble.M)
    ev = stability_eigenvalues(gc, cp.entries, d.omega_z0, c.delta_c, c.kappa, cfg.ensemble.M)
    return {"lambda_max": cp.lambda_max, "g_c": gc, "t_c_s": threshold_time(d),
            "min_stability_eigenvalue_at_g_c": float(ev.min())}


def load_ensemble(root):
    dirs = sorted(p for p in Path(root).glob("J_*") if (p / "matrix.csv").exists())
    if not dirs:
        raise EmptyStoreError(f"no J matrices under {root}")
    return [io.read_coupling(d)[:2] for d in dirs]


# --------------------------------------------------------------- trajectories

def _run_task(task):
    engine, cp, cfg_parts, master, j, k = task
    cavity, drive, sim, sde, M = cfg_parts
    last = None
    for attempt in (0, 1):
        if engine == "quantum":
            ss = seed_sequence(master, STREAM_QUANTUM, j, k, attempt)
        else:
            ss = seed_sequence(master, STREAM_CLASSICAL, j, k, attempt)
        try:
            if engine == "quantum":
                rec = evolve_trajectory(cp, drive, sim, ss, cavity)
            else:
                rec = integrate_semiclassical(cp, drive, SdeConfig(**{**asdict(sde), "seed": ss}),
                                              M, cavity)
            return j, k, attempt, _seed_repr(ss), rec, None
        except NUMERICAL_ERRORS as exc:
            last = f"{type(exc).__name__}: {exc}"
    return j, k, 1, _seed_repr(ss), None, last


def run_trajectories(cfg: ExperimentConfig, engine: str, couplings, root=None,
                     workers: int | None = None, manifest: RunManifest | None = None):
    """Run n_trajectories per J for one engine and write one CSV + JSON per trajectory."""
    if engine not in PREFIX:
        raise ValueError(f"engine must be one of {tuple(PREFIX)}")
    root = Path(root or cfg.output_root)
    workers = workers or cfg.workers
    parts = (cfg.cavity, cfg.drive, cfg.sim, cfg.sde, cfg.ensemble.M)
    tasks = [(engine, cp, parts, cfg.master_seed, j, k)
             for j, cp in enumerate(couplings) for k in range(cfg.ensemble.n_trajectories)]
    manifest = manifest or RunManifest(cfg.config_hash(), __version__, cfg.master_seed)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(_run_task, tasks, chunksize=1):
                _store(res, engine, root, manifest)
    else:
        for t in tasks:
            _store(_run_task(t), engine, root, manifest)
    return manifest


def _store(res, engine, root, manifest: RunManifest):
    j, k, attempt, seed, rec, err = res
    name = f"{PREFIX[engine]}_{k:04d}"
    manifest.trajectory_seeds[f"{engine}/J_{j:03d}/{k:04d}"] = seed
    if rec is None:
        manifest.failures.append({"engine": engine, "j": j, "k": k, "error": err})
        log.warning("trajectory %s J_%03d/%d failed twice: %s", engine, j, k, err)
        return
    if attempt:
        manifest.notes.append(f"{engine} J_{j:03d}/{k:04d} succeeded on retry with derived seed")
    d = j_dir(root, j)
    if engine == "quantum":
        io.write_quantum_trajectory(d / f"{name}.csv", rec)
        meta = {"engine": engine, "seed": seed, "attempt": attempt,
                "n_jumps": int(rec.jump_times.size),
                "jumps_per_channel": np.bincount(rec.jump_channels,
                                                 minlength=rec.n_spins).tolist()}
    else:
        io.write_classical_trajectory(d / f"{name}.csv", rec)
        meta = {"engine": engine, "seed": seed, "attempt": attempt, "M": rec.M}
    io.write_json(d / f"{name}.json", meta)


def load_replicas(root, j: int, engine: str = "quantum", steady_time_us: float | None = None):
    """Stack stored trajectories of one J into a ReplicaSet (plus raw columns)."""
    files = sorted(j_dir(root, j).glob(f"{PREFIX[engine]}_*.csv"))
    if not files:
        raise EmptyStoreError(f"no {engine} trajectories for J_{j:03d}")
    trajs = [io.read_trajectory(f) for f in files]
    t = trajs[0]["t_us"]
    n_t = min(len(tr["t_us"]) for tr in trajs)
    sx = np.stack([tr["x"][:n_t] for tr in trajs])
    steady = float(t[n_t - 1]) if steady_time_us is None else steady_time_us
    return ReplicaSet(np.clip(sx, -1, 1), t[:n_t], steady), trajs


# ------------------------------------------------------------------- analysis

def _steady_signs(reps: ReplicaSet) -> np.ndarray:
    s = np.sign(reps.snapshot())
    s[s == 0] = 1
    return s.astype(int)


def analyze_j(cfg: ExperimentConfig, root, j: int, cp: CouplingMatrix, engine: str,
              tc: float) -> dict:
    """All per-J statistics; writes analysis/J_xxx/*.csv and returns a summary row."""
    root = Path(root)
    reps, trajs = load_replicas(root, j, engine, cfg.steady_time * 1e6)
    if reps.n_replicas < 2:
        raise EmptyStoreError(f"J_{j:03d}: need >= 2 trajectories for overlap analysis")
    out = root / "analysis" / f"J_{j:03d}"
    n = cp.n
    nb = cfg.analysis.bootstrap_samples
    Q = overlap_matrix(reps)
    hist = overlap_histogram(Q, n, bootstrap_samples=nb, seed=j)
    order, dend = hierarchical_cluster(Q)
    mag = magnetization_distribution(reps, bootstrap_samples=nb, seed=j)
    io.write_csv(out / "overlap_matrix.csv", [f"r{i}" for i in range(Q.q.shape[0])], Q.q)
    io.write_csv(out / "cluster_order.csv", ["position", "replica"],
                 np.column_stack([np.arange(order.size), order]))
    io.write_csv(out / "dendrogram.csv", ["node", "parent", "height"],
                 np.column_stack([np.arange(dend.parent.size), dend.parent, dend.height]))
    io.write_csv(out / "overlap_hist.csv", ["q", "probability", "error"],
                 np.column_stack([hist.centers, hist.probabilities, hist.errors]))
    io.write_csv(out / "overlap_raw.csv", ["q_low", "q_high", "probability"],
                 np.column_stack([hist.raw_edges[:-1], hist.raw_edges[1:], hist.raw_probabilities]))
    io.write_csv(out / "magnetization_hist.csv", ["m", "probability", "error"],
                 np.column_stack([mag.centers, mag.probabilities, mag.errors]))

    # time series of the overlap distribution and the Binder ratio
    rows, brows = [], []
    for ti, t in enumerate(reps.sample_times):
        q = overlap_matrix(reps.sx[:, ti, :]).q
        h = overlap_histogram(q, n, bootstrap_samples=0)
        rows.append([t, *h.probabilities])
        b = binder_ratio(offdiagonal(q))
        brows.append([t, b, float(np.isfinite(b))])
    io.write_csv(out / "overlap_vs_time.csv", ["t_us", *[f"p{k}" for k in range(n + 1)]], rows)
    io.write_csv(out / "binder_vs_time.csv", ["t_us", "binder", "defined"], brows)

    summary = {"j": j, "n_replicas": reps.n_replicas, "lambda_max": cp.lambda_max}
    if reps.n_replicas >= 3:
        us = ultrametric_stats(Q)
        edges = np.linspace(0, max(float(us.K.max()), 1e-12), cfg.analysis.k_bins + 1)
        cnt, _ = np.histogram(us.K, bins=edges)
        io.write_csv(out / "ultrametric_k_hist.csv", ["k_low", "k_high", "count"],
                     np.column_stack([edges[:-1], edges[1:], cnt]))
        summary["mean_K"] = us.mean
        summary["min_K"] = float(us.K.min())
    else:
        summary["mean_K"] = summary["min_K"] = float("nan")

    # landscape: map steady configurations to local minima
    minima = enumerate_local_minima(cp)
    signs = _steady_signs(reps)
    dist = assign_occurrences(signs, minima, cfg.analysis.minima_cutoff)
    io.write_csv(out / "minima.csv", ["encoding", "energy", "count"],
                 [[m.encoding, m.energy, m.occurrence_count] for m in minima])
    io.write_csv(out / "minima_distance.csv", ["replica", "distance"],
                 np.column_stack([np.arange(dist.size), dist]))
    summary["n_minima"] = len(minima)
    summary["frac_distance0"] = float(np.mean(dist == 0))
    summary["frac_distance1"] = float(np.mean(dist == 1))
    if len(minima) >= 3:
        rho = spearmanr([m.energy for m in minima], [m.occurrence_count for m in minima])[0]
        summary["spearman_energy_occupancy"] = float(rho)
    else:
        summary["spearman_energy_occupancy"] = float("nan")

    fit = fit_temperature(hist, cp, tc=tc)
    io.write_csv(out / "thermal_fit_objective.csv", ["T", "objective"],
                 np.column_stack([fit.grid, fit.objective]))
    summary.update(T_fit=fit.T_fit, fit_residual=fit.residual,
                   fit_unconstrained=float(fit.unconstrained))
    summary["binder_steady"] = binder_ratio(offdiagonal(Q))
    if "S" in trajs[0]:
        k = int(np.argmin(np.abs(reps.sample_times - reps.steady_time)))
        ent = np.stack([tr["S"][k] for tr in trajs])
        ok = np.all(ent < 1e-2, axis=1) & np.all(np.abs(reps.snapshot()) > 0.99, axis=1)
        summary["frac_classical"] = float(np.mean(ok))
    summary["_hist"] = hist
    summary["_mag"] = mag
    return summary


SUMMARY_COLS = ["j", "n_replicas", "lambda_max", "mean_K", "min_K", "n_minima",
                "frac_distance0", "frac_distance1", "spearman_energy_occupancy", "T_fit",
                "fit_residual", "fit_unconstrained", "binder_steady"]


def analyze(cfg: ExperimentConfig, root=None, engine: str = "quantum") -> list[dict]:
    """Full analysis suite over every stored J; writes analysis/ aggregates."""
    root = Path(root or cfg.output_root)
    ens = load_ensemble(root)
    couplings = [cp for _, cp in ens]
    tc = tc_bar(couplings, ens[0][0].regime)
    rows = [analyze_j(cfg, root, j, cp, engine, tc) for j, cp in enumerate(couplings)]
    agg = root / "analysis"
    par = parisi_distribution([r["_hist"] for r in rows])
    mag = parisi_distribution([r["_mag"] for r in rows])
    io.write_csv(agg / "parisi.csv", ["q", "probability", "error"],
                 np.column_stack([par.centers, par.probabilities, par.errors]))
    io.write_csv(agg / "magnetization.csv", ["m", "probability", "error"],
                 np.column_stack([mag.centers, mag.probabilities, mag.errors]))
    io.write_csv(agg / "summary.csv", SUMMARY_COLS,
                 [[r.get(c, np.nan) for c in SUMMARY_COLS] for r in rows])
    return rows


def fit_temperatures(cfg: ExperimentConfig, root=None, engine: str = "quantum") -> dict:
    """Per-J thermal fits on the stored steady-state overlap histograms."""
    root = Path(root or cfg.output_root)
    ens = load_ensemble(root)
    couplings = [cp for _, cp in ens]
    tc = tc_bar(couplings, ens[0][0].regime)
    rows = []
    for j, cp in enumerate(couplings):
        reps, _ = load_replicas(root, j, engine, cfg.steady_time * 1e6)
        h = overlap_histogram(overlap_matrix(reps), cp.n, bootstrap_samples=0)
        f = fit_temperature(h, cp, tc=tc)
        rows.append([j, f.T_fit, f.T_fit_abs, f.residual, float(f.unconstrained)])
    io.write_csv(root / "analysis" / "fit_temperature.csv",
                 ["j", "T_fit_over_tc", "T_fit", "residual", "unconstrained"], rows)
    T = np.array([r[1] for r in rows])
    return {"tc_bar": tc, "mean_T_fit": float(T.mean()), "std_T_fit": float(T.std()),
            "n": len(rows)}


def ultrametric(cfg: ExperimentConfig, root=None, engine: str = "quantum") -> dict:
    root = Path(root or cfg.output_root)
    ens = load_ensemble(root)
    rows = []
    for j, _ in enumerate(ens):
        reps, _ = load_replicas(root, j, engine, cfg.steady_time * 1e6)
        if reps.n_replicas < 3:
            raise EmptyStoreError(f"J_{j:03d}: need >= 3 trajectories")
        us = ultrametric_stats(overlap_matrix(reps))
        rows.append([j, us.mean, float(us.K.min()), us.sigma_d])
    io.write_csv(root / "analysis" / "ultrametric.csv", ["j", "mean_K", "min_K", "sigma_d"], rows)
    return {"mean_K": float(np.mean([r[1] for r in rows])), "n": len(rows)}


# --------------------------------------------------------------------- report

def report(cfg: ExperimentConfig, root=None, k_bins: int | None = None) -> dict:
    """Aggregate analysis CSVs into figure-ready tables under report/."""
    root = Path(root or cfg.output_root)
    agg = root / "analysis"
    if not (agg / "summary.csv").exists():
        raise EmptyStoreError("run `analyze` before `report`")
    k_bins = k_bins or cfg.analysis.k_bins
    rep = root / "report"
    counts = {}
    for name in ("parisi", "magnetization"):
        h, d = io.read_csv(agg / f"{name}.csv")
        io.write_csv(rep / f"{name}.csv", h, d)
        counts[name] = d.shape[0]
    # pooled ultrametric K histogram with the requested number of bins
    Ks = []
    for p in sorted(agg.glob("J_*/overlap_matrix.csv")):
        _, q = io.read_csv(p)
        if q.shape[0] >= 3:
            Ks.append(ultrametric_stats(q).K)
    if Ks:
        K = np.concatenate(Ks)
        edges = np.linspace(0, max(float(K.max()), 1e-12), k_bins + 1)
        cnt, _ = np.histogram(K, bins=edges)
        io.write_csv(rep / "ultrametric_k_hist.csv", ["k_low", "k_high", "probability"],
                     np.column_stack([edges[:-1], edges[1:], cnt / cnt.sum()]))
        counts["ultrametric_k_hist"] = k_bins
    # overlap distribution and Binder ratio versus time, averaged over J
    ov = [io.read_csv(p) for p in sorted(agg.glob("J_*/overlap_vs_time.csv"))]
    if ov:
        n_t = min(d.shape[0] for _, d in ov)
        mean = np.mean([d[:n_t] for _, d in ov], axis=0)
        io.write_csv(rep / "overlap_vs_time.csv", ov[0][0], mean)
        counts["overlap_vs_time"] = n_t
    bd = [io.read_csv(p)[1] for p in sorted(agg.glob("J_*/binder_vs_time.csv"))]
    if bd:
        n_t = min(d.shape[0] for d in bd)
        B = np.array([d[:n_t, 1] for d in bd])
        with np.errstate(invalid="ignore"):
            mb = np.where(np.all(np.isfinite(B), axis=0), np.mean(B, axis=0), np.nan)
        io.write_csv(rep / "binder_vs_time.csv", ["t_us", "binder"],
                     np.column_stack([bd[0][:n_t, 0], mb]))
    # minimum energy rank vs occupancy
    occ = []
    for p in sorted(agg.glob("J_*/minima.csv")):
        j = int(p.parent.name[2:])
        _, d = io.read_csv(p)
        tot = max(d[:, 2].sum(), 1)
        for rank, row in enumerate(d):
            occ.append([j, rank, row[1], row[2] / tot])
    if occ:
        io.write_csv(rep / "minima_occupancy.csv", ["j", "energy_rank", "energy", "probability"],
                     occ)
    io.write_json(rep / "counts.json", counts)
    return counts


# ----------------------------------------------------------------- end to end

def energy_floors(cfg: ExperimentConfig, couplings) -> dict:
    """Product-state floor at the steady-state drive point for each J."""
    out = {}
    c, d = cfg.cavity, cfg.drive
    for j, cp in enumerate(couplings):
        gc = critical_coupling(cp.lambda_max, d.omega_z0, c.delta_c, c.kappa, cfg.ensemble.M)
        g, w = schedule_values(cfg.steady_time, d, gc)
        co = model_coefficients(g, w, c.delta_c, c.kappa)
        out[f"J_{j:03d}"] = semiclassical_energy_floor(
            cp, g, co, cfg.analysis.floor_samples, seed=seed_sequence(cfg.master_seed, 3, j),
            M=cfg.ensemble.M)
    return out


def open_manifest(cfg: ExperimentConfig, root=None) -> RunManifest:
    """Existing manifest under ``root`` (for incremental subcommands) or a fresh one."""
    path = Path(root or cfg.output_root) / "manifest.json"
    if path.exists():
        d = io.read_json(path)
        if d.get("config_hash") == cfg.config_hash():
            d.pop("inventory", None)
            return RunManifest(**d)
    return RunManifest(cfg.config_hash(), __version__, cfg.master_seed)


def write_manifest(root, manifest: RunManifest) -> RunManifest:
    root = Path(root)
    manifest.inventory = io.inventory(root)
    io.write_json(root / "manifest.json", asdict(manifest))
    return manifest


def run_experiment(cfg: ExperimentConfig, root=None, workers: int | None = None,
                   with_floor: bool = True) -> RunManifest:
    """Ensemble generation, trajectories for the configured engine(s), analysis, report."""
    t0 = time.perf_counter()
    root = Path(root or cfg.output_root)
    root.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(cfg.config_hash(), __version__, cfg.master_seed)
    io.write_json(root / "config.json", cfg.raw)
    ens = build_ensemble(cfg, root)
    couplings = [cp for _, cp in ens]
    manifest.j_seeds = {f"J_{j:03d}": layout_seed(cfg.master_seed, j) for j in range(len(ens))}
    engines = ["quantum", "semiclassical"] if cfg.engine == "both" else [cfg.engine]
    for eng in engines:
        run_trajectories(cfg, eng, couplings, root, workers, manifest)
    analyze(cfg, root, engines[0])
    report(cfg, root)
    if with_floor and "semiclassical" in engines:
        manifest.floors = energy_floors(cfg, couplings)
    manifest.wall_clock_s = time.perf_counter() - t0
    return write_manifest(root, manifest)
