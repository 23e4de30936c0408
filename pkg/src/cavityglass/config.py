"""Experiment configuration: one JSON file, validated section by section.

Frequencies are given in Hz (cycles) and converted to angular units here; times are
in seconds and lengths in micrometres.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cavity import REGIME_STD, CavityParams
from .model import DriveParams
from .quantum import SimConfig
from .semiclassical import SdeConfig

TWO_PI = 2 * np.pi
OUTPUT_ENV = "CAVITYGLASS_OUTPUT"
ENGINES = ("quantum", "semiclassical", "both")

DEFAULTS = {
    "cavity": {"w0_um": 35.0, "alpha_c": 0.02, "kappa_hz": 260e3, "delta_c_hz": -80e6,
               "n_modes_oracle": 60},
    "drive": {"g_final_sq_over_gc_sq": 5.0, "omega_z0_hz": 10e3, "ramp_start_s": 100e-6,
              "ramp_end_s": 700e-6, "quench": False},
    "sim": {"dt_s": 1e-7, "beta_over_sqrt_kappa": 0.1, "sample_interval_s": 10e-6,
            "t_final_s": 4e-3, "max_jump_prob_per_step": 0.1, "lo_phase": -np.pi / 2,
            "method": "split", "dissipation_scale": 2.0},
    "sde": {"dt_s": 1e-9, "noise": True, "tilt": True, "tilt_angle": 1e-6},
    "ensemble": {"n_j": 100, "n_trajectories": 200, "regime": "spin_glass", "n_spins": 15,
                 "M": 1.0},
    "analysis": {"steady_time_s": None, "bootstrap_samples": 100, "minima_cutoff": 1,
                 "floor_samples": 10000, "k_bins": 20},
    "master_seed": 0,
    "output_root": None,
    "engine": "quantum",
    "workers": 1,
}


class ConfigError(ValueError):
    """Schema or value violation; ``path`` names the offending key."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


@dataclass
class EnsembleSpec:
    n_j: int = 100
    n_trajectories: int = 200
    regime: str = "spin_glass"
    n_spins: int = 15
    M: float = 1.0


@dataclass
class AnalysisSpec:
    steady_time: float | None = None  # seconds; None -> t_final
    bootstrap_samples: int = 100
    minima_cutoff: int = 1
    floor_samples: int = 10000
    k_bins: int = 20


@dataclass
class ExperimentConfig:
    cavity: CavityParams = field(default_factory=CavityParams)
    drive: DriveParams = field(default_factory=DriveParams)
    sim: SimConfig = field(default_factory=SimConfig)
    sde: SdeConfig = field(default_factory=SdeConfig)
    ensemble: EnsembleSpec = field(default_factory=EnsembleSpec)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)
    master_seed: int = 0
    output_root: Path = Path("runs")
    engine: str = "quantum"
    workers: int = 1
    raw: dict = field(default_factory=dict, repr=False)

    def config_hash(self) -> str:
        """Digest of the result-determining settings (workers and output root excluded)."""
        d = {k: v for k, v in self.raw.items() if k not in ("workers", "output_root")}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def steady_time(self) -> float:
        return self.analysis.steady_time if self.analysis.steady_time is not None \
            else self.sim.t_final


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = dict(base)
    for k, v in over.items():
        p = f"{path}.{k}" if path else k
        if k not in base:
            raise ConfigError(p, "unknown key")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(p, "expected an object")
            out[k] = _merge(base[k], v, p)
        else:
            out[k] = v
    return out


def _num(d, section, key, kind=float, positive=False, nonneg=False, allow_none=False):
    v = d[section][key] if section else d[key]
    p = f"{section}.{key}" if section else key
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(p, f"expected a number, got {v!r}")
    if kind is int and float(v) != int(v):
        raise ConfigError(p, "expected an integer")
    v = kind(v)
    if not np.isfinite(v):
        raise ConfigError(p, "must be finite")
    if positive and not v > 0:
        raise ConfigError(p, "must be positive")
    if nonneg and v < 0:
        raise ConfigError(p, "must be nonnegative")
    return v


def _bool(d, section, key):
    v = d[section][key]
    if not isinstance(v, bool):
        raise ConfigError(f"{section}.{key}", "expected true/false")
    return v


def _build(section, factory, **kw):
    try:
        return factory(**kw)
    except ValueError as exc:
        raise ConfigError(section, str(exc)) from exc


def parse_config(data: dict | None = None) -> ExperimentConfig:
    d = _merge(DEFAULTS, data or {})
    cav = _build("cavity", CavityParams,
                 w0=_num(d, "cavity", "w0_um", positive=True),
                 alpha_c=_num(d, "cavity", "alpha_c", positive=True),
                 kappa=TWO_PI * _num(d, "cavity", "kappa_hz", positive=True),
                 delta_c=TWO_PI * _num(d, "cavity", "delta_c_hz"),
                 n_modes_oracle=_num(d, "cavity", "n_modes_oracle", int, positive=True))
    drv = _build("drive", DriveParams,
                 g_final_sq_over_gc_sq=_num(d, "drive", "g_final_sq_over_gc_sq", positive=True),
                 omega_z0=TWO_PI * _num(d, "drive", "omega_z0_hz", nonneg=True),
                 ramp_start=_num(d, "drive", "ramp_start_s", nonneg=True),
                 ramp_end=_num(d, "drive", "ramp_end_s", positive=True),
                 quench=_bool(d, "drive", "quench"))
    method = d["sim"]["method"]
    if method not in ("split", "euler"):
        raise ConfigError("sim.method", "must be 'split' or 'euler'")
    t_final = _num(d, "sim", "t_final_s", positive=True)
    bsk = _num(d, "sim", "beta_over_sqrt_kappa", nonneg=True)
    sim = _build("sim", SimConfig,
                 dt=_num(d, "sim", "dt_s", positive=True),
                 beta=bsk * np.sqrt(cav.kappa),
                 sample_interval=_num(d, "sim", "sample_interval_s", positive=True),
                 t_final=t_final,
                 max_jump_prob_per_step=_num(d, "sim", "max_jump_prob_per_step", positive=True),
                 lo_phase=_num(d, "sim", "lo_phase"),
                 method=method,
                 dissipation_scale=_num(d, "sim", "dissipation_scale", positive=True))
    sde = _build("sde", SdeConfig,
                 dt=_num(d, "sde", "dt_s", positive=True), t_final=t_final,
                 noise=_bool(d, "sde", "noise"), tilt=_bool(d, "sde", "tilt"),
                 tilt_angle=_num(d, "sde", "tilt_angle", nonneg=True),
                 sample_interval=sim.sample_interval)
    regime = d["ensemble"]["regime"]
    if regime not in REGIME_STD:
        raise ConfigError("ensemble.regime", f"must be one of {sorted(REGIME_STD)}")
    ens = EnsembleSpec(n_j=_num(d, "ensemble", "n_j", int, positive=True),
                       n_trajectories=_num(d, "ensemble", "n_trajectories", int, positive=True),
                       regime=regime,
                       n_spins=_num(d, "ensemble", "n_spins", int, positive=True),
                       M=_num(d, "ensemble", "M", positive=True))
    if ens.n_spins > sim.max_spins:
        raise ConfigError("ensemble.n_spins", f"quantum engine limited to {sim.max_spins} spins")
    if ens.M < 1:
        raise ConfigError("ensemble.M", "must be >= 1")
    ana = AnalysisSpec(
        steady_time=_num(d, "analysis", "steady_time_s", positive=True, allow_none=True),
        bootstrap_samples=_num(d, "analysis", "bootstrap_samples", int, nonneg=True),
        minima_cutoff=_num(d, "analysis", "minima_cutoff", int, nonneg=True),
        floor_samples=_num(d, "analysis", "floor_samples", int, positive=True),
        k_bins=_num(d, "analysis", "k_bins", int, positive=True))
    seed = _num(d, None, "master_seed", int, nonneg=True)
    engine = d["engine"]
    if engine not in ENGINES:
        raise ConfigError("engine", f"must be one of {ENGINES}")
    workers = _num(d, None, "workers", int, positive=True)
    root = d["output_root"] or os.environ.get(OUTPUT_ENV) or "runs"
    return ExperimentConfig(cav, drv, sim, sde, ens, ana, seed, Path(root), engine, workers, d)


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a JSON config (or defaults) and apply nested ``overrides``."""
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(str(path), "top level must be an object")
    merged = _merge(DEFAULTS, data)
    if overrides:
        merged = _merge(merged, overrides)
    return parse_config(merged)


def with_changes(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    """Re-parse ``cfg`` with nested overrides, e.g. ``ensemble={"n_j": 2}``."""
    return parse_config(_merge(cfg.raw, overrides))


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.raw, indent=2, sort_keys=True)


__all__ = ["ConfigError", "ExperimentConfig", "EnsembleSpec", "AnalysisSpec", "DEFAULTS",
           "OUTPUT_ENV", "parse_config", "load_config", "with_changes", "dump_config"]
