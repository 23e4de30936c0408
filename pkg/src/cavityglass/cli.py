"""Command-line entry point: ``cavityglass <subcommand> [flags]``.

Exit codes: 0 success, 2 validation error (bad flags, config, or empty store),
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io
from . import pipeline as P
from .config import OUTPUT_ENV, ConfigError, load_config
from .landscape import enumerate_local_minima

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

EPILOG = f"""examples:
  cavityglass build-j --n-spins 10 --n-j 5 --out runs/demo
  cavityglass threshold --out runs/demo --j-index 0
  cavityglass run-quantum --config exp.json --n-traj 50 --workers 4 --out runs/demo
  cavityglass run-semiclassical --out runs/demo
  cavityglass enumerate-minima --out runs/demo
  cavityglass analyze --out runs/demo
  cavityglass fit-temperature --out runs/demo
  cavityglass ultrametric --out runs/demo
  cavityglass report --out runs/demo --k-bins 30
  cavityglass run --config exp.json --engine both --out runs/full

The default output root is ./runs or the ${OUTPUT_ENV} environment variable.
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _common(p):
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
    p.add_argument("--out", type=Path, help=f"output root (default ${OUTPUT_ENV} or ./runs)")
    p.add_argument("--engine", choices=("quantum", "semiclassical", "both"))
    p.add_argument("--n-spins", type=int)
    p.add_argument("--n-j", type=int)
    p.add_argument("--n-traj", type=int)
    p.add_argument("--t-final", type=float, help="final time in seconds")
    p.add_argument("--quench", action="store_true", default=None,
                   help="sudden quench instead of the smooth ramp")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cavityglass", description=__doc__.splitlines()[0], epilog=EPILOG,
                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    helps = {
        "build-j": "sample layouts, build coupling matrices and spectra",
        "threshold": "print g_c and the stability spectrum minimum at g_c",
        "run-quantum": "quantum trajectories for every stored J",
        "run-semiclassical": "mean-field SDE trajectories for every stored J",
        "enumerate-minima": "list strict local minima of every stored J",
        "analyze": "all replica statistics from stored trajectories",
        "fit-temperature": "thermal fits of the steady-state overlap histograms",
        "ultrametric": "ultrametricity statistic K per J",
        "report": "figure-ready aggregate tables",
        "run": "whole pipeline: build-j, trajectories, analyze, report",
    }
    for name, h in helps.items():
        p = sub.add_parser(name, help=h, description=h)
        _common(p)
        if name == "threshold":
            p.add_argument("--j-index", type=int, default=0)
        if name == "report":
            p.add_argument("--k-bins", type=int)
    return ap


def _overrides(a) -> dict:
    o: dict = {}

    def put(sec, key, val):
        if val is not None:
            if sec is None:
                o[key] = val
            else:
                o.setdefault(sec, {})[key] = val

    put(None, "master_seed", a.seed)
    put(None, "workers", a.workers)
    put(None, "output_root", str(a.out) if a.out else None)
    put(None, "engine", a.engine)
    put("ensemble", "n_spins", a.n_spins)
    put("ensemble", "n_j", a.n_j)
    put("ensemble", "n_trajectories", a.n_traj)
    put("sim", "t_final_s", a.t_final)
    put("drive", "quench", a.quench)
    return o


def _analysis_engine(cfg) -> str:
    return "semiclassical" if cfg.engine == "semiclassical" else "quantum"


def _dispatch(a) -> int:
    cfg = load_config(a.config, _overrides(a))
    root = cfg.output_root
    cmd = a.cmd
    if cmd == "build-j":
        ens = P.build_ensemble(cfg, root)
        for j, (_, cp) in enumerate(ens):
            print(f"J_{j:03d} lambda_max={cp.lambda_max:.10g}")
    elif cmd == "threshold":
        ens = P.load_ensemble(root)
        if not 0 <= a.j_index < len(ens):
            raise ConfigError("--j-index", f"out of range (0..{len(ens) - 1})")
        cp = ens[a.j_index][1]
        info = P.threshold_info(cfg, cp)
        print(f"g_c = {info['g_c']:.12g} rad/s")
        print(f"t_c = {info['t_c_s'] * 1e6:.6g} us")
        print(f"min stability eigenvalue at g_c = {info['min_stability_eigenvalue_at_g_c']:.3e}")
    elif cmd in ("run-quantum", "run-semiclassical"):
        engine = "quantum" if cmd == "run-quantum" else "semiclassical"
        couplings = [cp for _, cp in P.load_ensemble(root)]
        man = P.run_trajectories(cfg, engine, couplings, root,
                                 manifest=P.open_manifest(cfg, root))
        P.write_manifest(root, man)
        n_run = sum(k.startswith(engine + "/") for k in man.trajectory_seeds)
        print(f"{engine}: {n_run} trajectories, {len(man.failures)} failed")
    elif cmd == "enumerate-minima":
        for j, (_, cp) in enumerate(P.load_ensemble(root)):
            mins = enumerate_local_minima(cp)
            io.write_csv(root / "analysis" / f"J_{j:03d}" / "minima.csv",
                         ["encoding", "energy", "count"], [[m.encoding, m.energy, 0] for m in mins])
            print(f"J_{j:03d}: {len(mins)} minima, lowest E = {mins[0].energy:.10g}")
    elif cmd == "analyze":
        rows = P.analyze(cfg, root, _analysis_engine(cfg))
        print(f"analyzed {len(rows)} J matrices -> {root / 'analysis'}")
    elif cmd == "fit-temperature":
        res = P.fit_temperatures(cfg, root, _analysis_engine(cfg))
        print(json.dumps(res, indent=2))
    elif cmd == "ultrametric":
        res = P.ultrametric(cfg, root, _analysis_engine(cfg))
        print(json.dumps(res, indent=2))
    elif cmd == "report":
        counts = P.report(cfg, root, a.k_bins)
        print(json.dumps(counts, indent=2))
    elif cmd == "run":
        man = P.run_experiment(cfg, root)
        print(f"done in {man.wall_clock_s:.1f} s; manifest at {root / 'manifest.json'}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(a)
    except (ConfigError, P.EmptyStoreError, FileNotFoundError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ArithmeticError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
