"""CSV/JSON persistence with deterministic formatting and checksums."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .cavity import CouplingMatrix, SpinLayout
from .quantum import TrajectoryRecord
from .semiclassical import ClassicalRecord

FMT = "%.17g"


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size == 0:
        rows = rows.reshape(0, len(header))
    np.savetxt(path, rows, delimiter=",", header=",".join(header), comments="", fmt=FMT)
    return path


def read_csv(path):
    """Return (header list, 2-D float array)."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def _default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def inventory(root, exclude=("manifest.json",)) -> dict:
    root = Path(root)
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name not in exclude:
            out[p.relative_to(root).as_posix()] = sha256_file(p)
    return out


# ------------------------------------------------------------------ J matrices

def write_coupling(directory, layout: SpinLayout, coupling: CouplingMatrix, meta: dict):
    d = Path(directory)
    write_csv(d / "matrix.csv", [f"c{j}" for j in range(coupling.n)], coupling.entries)
    write_json(d / "layout.json", {"positions_w0": layout.positions, "regime": layout.regime,
                                   "ensemble_size": layout.ensemble_size, "seed": layout.seed,
                                   "eigenvalues": coupling.eigenvalues, **meta})


def read_coupling(directory):
    d = Path(directory)
    _, J = read_csv(d / "matrix.csv")
    info = read_json(d / "layout.json")
    layout = SpinLayout(np.asarray(info["positions_w0"], float), info["ensemble_size"],
                        info["regime"], info["seed"])
    return layout, CouplingMatrix.from_matrix(J), info


# ---------------------------------------------------------------- trajectories

def _cols(prefix, n):
    return [f"{prefix}{i}" for i in range(n)]


def write_quantum_trajectory(path, rec: TrajectoryRecord):
    n = rec.n_spins
    header = ["t_us", *_cols("x", n), *_cols("y", n), *_cols("z", n), *_cols("S", n),
              *_cols("s", n), *_cols("h", n), "energy"]
    rows = np.column_stack([rec.sample_times, rec.sx, rec.sy, rec.sz, rec.entropy, rec.s,
                            rec.h, rec.energy])
    write_csv(path, header, rows)


def write_classical_trajectory(path, rec: ClassicalRecord):
    n = rec.S.shape[1]
    u = rec.S / (rec.M / 2)
    header = ["t_us", *_cols("x", n), *_cols("y", n), *_cols("z", n), "energy", "ising_energy"]
    rows = np.column_stack([rec.sample_times, u[..., 0], u[..., 1], u[..., 2], rec.energy,
                            rec.ising_energy])
    write_csv(path, header, rows)


def read_trajectory(path) -> dict:
    """Column groups of a stored trajectory: ``t_us``, ``x``, ``y``, ``z`` and any extras."""
    header, data = read_csv(path)
    out = {"t_us": data[:, 0]}
    groups = {}
    for j, name in enumerate(header[1:], start=1):
        stem = name.rstrip("0123456789")
        if stem != name and stem in {"x", "y", "z", "S", "s", "h"}:
            groups.setdefault(stem, []).append(j)
        else:
            out[name] = data[:, j]
    for stem, idx in groups.items():
        out[stem] = data[:, idx]
    return out
