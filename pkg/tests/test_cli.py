import json

import numpy as np
import pytest

from cavityglass import io
from cavityglass import pipeline as P
from cavityglass.cli import main
from cavityglass.config import load_config

SMALL = {
    "drive": {"ramp_start_s": 20e-6, "ramp_end_s": 120e-6},
    "sim": {"t_final_s": 2e-4, "sample_interval_s": 2e-5},
    "ensemble": {"n_j": 2, "n_trajectories": 6, "n_spins": 3},
    "analysis": {"bootstrap_samples": 10, "floor_samples": 50, "k_bins": 7},
    "master_seed": 11,
}


@pytest.fixture
def config_file(tmp_path):
    p = tmp_path / "exp.json"
    p.write_text(json.dumps(SMALL))
    return p


def run(*args):
    return main([str(a) for a in args])


def test_subcommands_end_to_end(tmp_path, config_file, capsys):
    out = tmp_path / "runs"
    base = ("--config", config_file, "--out", out)
    assert run("build-j", *base) == 0
    assert (out / "J_001" / "matrix.csv").exists()
    assert run("threshold", *base, "--j-index", 1) == 0
    text = capsys.readouterr().out
    assert "g_c =" in text and "t_c =" in text
    assert run("run-quantum", *base) == 0
    assert run("run-semiclassical", *base) == 0
    assert len(list((out / "J_000").glob("traj_*.csv"))) == 6
    assert len(list((out / "J_000").glob("sc_traj_*.csv"))) == 6
    assert run("enumerate-minima", *base) == 0
    assert run("analyze", *base) == 0
    assert run("fit-temperature", *base) == 0
    assert run("ultrametric", *base) == 0
    assert run("report", *base, "--k-bins", 9) == 0
    _, k = io.read_csv(out / "report" / "ultrametric_k_hist.csv")
    assert k.shape[0] == 9
    _, par = io.read_csv(out / "report" / "parisi.csv")
    assert par.shape[0] == 4 and par[:, 1].sum() == pytest.approx(1)
    man = io.read_json(out / "manifest.json")
    assert len(man["trajectory_seeds"]) == 24
    traj = io.read_trajectory(out / "J_000" / "traj_0000.csv")
    assert traj["x"].shape == (11, 3) and "energy" in traj


def test_whole_run_is_independent_of_worker_count(tmp_path, config_file):
    hashes = []
    for w in (1, 2):
        out = tmp_path / f"w{w}"
        assert run("run", "--config", config_file, "--out", out, "--workers", w,
                   "--engine", "both") == 0
        inv = io.inventory(out, exclude=("manifest.json", "config.json"))
        hashes.append({k: v for k, v in inv.items() if k.endswith(".csv")})
    assert hashes[0] == hashes[1] and len(hashes[0]) > 30


def test_validation_exit_codes(tmp_path, config_file, capsys):
    assert run("analyze", "--out", tmp_path / "empty") == 2
    assert run("report", "--out", tmp_path / "empty") == 2
    assert run("build-j", "--n-spins", 40) == 2
    assert run("no-such-command") == 2
    assert run("build-j", "--n-spins", "x") == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"sim": {"dt": 1}}))
    assert run("build-j", "--config", bad, "--out", tmp_path / "b") == 2
    assert "sim.dt" in capsys.readouterr().err
    out = tmp_path / "t"
    assert run("build-j", "--config", config_file, "--out", out) == 0
    assert run("threshold", "--config", config_file, "--out", out, "--j-index", 5) == 2


def test_numerical_failure_exit_code(tmp_path, config_file, monkeypatch):
    out = tmp_path / "n"
    assert run("build-j", "--config", config_file, "--out", out) == 0

    def boom(*a, **k):
        raise FloatingPointError("blow-up")
    monkeypatch.setattr(P, "run_trajectories", boom)
    assert run("run-quantum", "--config", config_file, "--out", out) == 3


def test_seeds_are_stable_and_distinct():
    a = P.seed_sequence(1, 1, 0, 0).generate_state(2)
    b = P.seed_sequence(1, 1, 0, 0).generate_state(2)
    c = P.seed_sequence(1, 1, 0, 1).generate_state(2)
    d = P.seed_sequence(1, 2, 0, 0).generate_state(2)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)


def test_empty_store_errors(tmp_path):
    cfg = load_config(None, {"output_root": str(tmp_path)})
    with pytest.raises(P.EmptyStoreError):
        P.load_ensemble(tmp_path)
    with pytest.raises(P.EmptyStoreError):
        P.report(cfg, tmp_path)
