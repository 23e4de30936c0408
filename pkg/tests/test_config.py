import json

import numpy as np
import pytest

from cavityglass.config import (DEFAULTS, OUTPUT_ENV, ConfigError, dump_config, load_config,
                                parse_config, with_changes)


def test_defaults_parse_with_angular_units():
    cfg = parse_config()
    assert cfg.cavity.kappa == pytest.approx(2 * np.pi * DEFAULTS["cavity"]["kappa_hz"])
    assert cfg.drive.omega_z0 == pytest.approx(2 * np.pi * 10e3)
    assert cfg.sim.beta == pytest.approx(0.1 * np.sqrt(cfg.cavity.kappa))
    assert cfg.sde.t_final == cfg.sim.t_final
    assert cfg.steady_time == cfg.sim.t_final


@pytest.mark.parametrize("data, path", [
    ({"cavity": {"kappa": 1}}, "cavity.kappa"),
    ({"sim": {"method": "rk4"}}, "sim.method"),
    ({"ensemble": {"n_spins": 16}}, "ensemble.n_spins"),
    ({"ensemble": {"n_j": 2.5}}, "ensemble.n_j"),
    ({"drive": {"quench": "yes"}}, "drive.quench"),
    ({"engine": "classical"}, "engine"),
    ({"sim": 3}, "sim"),
    ({"cavity": {"kappa_hz": -1}}, "cavity.kappa_hz"),
])
def test_validation_names_offending_key(data, path):
    with pytest.raises(ConfigError) as e:
        parse_config(data)
    assert e.value.path == path


def test_hash_ignores_workers_and_output(tmp_path):
    a = parse_config({"workers": 1, "output_root": "x"})
    b = parse_config({"workers": 4, "output_root": "y"})
    c = parse_config({"master_seed": 5})
    assert a.config_hash() == b.config_hash() != c.config_hash()


def test_load_with_overrides(tmp_path, monkeypatch):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"ensemble": {"n_spins": 6}, "master_seed": 3}))
    cfg = load_config(p, {"ensemble": {"n_j": 2}})
    assert (cfg.ensemble.n_spins, cfg.ensemble.n_j, cfg.master_seed) == (6, 2, 3)
    assert json.loads(dump_config(cfg))["ensemble"]["n_j"] == 2
    assert with_changes(cfg, ensemble={"n_j": 7}).ensemble.n_spins == 6
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert load_config().output_root == tmp_path / "env"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)
