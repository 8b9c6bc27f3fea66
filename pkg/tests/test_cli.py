import json
import os

import numpy as np
import pytest

from fockmc import oracles
from fockmc.cli import main, run
from fockmc.config import ConfigError, load_config, serialize
from fockmc.model import default_cutoff
from fockmc.presets import PRESETS, get_preset
from fockmc.sampler import read_csv

GOOD = """
[trap]
kind = harmonic1d

[system]
n = 10
g = 0.0

[run]
mode = exact-canonical
temperatures = 1.0 2.0 4.0
seed = 3

[sampler]
samples = 500
chains = 4
"""


def test_load_config_round_trip():
    cfg = load_config(GOOD)
    assert cfg.N == 10
    assert cfg.temperatures == [1.0, 2.0, 4.0]
    again = load_config(serialize(cfg))
    assert again == cfg
    assert serialize(again) == serialize(cfg)


def test_config_collects_all_problems():
    bad = """
[trap]
kind = box

[system]
n = 0
g = -2.0

[run]
mode = sample
temperatures = 5.0
"""
    with pytest.raises(ConfigError) as exc:
        load_config(bad)
    msgs = exc.value.problems
    assert len(msgs) == 3
    joined = "\n".join(msgs)
    assert "trap kind" in joined
    assert "N must be >= 1" in joined
    assert "attractive" in joined


def test_config_rejects_unknown_names():
    bad = GOOD + "\n[plotting]\ncolor = red\n"
    with pytest.raises(ConfigError, match=r"unknown section \[plotting\]"):
        load_config(bad)
    bad = GOOD.replace("samples = 500", "smaples = 500")
    with pytest.raises(ConfigError, match="unknown key 'smaples'"):
        load_config(bad)


def test_config_exact_micro_validation():
    bad = """
[trap]
kind = harmonic3d
aspect = 2.5

[system]
n = 5

[run]
mode = exact-micro
energies = 1 2 2.5
"""
    with pytest.raises(ConfigError) as exc:
        load_config(bad)
    joined = "\n".join(exc.value.problems)
    assert "integer energy grid" in joined
    assert "non-negative integers" in joined


def test_presets_serialize_round_trip():
    for name in PRESETS:
        cfg = get_preset(name, scale=10.0)
        assert load_config(serialize(cfg)) == cfg
    with pytest.raises(KeyError, match="unknown preset"):
        get_preset("figure99")


def _no_part_files(out):
    return not [f for f in os.listdir(out) if f.endswith(".part")]


def test_exact_canonical_run_matches_oracle(tmp_path):
    cfg_path = tmp_path / "exp.ini"
    cfg_path.write_text(GOOD)
    out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["--config", str(cfg_path), "--out", out_a]) == 0
    assert main(["--config", str(cfg_path), "--out", out_b]) == 0
    body = open(os.path.join(out_a, "exact_canonical.csv")).read()
    assert body == open(os.path.join(out_b, "exact_canonical.csv")).read()
    lines = body.strip().splitlines()
    assert lines[0] == "T,mean_N0,var_N0,stderr,source"
    for line in lines[1:]:
        t, mean, var, _, source = line.split(",")
        levels = oracles.energy_levels(load_config(GOOD).trap,
                                       default_cutoff(float(t)))
        m_ref, v_ref = oracles.canonical_moments(levels, 10, 1.0 / float(t))
        assert float(mean) == pytest.approx(m_ref, rel=1e-12)
        assert float(var) == pytest.approx(v_ref, rel=1e-12)
        assert source == "exact"
    assert _no_part_files(out_a)


def test_manifest_and_seed_override(tmp_path):
    cfg_path = tmp_path / "exp.ini"
    cfg_path.write_text(GOOD)
    out = str(tmp_path / "out")
    assert main(["--config", str(cfg_path), "--out", out, "--seed", "77"]) == 0
    manifest = json.load(open(os.path.join(out, "manifest.json")))
    assert manifest["seed"] == 77
    assert manifest["mode"] == "exact-canonical"
    assert len(manifest["config_sha256"]) == 64
    assert "version" in manifest and "created_unix" in manifest
    norm = open(os.path.join(out, "config.ini")).read()
    assert load_config(norm).seed == 77


def test_sample_mode_output_readable(tmp_path):
    cfg = load_config(GOOD)
    cfg.mode = "sample"
    cfg.temperatures = [2.0]
    cfg.samples = 200
    out = str(tmp_path / "out")
    assert run(cfg, out) == 0
    sset = read_csv(os.path.join(out, "samples_T2.csv"))
    assert sset.W >= 200
    assert sset.descriptors["N"] == 10
    assert np.all(sset.N0 >= 0) and np.all(sset.N0 <= 10)
    assert _no_part_files(out)


def test_exact_micro_mode(tmp_path):
    cfg = load_config(GOOD)
    cfg.mode = "exact-micro"
    cfg.energies = [2.0, 5.0]
    out = str(tmp_path / "out")
    assert run(cfg, out) == 0
    lines = open(os.path.join(out, "exact_micro.csv")).read().strip().splitlines()
    table = oracles.micro_recurrence(cfg.trap, 10, 5)
    for line in lines[1:]:
        e, mean, var, _ = line.split(",")
        dist = oracles.micro_p_N0(table, 10, int(e))
        m_ref, v_ref = oracles.distribution_moments(dist)
        assert float(mean) == pytest.approx(m_ref, rel=1e-12)
        assert float(var) == pytest.approx(v_ref, rel=1e-12)


def test_cli_error_paths(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[trap]\nkind = box\n")
    assert main(["--config", str(bad)]) == 2
    assert main(["--config", str(tmp_path / "missing.ini")]) == 2
    assert main(["--preset", "nope", "--out", str(tmp_path / "o")]) == 2


def test_verify_mode(tmp_path, capsys):
    cfg = load_config(GOOD)
    cfg.mode = "verify"
    out = str(tmp_path / "out")
    assert run(cfg, out) == 0
    printed = capsys.readouterr().out
    assert "6/6 checks passed" in printed
    assert "FAIL" not in printed
    body = open(os.path.join(out, "verify.csv")).read()
    assert body.count(",1") == 6
