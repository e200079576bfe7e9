import json

import numpy as np
import pytest

from adjset.cli import OUT_ENV, main, sha256
from adjset.fixtures import fixture_path, load_fixture
from adjset.sem import sample, uniform_model


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def combine_only_csv(tmp_path):
    data = sample(uniform_model(load_fixture("combine_only").dag, 0.5), 5000, np.random.default_rng(0))
    path = tmp_path / "combine_only.csv"
    data.to_csv(path)
    return path


def discover(csv, out, *extra):
    return ["discover", "--data", csv, "--knowledge", fixture_path("combine_only"), "--x", "X1", "X2", "--y", "Y",
            "--out", out, *extra]


# --- oracle -----------------------------------------------------------------------

def test_oracle_adjust_nonminimal_z1(capsys):
    code, out, _ = run(["oracle", fixture_path("nonminimal_z1"), "adjust", "--x", "X1", "X2", "--y", "Y", "--z", "Z1", "Z2"], capsys)
    assert code == 0 and out.strip() == "false"


def test_oracle_dsep_latent_witness(capsys):
    code, out, _ = run(["oracle", fixture_path("latent_witness"), "dsep", "W", "Y", "--", "Z", "X"], capsys)
    assert code == 0 and "separated" in out and "connected" not in out
    code, out, _ = run(["oracle", fixture_path("latent_witness"), "dsep", "W", "Y", "--", "Z"], capsys)
    assert "connected" in out and "open path" in out


def test_oracle_enumerate_combine_only(capsys):
    code, out, _ = run(["oracle", fixture_path("combine_only"), "enumerate", "--x", "X1", "X2", "--y", "Y"], capsys)
    assert code == 0
    assert out.splitlines() == ["{}", "{W}", "{Z}", "{W, Z}"]


def test_oracle_parse_error_has_line(tmp_path, capsys):
    g = tmp_path / "g.txt"
    g.write_text("A -> B\nB -> C\nC -> A\n")
    code, _, err = run(["oracle", g, "dsep", "A", "C"], capsys)
    assert code != 0 and f"{g}:3:" in err


def test_oracle_unknown_node(capsys):
    code, _, err = run(["oracle", fixture_path("latent_witness"), "dsep", "W", "Q"], capsys)
    assert code != 0 and "'Q'" in err


# --- discover -----------------------------------------------------------------------

def test_discover_build_vs_combine(combine_only_csv, tmp_path, capsys):
    code, out, _ = run(discover(combine_only_csv, tmp_path / "b", "--method", "build"), capsys)
    assert code == 0 and "no adjustment set found" in out
    assert json.loads((tmp_path / "b" / "certificates.json").read_text()) == []
    code, out, _ = run(discover(combine_only_csv, tmp_path / "c", "--method", "combine"), capsys)
    certs = json.loads((tmp_path / "c" / "certificates.json").read_text())
    assert code == 0 and certs[0]["adjustment_set"] == ["Z"] and certs[0]["rule"] == "combine"


def test_discover_expand_and_classify(combine_only_csv, tmp_path, capsys):
    run(discover(combine_only_csv, tmp_path / "o", "--method", "combine", "--expand", "--classify"), capsys)
    certs = json.loads((tmp_path / "o" / "certificates.json").read_text())
    assert {c["rule"] for c in certs[1:]} == {"c_equivalence"}
    assert all(c["equivalent_to"] == ["Z"] for c in certs[1:])
    assert certs[0]["annotations"]


def test_discover_missing_outcome(combine_only_csv, tmp_path, capsys):
    argv = discover(combine_only_csv, tmp_path / "o")
    argv[argv.index("Y")] = "Outcome"
    code, _, err = run(argv, capsys)
    assert code != 0 and "'Outcome'" in err and str(combine_only_csv) in err


def test_discover_mixed_policy_and_trace(combine_only_csv, tmp_path, capsys):
    code, out, _ = run(discover(combine_only_csv, tmp_path / "o", "--alpha-dep", "0.01", "--alpha-indep", "0.1", "--trace"), capsys)
    assert code == 0 and "mixed(0.01,0.1)" in out
    assert (tmp_path / "o" / "trace.log").read_text().count("verdict=") >= 1


def test_discover_alpha_flags_exclusive(combine_only_csv, tmp_path, capsys):
    with pytest.raises(SystemExit):
        main([str(a) for a in discover(combine_only_csv, tmp_path / "o", "--alpha", "0.05", "--alpha-dep", "0.01")])


def test_discover_tier_violation(combine_only_csv, tmp_path, capsys):
    code, _, err = run(discover(combine_only_csv, tmp_path / "o", "--pool", "W", "X2"), capsys)
    assert code != 0


def test_discover_manifest_digests(combine_only_csv, tmp_path, capsys):
    run(discover(combine_only_csv, tmp_path / "o", "--seed", "7"), capsys)
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert m["seed"] == 7 and m["command"][1] == "discover"
    assert m["inputs"][str(combine_only_csv)] == sha256(combine_only_csv)
    assert m["outputs"]["certificates.json"] == sha256(tmp_path / "o" / "certificates.json")


def test_output_dir_env_override(combine_only_csv, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    argv = discover(combine_only_csv, "x")
    argv = argv[: argv.index("--out")]
    code, _, _ = run(argv, capsys)
    assert code == 0 and (tmp_path / "env" / "manifest.json").exists()


def test_discover_entner_needs_one_treatment(combine_only_csv, tmp_path, capsys):
    code, _, err = run(discover(combine_only_csv, tmp_path / "o", "--method", "entner"), capsys)
    assert code != 0 and "exactly one" in err


# --- simulate -----------------------------------------------------------------------

CONFIG = """
[experiment]
trials = 3
sizes = [300]
[generator]
n_covariates = 4
n_latents = 2
seed = 9
"""


def test_simulate_is_reproducible(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text(CONFIG)
    assert run(["simulate", cfg, "--out", tmp_path / "a"], capsys)[0] == 0
    assert run(["simulate", cfg, "--out", tmp_path / "b"], capsys)[0] == 0
    for name in ("records.csv", "report.csv", "summary.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["outputs"] == mb["outputs"] and ma["config"] == mb["config"]
    assert len((tmp_path / "a" / "records.csv").read_text().splitlines()) == 1 + 3 * 2 * 2


def test_simulate_zero_trials_is_config_error(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text(CONFIG.replace("trials = 3", "trials = 0"))
    code, _, err = run(["simulate", cfg, "--out", tmp_path / "o"], capsys)
    assert code != 0 and "trials" in err and str(cfg) in err


@pytest.mark.parametrize("bad", ["[experiment]\nbogus = 1\n", "[generator]\nedge_prob = 2.0\n", "[[policies]]\nbeta = 1\n", "not toml ["])
def test_simulate_schema_errors(tmp_path, capsys, bad):
    cfg = tmp_path / "c.toml"
    cfg.write_text(bad)
    code, _, err = run(["simulate", cfg, "--out", tmp_path / "o"], capsys)
    assert code != 0 and str(cfg) in err


def test_bundled_desk_config_parses():
    from importlib.resources import files

    from adjset.cli import load_experiment_config
    cfg = load_experiment_config(files("adjset") / "data" / "desk.toml")
    assert cfg.trials == 40 and cfg.sizes == (500, 1000, 5000)
    assert [p.label for p in cfg.policies] == ["single(0.05)", "mixed(0.01,0.1)"]
