import json

import pytest

from trimbrw.cli import ConfigError, load_config, main

TINY = ["--set", "epsilon=0.5", "--set", "half_width=2.0", "--set", 'drift.kind="zero"']


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_verify_zero_drift_tiny_grid(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", *TINY, "-o", str(tmp_path))
    assert code == 0
    assert "[PASS] mass conservation" in out
    man = json.loads((tmp_path / "verify_manifest.json").read_text())
    assert all(g["pass"] for g in man["gates"])


def test_missing_epsilon(capsys, tmp_path):
    code, _, err = run(capsys, "verify", "-o", str(tmp_path))
    assert code == 2
    assert "epsilon: required" in err


@pytest.mark.parametrize("override, key", [
    ("epsilon=0.3", "epsilon"),
    ('solver.scheme="implicit"', "solver.scheme"),
    ("solver.dt=0.5", "solver.dt"),
    ('drift.kind="sign_well"', "drift"),
])
def test_bad_values_name_the_key(capsys, tmp_path, override, key):
    code, _, err = run(capsys, "solve", "--set", "epsilon=0.1", "--set", override, "-o", str(tmp_path))
    assert code == 2
    assert key in err


def test_config_file_round_trip(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('epsilon = 0.1\nT = 0.5\n[particles]\nN = 20\nseed_start = 3\nseed_count = 2\n')
    cfg = load_config(str(p), ["solver.dt=5e-5"])
    assert cfg.epsilon == 0.1 and cfg.T == 0.5 and cfg.n == 20
    assert list(cfg.seeds) == [3, 4] and cfg.dt == 5e-5
    with pytest.raises(ConfigError):
        load_config(str(p), ["particles.seeds=[]"])


def test_printed_beta_gate_fails(capsys, tmp_path):
    code, out, err = run(capsys, "stationary", "--set", "epsilon=0.1", "--which", "example1",
                         "--check", "weak-form", "--beta-variant", "printed", "-o", str(tmp_path))
    assert code == 1
    assert "0.692" in out + err


def test_stationary_derived_passes(capsys, tmp_path):
    code, _, _ = run(capsys, "stationary", "--set", "epsilon=0.1", "--which", "example1",
                     "--check", "weak-form", "-o", str(tmp_path))
    assert code == 0
    assert (tmp_path / "stationary_manifest.json").exists()


def test_simulate_is_byte_identical(capsys, tmp_path):
    args = ["simulate", "--set", "epsilon=0.1", "--set", "half_width=4.0", "--set", "particles.N=200",
            "--set", "particles.seeds=[1, 2]", "--set", "T=0.3", "--set", "particles.snapshot_times=[0.1, 0.3]"]
    outputs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        assert run(capsys, *args, "-o", str(d))[0] == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(d.rglob("*.csv"))})
    assert outputs[0] and outputs[0] == outputs[1]


def test_solve_outputs(capsys, tmp_path):
    code, _, _ = run(capsys, "solve", "--set", "epsilon=0.1", "--set", "T=0.05", "-o", str(tmp_path))
    assert code == 0
    names = {p.name for p in tmp_path.rglob("*") if p.is_file()}
    assert {"path.csv", "path.bin", "diagnostics.csv", "solve_manifest.json"} <= names


def test_manifest_hash_tracks_config(capsys, tmp_path):
    def config_hash(eps):
        run(capsys, "verify", "--set", f"epsilon={eps}", "--set", "half_width=2.0", "-o", str(tmp_path))
        return json.loads((tmp_path / "verify_manifest.json").read_text())["hashes"]["config"]

    first = config_hash("0.5")
    assert config_hash("0.25") != first
    assert config_hash("0.5") == first


def test_example_config_parses():
    from pathlib import Path

    cfg = load_config(str(Path(__file__).parents[1] / "configs" / "example.toml"), [])
    assert cfg.epsilon == 0.1 and len(cfg.seeds) == 20


def test_couple_rejects_off_grid_start(capsys, tmp_path):
    code, _, err = run(capsys, "couple", "--set", "epsilon=0.1", "-o", str(tmp_path))
    assert code == 2 and "coupling.x0" in err
