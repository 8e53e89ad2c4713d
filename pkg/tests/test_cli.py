import json

import pytest

from darwin_kinetics.cli import main
from darwin_kinetics.config import ConfigError, load_config

SMALL = """
[discretization]
n_per_axis = 2
dt = 0.05
t_end = 0.1

[ladder]
c = 8

[output]
root = {root}
"""


def _config(tmp_path, body=SMALL):
    path = tmp_path / "run.ini"
    path.write_text(body.format(root=tmp_path / "runs"))
    return path


def _csv_bytes(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.glob("*.csv"))}


def test_defaults_and_overrides(tmp_path):
    cfg = load_config(_config(tmp_path))
    assert cfg.run.n_per_axis == 2 and cfg.c == 8.0
    assert cfg.run.c_list == (4.0, 8.0, 16.0, 32.0)
    assert cfg.checks["eps_list"] == (1.0, 0.25, 0.0625)
    assert cfg.run_dir().parent == tmp_path / "runs"


def test_relative_output_root_follows_the_config_file(tmp_path):
    path = tmp_path / "rel.ini"
    path.write_text("[output]\nroot = out\n")
    assert load_config(path).output_root == tmp_path / "out"


def test_digest_tracks_content(tmp_path):
    a = load_config(_config(tmp_path))
    other = tmp_path / "b.ini"
    other.write_text(SMALL.format(root=tmp_path / "runs").replace("t_end = 0.1", "t_end = 0.2"))
    assert a.digest() != load_config(other).digest()


@pytest.mark.parametrize("body", ["[nonsense]\nx = 1\n", "[solver]\nbogus = 1\n", "[ladder]\nc = 2\n",
                                  "[discretization]\ndt = zero\n", "[discretization]\ndt = 0.3\n"])
def test_bad_configs_are_rejected(tmp_path, body):
    path = tmp_path / "bad.ini"
    path.write_text(body)
    with pytest.raises(ConfigError):
        load_config(path)


def test_bad_config_exits_with_solver_error_code(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[solver]\nbogus = 1\n")
    assert main(["run-vp", "--config", str(path)]) == 2
    assert main(["run-vp", "--config", str(tmp_path / "missing.ini")]) == 2


def test_integrals_selftest_passes_and_is_deterministic(tmp_path, capsys):
    path = _config(tmp_path)
    assert main(["integrals-selftest", "--config", str(path)]) == 0
    out = load_config(path).run_dir() / "integrals-selftest"
    first = _csv_bytes(out)
    assert set(first) == {"integrals.csv", "checks.csv"}
    assert main(["integrals-selftest", "--config", str(path)]) == 0
    assert _csv_bytes(out) == first
    assert "config_hash" in json.loads((out / "timing.json").read_text())
    assert "PASS K_DT" in capsys.readouterr().out


@pytest.mark.parametrize("command", ["run-vp", "run-dvm", "run-darwin", "run-rvm"])
def test_solver_commands_are_bitwise_reproducible(tmp_path, command, capsys):
    path = _config(tmp_path)
    code = main([command, "--config", str(path)])
    assert code in (0, 1)
    out = load_config(path).run_dir() / command
    first = _csv_bytes(out)
    assert "checks.csv" in first and "snapshot.csv" in first
    assert main([command, "--config", str(path)]) == code
    assert _csv_bytes(out) == first
