"""CLI dispatch, config handling, run manifests and reproducibility."""

import json
import os

import pytest

from vdwalk.cli import main, parse_config_file, resolve_config, UsageError


def _manifest(out):
    with open(os.path.join(out, "manifest.json")) as fh:
        return json.load(fh)


def test_lattice_info_runs(tmp_path):
    out = str(tmp_path / "run")
    assert main(["lattice-info", "--out", out, "k=5"]) == 0
    man = _manifest(out)
    assert man["subcommand"] == "lattice-info"
    assert "lattice.json" in man["files"]
    with open(os.path.join(out, "lattice.json")) as fh:
        lat = json.load(fh)
    assert lat["k"] == 5


def test_invalid_epsilon_exits_one(tmp_path, capsys):
    out = str(tmp_path / "run")
    assert main(["lattice-info", "--out", out, "epsilon=9/10"]) == 1
    assert "error:" in capsys.readouterr().err


def test_unknown_key_exits_one(tmp_path, capsys):
    out = str(tmp_path / "run")
    assert main(["lattice-info", "--out", out, "no_such_key=1"]) == 1
    err = capsys.readouterr().err
    assert "unknown config keys" in err


def test_bad_vertex_spec_exits_one(tmp_path):
    out = str(tmp_path / "run")
    assert main(["simulate", "--out", out, "x0=plane"]) == 1


def test_config_file_and_override(tmp_path):
    cfgfile = tmp_path / "cfg.txt"
    cfgfile.write_text("k = 5\nepsilon = 1/8  # comment\n")
    out = str(tmp_path / "run")
    assert main(["lattice-info", "--config", str(cfgfile),
                 "--out", out, "k=6"]) == 0
    man = _manifest(out)
    assert man["config"]["k"] == 6  # CLI override wins
    assert man["config"]["epsilon"] == "1/8"


def test_config_file_syntax_error(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("this is not a key value pair\n")
    with pytest.raises(UsageError):
        parse_config_file(str(bad))


def test_resolve_config_defaults():
    cfg = resolve_config("kernel", {}, {})
    assert cfg["k"] == 5 and cfg["t"] == 0.01 and cfg["seed"] == 0
    with pytest.raises(UsageError):
        resolve_config("kernel", {"t": "not-a-number"}, {})


def test_simulate_reproducible_across_threads(tmp_path):
    outs = []
    for tag, threads in (("a", "1"), ("b", "4")):
        out = str(tmp_path / tag)
        assert main(["simulate", "--out", out, "--threads", threads,
                     "--seed", "11", "horizon=0.05"]) == 0
        outs.append(_manifest(out))
    assert outs[0]["files"] == outs[1]["files"]


def test_kernel_run_writes_csv(tmp_path):
    out = str(tmp_path / "run")
    assert main(["kernel", "--out", out, "t=0.01"]) == 0
    man = _manifest(out)
    assert set(man["files"]) == {"kernel.csv", "kernel.json"}
    with open(os.path.join(out, "kernel.json")) as fh:
        hdr = json.load(fh)
    assert hdr["truncation_error"] <= hdr["tol"]


def test_check_iso_runs(tmp_path):
    out = str(tmp_path / "run")
    assert main(["check-iso", "--out", out, "n_random=50",
                 "max_random_size=100"]) == 0
    with open(os.path.join(out, "iso.json")) as fh:
        payload = json.load(fh)
    assert payload["plane"]["min_constant"] > 0
    assert payload["ray"]["min_constant"] > 0


def test_failed_run_removes_outputs(tmp_path, monkeypatch):
    # inject a failing check to exercise the cleanup path
    import vdwalk.cli as cli

    def boom(cfg, run):
        run.write_json("partial.json", {})
        raise cli.CheckFailure("synthetic")

    monkeypatch.setitem(cli._COMMANDS, "lattice-info", boom)
    out = str(tmp_path / "run")
    assert main(["lattice-info", "--out", out]) == 2
    assert not os.path.exists(os.path.join(out, "partial.json"))
    assert not os.path.exists(os.path.join(out, "manifest.json"))
