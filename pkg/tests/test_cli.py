import json

import pytest

from kwelab.cli import config_hash, main, parse_config, selftest_checks, UsageError


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_parse_config():
    cfg = parse_config("# comment\neps = 1/8\ngamma=0.3\n\n")
    assert cfg == {"eps": "1/8", "gamma": "0.3"}
    with pytest.raises(UsageError):
        parse_config("bogus=1")
    with pytest.raises(UsageError):
        parse_config("eps=1\neps=2")


def test_usage_exit_codes(tmp_path):
    assert main(["simulate", "--out", str(tmp_path / "a")]) == 1
    assert main(["simulate", "--config", _write(tmp_path, "e.txt", ""), "--out", str(tmp_path / "b")]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code == 1
    bad = _write(tmp_path, "g.txt", "eps=0.5\ngamma=0.7\nensemble_size=2\nt_final=0.1\n")
    assert main(["simulate", "--config", bad, "--out", str(tmp_path / "c")]) == 1


def test_resource_exit_code(tmp_path):
    cfg = _write(tmp_path, "d.txt", "n=9\n")
    assert main(["diagrams", "--config", cfg, "--out", str(tmp_path / "d")]) == 3


def test_numeric_exit_code(tmp_path):
    cfg = _write(tmp_path, "k.txt", "h=1/4\nt_final=1e6\ndt=1e6\n")
    assert main(["kwe", "--config", cfg, "--out", str(tmp_path / "k")]) == 2


def test_simulate_outputs_and_determinism(tmp_path):
    cfg = _write(tmp_path, "s.txt", "eps=1/4\ngamma=0.3\nensemble_size=8\nt_final=1/16\nbatch_size=4\n")
    outs = []
    for workers, name in ((1, "w1"), (2, "w2")):
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / name), "--workers", str(workers),
                     "--seed", "5"]) == 0
        outs.append((tmp_path / name / "spectrum.csv").read_text())
    assert outs[0] == outs[1]
    man = json.loads((tmp_path / "w1" / "manifest.json").read_text())
    assert man["seed"] == 5 and man["subcommand"] == "simulate" and "spectrum.csv" in man["files"]
    assert outs[0].startswith(f"# config_hash={man['config_hash']}")
    assert (tmp_path / "w1" / "config.txt").exists()


def test_config_hash_depends_on_seed():
    assert config_hash({"eps": "1/8", "seed": "1"}) != config_hash({"eps": "1/8", "seed": "2"})
    assert config_hash({"a": "1", "b": "2"}) == config_hash({"b": "2", "a": "1"})


def test_other_subcommands(tmp_path):
    cfg = _write(tmp_path, "a.txt", "eps=1/4\ngamma=0.3\nn=1\ntimes=0.1,0.2\nmethods=time,resolvent\n")
    assert main(["amplitudes", "--config", cfg, "--out", str(tmp_path / "amp")]) == 0
    rows = (tmp_path / "amp" / "amplitudes.csv").read_text().splitlines()
    assert len(rows) == 2 + 6 * 2 * 2
    cfg = _write(tmp_path, "i.txt", "eps=1/4\ngamma=0.3\nensemble_size=4\ntimes=0.125\nN=1\n")
    assert main(["iterates", "--config", cfg, "--out", str(tmp_path / "it")]) == 0
    cfg = _write(tmp_path, "dg.txt", "n=2\njson=1\n")
    assert main(["diagrams", "--config", cfg, "--out", str(tmp_path / "dg")]) == 0
    assert len(json.loads((tmp_path / "dg" / "diagrams.json").read_text())) == 1080
    cfg = _write(tmp_path, "kw.txt", "h=1/4\nt_final=0.2\ndt=0.1\n")
    assert main(["kwe", "--config", cfg, "--out", str(tmp_path / "kw")]) == 0
    rep = json.loads((tmp_path / "kw" / "kwe_report.json").read_text())
    assert rep["mass_drift"] < 1e-10


def test_selftest(tmp_path, capsys):
    assert all(ok for _, ok, _ in selftest_checks())
    assert main(["selftest", "--out", str(tmp_path / "st")]) == 0
    assert "FAIL" not in capsys.readouterr().out
