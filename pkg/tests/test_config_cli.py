import csv
import json

import pytest

from msoqn import __version__
from msoqn.cli import build_parser, config_hash, main, resolve_settings
from msoqn.config import ConfigError, parse_bool, parse_config_text, split_list


def test_parse_config_text():
    text = """
    # comment line
    max-iters = 300   # trailing comment
    Restarts = 1, 2,5
    out_dir=out/x
    """
    cfg = parse_config_text(text)
    assert cfg == {"max_iters": "300", "restarts": "1, 2,5", "out_dir": "out/x"}
    assert split_list(cfg["restarts"]) == ["1", "2", "5"]


@pytest.mark.parametrize("text", ["no equals sign", " = 3"])
def test_parse_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_parse_bool():
    assert parse_bool("Yes") and parse_bool("1") and not parse_bool("off")
    with pytest.raises(ConfigError):
        parse_bool("maybe")


def settings_for(argv):
    args = build_parser().parse_args(argv)
    return resolve_settings(args.command, args)


def test_precedence_defaults_file_flags(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("reps = 50\nmax-iters = 100\n")
    s = settings_for(["convergence", "--config", str(cfg), "--max-iters", "70"])
    assert (s["reps"], s["max_iters"], s["memory"]) == ("50", "70", "10")


def test_paper_scale_switches_budgets_but_flags_still_win():
    assert settings_for(["convergence", "--paper-scale"])["reps"] == "1000"
    s = settings_for(["bobench", "--paper-scale", "--seeds", "3"])
    assert (s["trials"], s["seeds"]) == ("300", "3")
    assert settings_for(["bobench"])["trials"] == "60"


def test_config_hash_ignores_output_location_and_workers():
    a = settings_for(["bobench", "--out-dir", "a", "--workers", "1"])
    b = settings_for(["bobench", "--out-dir", "b", "--workers", "4"])
    assert config_hash("bobench", a) == config_hash("bobench", b)
    assert config_hash("bobench", a) != config_hash("bobench", settings_for(["bobench", "--seed", "9"]))


@pytest.mark.parametrize("argv", [
    ["bobench", "--dim", "-3"],
    ["bobench", "--scheme", "abe"],
    ["convergence", "--objective", "nope"],
    ["artifacts", "--grad-tol", "-1"],
    ["convergence", "--restarts", ""],
])
def test_invalid_settings_exit_nonzero(argv, tmp_path, capsys):
    assert main(argv + ["--out-dir", str(tmp_path)]) == 2
    assert "invalid configuration" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus = 1\n")
    assert main(["artifacts", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2


def read_csv(path):
    lines = path.read_text().splitlines()
    meta = [line for line in lines if line.startswith("#")]
    rows = list(csv.DictReader([line for line in lines if not line.startswith("#")]))
    return meta, rows


def test_artifacts_files_headers_and_determinism(tmp_path):
    argv = ["artifacts", "--cases", "lbfgsb:2,bfgs:2", "--dim", "3", "--seed", "4"]
    assert main(argv + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out-dir", str(tmp_path / "b")]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(files) == 2 * 4 + 1 and "manifest.json" in files
    for name in files:
        text = (tmp_path / "a" / name).read_text()
        if name != "manifest.json":
            assert text == (tmp_path / "b" / name).read_text()
        if name.endswith(".csv"):
            assert text.startswith("# ") and f"version: {__version__}" in text and "config_hash" in text
    report = json.loads((tmp_path / "a" / "rosenbrock_bfgs_B2_D3_report.json").read_text())
    assert report["meta"]["B"] == 2 and report["meta"]["D"] == 3 and report["meta"]["seed"] == 4
    assert report["meta"]["m"] == 10 and report["meta"]["version"] == __version__
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert [r["status"] for r in manifest["runs"]] == ["ok", "ok"] and manifest["failed"] == []


def test_convergence_outputs(tmp_path):
    out = tmp_path / "c"
    assert main(["convergence", "--restarts", "1,2", "--reps", "6", "--max-iters", "60", "--out-dir", str(out)]) == 0
    meta, rows = read_csv(out / "convergence_rosenbrock_lbfgsb_B2_D5.csv")
    assert any("config_hash" in line for line in meta)
    assert list(rows[0]) == ["iteration", "median", "q25", "q75"] and len(rows) == 61
    assert all(float(r["q25"]) <= float(r["median"]) <= float(r["q75"]) for r in rows)
    _, summary = read_csv(out / "convergence_summary.csv")
    assert [r["B"] for r in summary] == ["1", "2"] and [r["reps"] for r in summary] == ["6", "3"]


def test_bobench_outputs_and_deterministic_reruns(tmp_path):
    argv = ["bobench", "--objective", "sphere,rastrigin", "--dim", "2", "--trials", "12", "--n-init", "8",
            "--seeds", "2", "--restarts", "3", "--deterministic"]
    assert main(argv + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(argv + ["--workers", "2", "--out-dir", str(tmp_path / "b")]) == 0
    _, rows = read_csv(tmp_path / "a" / "bobench_summary.csv")
    assert len(rows) == 2 * 1 * 3
    assert list(rows[0]) == ["Objective", "D", "Method", "BestValue", "Runtime", "Iters"]
    assert all(r["Runtime"] == "" for r in rows)  # timings are omitted under --deterministic
    traces = sorted(p.name for p in (tmp_path / "a" / "traces").iterdir())
    assert len(traces) == 2 * 3 * 2
    for name in traces + ["../bobench_summary.csv"]:
        assert (tmp_path / "a" / "traces" / name).read_bytes() == (tmp_path / "b" / "traces" / name).read_bytes()

    def chosen(scheme, seed):
        lines = (tmp_path / "a" / "traces" / f"rastrigin_D2_{scheme}_seed{seed}.jsonl").read_text().splitlines()
        return [json.loads(line)["x"] for line in lines if json.loads(line)["type"] == "trial"]
    for seed in (0, 1):
        assert chosen("dbe", seed) == chosen("seq", seed)


def test_failed_runs_are_listed_and_exit_one(tmp_path, monkeypatch):
    import msoqn.cli as cli

    def boom(cfg):
        raise RuntimeError("fit exploded")
    monkeypatch.setattr(cli, "run_bo_config", boom)
    out = tmp_path / "f"
    assert main(["bobench", "--trials", "12", "--seeds", "1", "--scheme", "dbe", "--out-dir", str(out)]) == 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["failed"] == ["rastrigin_D5_dbe_seed0"]
    assert "fit exploded" in manifest["runs"][0]["error"]
