import json
import os
import subprocess
import sys

import pytest

from upliftguard.cli import main

CONFIG = {
    "seed": 3,
    "dgp": {"name": "segments", "n_customers": 600},
    "model": {"meta": "t_learner", "base": "ridge"},
    "problem": {"constraints": {"budgets": [{"arm": 1, "max_count": 200}]}},
    "sweep": {"constraint_id": "budget_arm1", "grid": [0, 100, 300]},
}


def _config(tmp_path, doc=CONFIG, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def _run(tmp_path, *args, out="out", config=None):
    cfg = config or _config(tmp_path)
    return main(["--config", cfg, "--output", str(tmp_path / out), "--quiet", *args])


def _read(tmp_path, name, out="out"):
    return (tmp_path / out / name).read_bytes()


def test_generate_is_reproducible(tmp_path):
    assert _run(tmp_path, "generate", out="a") == 0
    assert _run(tmp_path, "generate", out="b") == 0
    for name in ("dataset.csv", "truth.csv", "dgp.json"):
        assert _read(tmp_path, name, "a") == _read(tmp_path, name, "b")


def test_staged_pipeline(tmp_path, capsys):
    for cmd in ("generate", "fit", "optimize", "evaluate", "sweep"):
        assert _run(tmp_path, cmd) == 0, cmd
        manifest = json.loads(_read(tmp_path, f"manifest.{cmd}.json"))
        assert manifest["command"] == cmd and manifest["seed"] == 3
        for entry in manifest["outputs"].values():
            assert (tmp_path / "out" / entry["path"]).exists()
    report = json.loads(_read(tmp_path, "report.json"))
    assert report["truth"] is not None
    assert report["policy"]["targeting_shares"][1] <= 200 / 600
    sweep = json.loads(_read(tmp_path, "sweep.json"))
    assert [p["bound"] for p in sweep["points"]] == [0, 100, 300]
    objectives = [p["objective"] for p in sweep["points"]]
    assert objectives == sorted(objectives)


def test_flags_override_sweep_section(tmp_path):
    for cmd in ("generate", "fit"):
        _run(tmp_path, cmd)
    assert _run(tmp_path, "sweep", "--constraint", "budget_arm1", "--grid", "10,20") == 0
    assert [p["bound"] for p in json.loads(_read(tmp_path, "sweep.json"))["points"]] == [10, 20]


def test_summary_is_printed(tmp_path, capsys):
    cfg = _config(tmp_path)
    assert main(["--config", cfg, "--output", str(tmp_path / "out"), "generate"]) == 0
    assert "dataset.csv" in capsys.readouterr().out


def test_evaluate_without_truth(tmp_path):
    for cmd in ("generate", "fit", "optimize"):
        _run(tmp_path, cmd)
    os.remove(tmp_path / "out" / "truth.csv")
    assert _run(tmp_path, "evaluate") == 0
    assert json.loads(_read(tmp_path, "report.json"))["truth"] is None


def test_fingerprint_mismatch_exits_2(tmp_path, capsys):
    for cmd in ("generate", "fit"):
        _run(tmp_path, cmd)
    other = dict(CONFIG, seed=4)
    assert _run(tmp_path, "generate", config=_config(tmp_path, other, "other.json")) == 0
    assert _run(tmp_path, "optimize") == 2
    assert "fingerprint mismatch" in capsys.readouterr().err


def test_missing_artifact_exits_1(tmp_path, capsys):
    _run(tmp_path, "generate")
    assert _run(tmp_path, "optimize") == 1
    assert "cate.csv" in capsys.readouterr().err


def test_configuration_errors_exit_2(tmp_path, capsys):
    bad = _config(tmp_path, dict(CONFIG, dgp={"name": "segments", "n_customers": 0}), "bad.json")
    assert _run(tmp_path, "generate", config=bad) == 2
    unknown = _config(tmp_path, dict(CONFIG, colour="red"), "unknown.json")
    assert _run(tmp_path, "generate", config=unknown) == 2
    assert main(["--config", str(tmp_path / "nope.json"), "generate"]) == 2
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    assert main(["--config", str(broken), "generate"]) == 2
    assert "error:" in capsys.readouterr().err


def test_sweep_needs_constraint(tmp_path):
    doc = {k: v for k, v in CONFIG.items() if k != "sweep"}
    cfg = _config(tmp_path, doc)
    for cmd in ("generate", "fit"):
        _run(tmp_path, cmd, config=cfg)
    assert _run(tmp_path, "sweep", config=cfg) == 2


@pytest.mark.parametrize("seed", ["-1", "abc", str(2**64)])
def test_bad_seed_is_a_usage_error(tmp_path, seed):
    with pytest.raises(SystemExit) as exc:
        main(["--seed", seed, "generate"])
    assert exc.value.code == 2


def test_seed_flag_overrides_config(tmp_path):
    _run(tmp_path, "generate", out="a")
    _run(tmp_path, "--seed", "99", "generate", out="b")
    assert _read(tmp_path, "dataset.csv", "a") != _read(tmp_path, "dataset.csv", "b")
    assert json.loads(_read(tmp_path, "dgp.json", "b"))["seed"] == 99
    assert json.loads(_read(tmp_path, "manifest.generate.json", "b"))["seed"] == 99


def test_seed_flag_after_subcommand(tmp_path):
    cfg = _config(tmp_path)
    assert main(["generate", "--config", cfg, "--output", str(tmp_path / "o"), "--seed", "7", "--quiet"]) == 0
    assert json.loads((tmp_path / "o" / "dgp.json").read_text())["seed"] == 7


def test_replay_small(tmp_path):
    cfg = _config(tmp_path, {"seed": 1, "model": {"meta": "t_learner", "base": "ridge"}})
    assert _run(tmp_path, "replay", "retention", "--n-customers", "2000", config=cfg) == 0
    replay = json.loads(_read(tmp_path, "replay.json"))
    names = [r["policy"] for r in replay["rows"]]
    assert names[:3] == ["optimized", "treat_no_one", "treat_everyone_arm_1"]
    assert replay["n_train"] + replay["n_eval"] == 2000
    assert "illustrative" in _read(tmp_path, "replay.md").decode()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "upliftguard", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "upliftguard" in proc.stdout
