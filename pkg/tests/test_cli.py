import json
import math

import numpy as np
import pytest

from ffqcrl import cli
from ffqcrl.cli import EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC, EXIT_OK, RunConfig, main

SMALL = f"""
[system]
n_steps = 200

[optimizer]
max_iter = 5

[ripv]
theta_end = {math.pi + 0.01!r}

[mc]
levels = [0.01, 0.02]
samples = 20
angles = 3

[surrogate]
max_epochs = 1
theta_target = {math.pi + 0.004!r}
n_random = 2
"""


@pytest.fixture(scope="module")
def config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "run.toml"
    path.write_text(SMALL)
    return path


@pytest.fixture(scope="module")
def pipeline(config, tmp_path_factory):
    """Runs every command once on the small config; returns the output root."""
    root = tmp_path_factory.mktemp("run")
    c = str(config)
    assert main(["init", "--config", c, "--out", str(root / "init")]) == EXIT_OK
    ff = str(root / "init" / "ff-qcrl.json")
    assert main(["generate", "--config", c, "--out", str(root / "family"), "--init", ff]) == EXIT_OK
    fam = str(root / "family" / "family.json")
    assert main(["mc", "--config", c, "--out", str(root / "mc"), "--family", fam,
                 "--pulse", f"ff={ff}", "--pulse", f"sine={root / 'init' / 'sine.json'}"]) == EXIT_OK
    assert main(["surrogate", "dataset", "--config", c, "--out", str(root / "sur"), "--family", fam]) == EXIT_OK
    assert main(["surrogate", "train", "--config", c, "--out", str(root / "sur"),
                 "--dataset", str(root / "sur" / "dataset.csv")]) == EXIT_OK
    assert main(["surrogate", "ablate", "--config", c, "--out", str(root / "abl"), "--init", ff,
                 "--checkpoint", str(root / "sur" / "checkpoint.json")]) == EXIT_OK
    return root


# --------------------------------------------------------------------- config errors

@pytest.mark.parametrize("text", [
    "[system]\nn_step = 200\n",
    "[nonsense]\nx = 1\n",
    "[system]\nn_steps = 'many'\n",
    "[system]\nn_steps = 1\n",
    "[surrogate]\nn_train = 10\n",
    "[ripv]\ndtheta = -0.1\n",
    "[mc]\nlevels = ['a']\n",
    "this is not toml = = =",
])
def test_bad_config_exits_2(tmp_path, text, capsys):
    path = tmp_path / "bad.toml"
    path.write_text(text)
    assert main(["init", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_missing_config_exits_2(tmp_path):
    assert main(["init", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_defaults_round_trip():
    cfg = RunConfig.from_dict({})
    assert cfg.system.n_steps == 1000
    assert cfg.ripv.dtheta == 0.002
    assert len(cfg.mc.levels) == 8
    assert cfg.digest(1) != cfg.digest(2)
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.as_dict(), default=list))).digest(0) == cfg.digest(0)


# --------------------------------------------------------------------- missing artifacts

def test_surrogate_without_checkpoint_exits_3(config, tmp_path, pipeline):
    ff = str(pipeline / "init" / "ff-qcrl.json")
    code = main(["generate", "--config", str(config), "--out", str(tmp_path), "--init", ff, "--evaluator", "surrogate"])
    assert code == EXIT_MISSING
    code = main(["generate", "--config", str(config), "--out", str(tmp_path), "--init", ff, "--evaluator", "surrogate",
                 "--checkpoint", str(tmp_path / "absent.json")])
    assert code == EXIT_MISSING


def test_missing_inputs_exit_3(config, tmp_path):
    c = str(config)
    assert main(["generate", "--config", c, "--out", str(tmp_path), "--init", str(tmp_path / "x.json")]) == EXIT_MISSING
    assert main(["mc", "--config", c, "--out", str(tmp_path), "--pulse", f"a={tmp_path / 'x.json'}"]) == EXIT_MISSING
    assert main(["surrogate", "train", "--config", c, "--out", str(tmp_path),
                 "--dataset", str(tmp_path / "d.csv")]) == EXIT_MISSING


def test_mc_without_inputs_is_a_config_error(config, tmp_path):
    assert main(["mc", "--config", str(config), "--out", str(tmp_path)]) == EXIT_CONFIG


# --------------------------------------------------------------------- outputs

def hash_line(path):
    first = path.read_text().splitlines()[0]
    assert first.startswith("# config_hash=")
    return first


def test_init_outputs(pipeline):
    out = pipeline / "init"
    for name in ("ff-qcrl", "static-baseline"):
        report = json.loads((out / f"{name}_report.json").read_text())
        assert set(report) >= {"initial", "final", "params", "iterations", "stop_reason"}
        hash_line(out / f"{name}_trace.csv")
        hash_line(out / f"filter_{name}.csv")
    hash_line(out / "psd.csv")
    assert (out / "sine.json").is_file()


def test_family_outputs(pipeline):
    lines = (pipeline / "family" / "family.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1] == "theta,c1,c2,c3,c4,c5,c6,c7,R"
    assert len(lines) == 2 + 5


def test_mc_outputs(pipeline):
    lines = (pipeline / "mc" / "mc.csv").read_text().splitlines()
    hash_line(pipeline / "mc" / "mc.csv")
    labels = {row.split(",")[0] for row in lines[2:]}
    assert {"ff", "sine"} <= labels
    assert len([lb for lb in labels if lb.startswith("theta=")]) == 3
    slopes = json.loads((pipeline / "mc" / "slopes.json").read_text())
    assert set(slopes["ff"]) == {"slope", "intercept", "r2"}


def test_dataset_split_counts(pipeline):
    lines = (pipeline / "sur" / "dataset.csv").read_text().splitlines()
    hash_line(pipeline / "sur" / "dataset.csv")
    rows = [ln.split(",") for ln in lines[2:]]
    assert len(rows) == 512
    tags = [r[-1] for r in rows]
    assert [tags.count(t) for t in ("train", "val", "test")] == [409, 51, 52]


def test_train_outputs(pipeline):
    ckpt = json.loads((pipeline / "sur" / "checkpoint.json").read_text())
    assert len(ckpt["params"]) == 24
    assert ckpt["config_hash"]
    report = json.loads((pipeline / "sur" / "train_report.json").read_text())
    assert report["epochs"] == 1
    hash_line(pipeline / "sur" / "training_curve.csv")


def test_ablation_outputs(pipeline):
    wide = (pipeline / "abl" / "ablation.csv").read_text().splitlines()
    assert wide[1] == "strategy,F@0.0100,F@0.0200"
    assert [ln.split(",")[0] for ln in wide[2:]] == ["exact", "vqc", "theta-direct", "random-projected"]
    hash_line(pipeline / "abl" / "ablation_long.csv")


def test_surrogate_evaluator_generate(config, tmp_path, pipeline):
    code = main(["generate", "--config", str(config), "--out", str(tmp_path), "--init",
                 str(pipeline / "init" / "ff-qcrl.json"), "--evaluator", "surrogate",
                 "--checkpoint", str(pipeline / "sur" / "checkpoint.json")])
    assert code == EXIT_OK
    assert (tmp_path / "family.json").is_file()


# --------------------------------------------------------------------- verify and threads

def test_verify_identical(config, tmp_path, pipeline, capsys):
    code = main(["--verify", "--threads", "1", "mc", "--config", str(config), "--out", str(tmp_path),
                 "--pulse", f"ff={pipeline / 'init' / 'ff-qcrl.json'}"])
    assert code == EXIT_OK
    assert "identical" in capsys.readouterr().err


def test_verify_mismatch_exits_4(config, tmp_path, pipeline, monkeypatch):
    def noisy(cfg, out, seed, family_path, pulse_paths):
        out.mkdir(parents=True, exist_ok=True)
        (out / "mc.csv").write_bytes(np.random.default_rng().bytes(16))

    monkeypatch.setattr(cli, "cmd_mc", noisy)
    code = main(["--verify", "mc", "--config", str(config), "--out", str(tmp_path),
                 "--pulse", f"ff={pipeline / 'init' / 'ff-qcrl.json'}"])
    assert code == EXIT_NUMERIC


def test_numerical_failure_exits_4(config, tmp_path, monkeypatch):
    def boom(*args):
        raise FloatingPointError("overflow")

    monkeypatch.setattr(cli, "cmd_init", boom)
    assert main(["init", "--config", str(config), "--out", str(tmp_path)]) == EXIT_NUMERIC


def test_seed_changes_hash(config, tmp_path, pipeline):
    ff = f"ff={pipeline / 'init' / 'ff-qcrl.json'}"
    main(["mc", "--config", str(config), "--out", str(tmp_path / "a"), "--pulse", ff, "--seed", "1"])
    main(["mc", "--config", str(config), "--out", str(tmp_path / "b"), "--pulse", ff, "--seed", "2"])
    assert hash_line(tmp_path / "a" / "mc.csv") != hash_line(tmp_path / "b" / "mc.csv")
