import json
import os

import pandas as pd
import pytest

from main import main, build_parser, flag_overrides

SMALL_RUN = [
    "--set", "env.max_steps=40",
    "--set", "network.hidden_sizes=[16, 16]",
    "--set", "agent.batch_size=16",
    "--set", "training.warmup=16",
    "--set", "training.num_epochs=1",
    "--set", "training.max_mini_batches=2",
    "--set", "training.checkpoint_every=3",
    "--set", "training.log_every=0",
    "--set", "curriculum.enabled=false",
    "--set", "evaluation.trials=4",
]


def train(out, seed=7, extra=()):
    return main(["train", "--algorithm", "td3", "--episodes", "6", "--seed", str(seed),
                 "--out", str(out), *SMALL_RUN, *extra])


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "run"
    assert train(out) == 0
    return out


def test_train_writes_run_artifacts(trained_run):
    for name in ("resolved_config.json", "episodes.csv", "final.ckpt.npz", "run.log"):
        assert (trained_run / name).is_file()
    assert not (trained_run / "stages.csv").exists()
    assert sorted(os.listdir(trained_run / "checkpoints")) == [
        "episode_000003.ckpt.npz", "episode_000006.ckpt.npz"]

    resolved = json.loads((trained_run / "resolved_config.json").read_text())
    assert resolved["seed"] == 7
    assert resolved["training"]["episodes"] == 6
    assert resolved["network"]["hidden_sizes"] == [16, 16]

    episodes = pd.read_csv(trained_run / "episodes.csv")
    assert episodes["episode"].tolist() == list(range(1, 7))
    assert set(episodes["stage"]) == {"C1"}


def test_training_is_reproducible(trained_run, tmp_path):
    assert train(tmp_path / "again") == 0
    assert (tmp_path / "again" / "episodes.csv").read_bytes() == (trained_run / "episodes.csv").read_bytes()


def test_curriculum_run_writes_stage_log(tmp_path):
    out = tmp_path / "curriculum"
    assert train(out, extra=["--set", "curriculum.enabled=true", "--set", "curriculum.stages=[\"C1\", \"C2\"]",
                             "--set", "curriculum.min_episodes=2", "--set", "curriculum.window=2"]) == 0
    stages = pd.read_csv(out / "stages.csv")
    assert stages["stage"].iloc[0] == "C1"
    assert stages["episodes"].sum() == len(pd.read_csv(out / "episodes.csv"))


def test_eval_prints_success_ratio_and_is_reproducible(trained_run, tmp_path, capsys):
    checkpoint = str(trained_run / "final.ckpt.npz")
    assert main(["eval", checkpoint, "--trials", "4", "--seed", "5", "--out", str(tmp_path / "a")]) == 0
    assert "Success ratio:" in capsys.readouterr().out
    assert main(["eval", checkpoint, "--trials", "4", "--seed", "5", "--out", str(tmp_path / "b")]) == 0

    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["metrics"]["trials"] == 4
    assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()
    assert (tmp_path / "a" / "trials.csv").read_bytes() == (tmp_path / "b" / "trials.csv").read_bytes()
    assert (tmp_path / "a" / "errors.csv").is_file()


def test_eval_report_and_trajectories(trained_run, tmp_path):
    out = tmp_path / "report"
    assert main(["eval", str(trained_run / "final.ckpt.npz"), "--trials", "2", "--stage", "C2",
                 "--waypoints", "3", "--trajectories", "--report", "--out", str(out)]) == 0
    assert (out / "evaluation_report.pdf").read_bytes().startswith(b"%PDF")
    document = json.loads((out / "trajectory.json").read_text())
    assert len(document["trials"]) == 2
    assert all(len(t["waypoints"]) == 3 for t in document["trials"])


def test_corrupt_checkpoint_fails_without_outputs(tmp_path, capsys):
    bad = tmp_path / "bad.ckpt.npz"
    bad.write_bytes(b"garbage")
    out = tmp_path / "eval"
    assert main(["eval", str(bad), "--out", str(out)]) == 1
    assert not out.exists()
    assert "Error:" in capsys.readouterr().err


def test_demo_is_byte_identical_across_runs(trained_run, tmp_path):
    checkpoint = str(trained_run / "final.ckpt.npz")
    assert main(["demo", checkpoint, "--waypoints", "6", "--out", str(tmp_path / "one")]) == 0
    assert main(["demo", checkpoint, "--waypoints", "6", "--out", str(tmp_path / "two")]) == 0
    first = (tmp_path / "one" / "trajectory.json").read_bytes()
    assert first == (tmp_path / "two" / "trajectory.json").read_bytes()
    document = json.loads(first)
    assert document["run"]["stage"] == "C3"
    assert len(document["trials"][0]["waypoints"]) == 6


def test_unknown_configuration_key_fails(tmp_path):
    assert main(["train", "--out", str(tmp_path / "x"), "--set", "agent.gama=0.9"]) == 1
    assert not (tmp_path / "x").exists()


def test_argument_errors_exit_with_usage():
    with pytest.raises(SystemExit) as excinfo:
        main(["train", "--algorithm", "ppo"])
    assert excinfo.value.code == 2


def test_flag_overrides_precede_explicit_settings():
    args = build_parser().parse_args(["eval", "ckpt", "--trials", "9", "--stage", "C2",
                                      "--set", "evaluation.trials=3"])
    overrides = flag_overrides(args)
    assert overrides == ["evaluation.trials=9", "evaluation.stage=\"C2\"", "evaluation.trials=3"]
