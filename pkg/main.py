import sys
import os
import json
import logging
import argparse
import time
from contextlib import contextmanager
from dataclasses import fields
from typing import List, Optional, Sequence

import numpy as np

# Import application modules
from core.agents import EpisodeRecord, TrainingLog, make_agent, make_schedule, train_loop
from core.checkpoint import load_checkpoint, save_checkpoint
from core.config import (
    RunConfig, ALGORITHMS, STAGE_IDS, apply_overrides, config_from_dict, config_to_dict,
    dump_config, load_config
)
from core.curriculum import StageRecord, build_stages, criteria_from_config, curriculum_train, stage_config
from core.drone_env import NormalizerStats, make_env
from core.evaluation import (
    build_eval_env, compute_metrics, export, run_trials, write_trajectories
)
from core.replay_buffer import ReplayBuffer
from core.report_generator import ReportGenerator
from utils.constants import (
    APP_NAME, APP_VERSION, LOG_FORMAT, RESOLVED_CONFIG_FILE, EPISODE_LOG_FILE, STAGE_LOG_FILE,
    FINAL_CHECKPOINT_FILE, TRAJECTORY_FILE, REPORT_FILE, RUN_LOG_FILE, DEMO_WAYPOINTS
)
from utils.exceptions import handle_exception
from utils.helpers import atomic_write_text, ensure_directory, format_duration, write_csv

EPISODE_COLUMNS = [f.name for f in fields(EpisodeRecord)]
STAGE_COLUMNS = [f.name for f in fields(StageRecord)]
CHECKPOINT_DIR = "checkpoints"

logger = logging.getLogger(__name__)


def setup_logging(level=logging.INFO):
    """Configure application logging on stdout."""
    logging.basicConfig(
        level=level,
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stdout)],
        force=True
    )
    return logging.getLogger(__name__)


@contextmanager
def run_log(output_dir: str):
    """Also log into the run's output directory while the block runs."""
    handler = logging.FileHandler(os.path.join(output_dir, RUN_LOG_FILE))
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root = logging.getLogger()
    root.addHandler(handler)
    try:
        yield handler
    finally:
        root.removeHandler(handler)
        handler.close()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="main.py", description=f"{APP_NAME} v{APP_VERSION}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, help="root random seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-key configuration override, e.g. agent.gamma=0.98")

    train = sub.add_parser("train", help="train an agent")
    train.add_argument("--config", help="JSON run configuration")
    train.add_argument("--algorithm", choices=ALGORITHMS)
    train.add_argument("--episodes", type=int, help="episode budget")
    common(train)

    evaluate = sub.add_parser("eval", help="evaluate a checkpoint")
    evaluate.add_argument("checkpoint")
    evaluate.add_argument("--trials", type=int)
    evaluate.add_argument("--waypoints", type=int)
    evaluate.add_argument("--stage", choices=STAGE_IDS)
    evaluate.add_argument("--trajectories", action="store_true", help="export per-trial trajectories")
    evaluate.add_argument("--report", action="store_true", help="write a PDF report")
    common(evaluate)

    demo = sub.add_parser("demo", help="fly one multi-waypoint episode under variable mass")
    demo.add_argument("checkpoint")
    demo.add_argument("--waypoints", type=int, default=DEMO_WAYPOINTS)
    common(demo)
    return parser


def flag_overrides(args: argparse.Namespace) -> List[str]:
    """Translate dedicated flags into dotted overrides (explicit --set entries win)."""
    mapping = [
        ("seed", "seed"), ("out", "output_dir"), ("algorithm", "algorithm"),
        ("episodes", "training.episodes"), ("trials", "evaluation.trials"),
        ("waypoints", "evaluation.waypoints"), ("stage", "evaluation.stage"),
    ]
    overrides = []
    for attr, key in mapping:
        value = getattr(args, attr, None)
        if value is not None:
            overrides.append(f"{key}={json.dumps(value)}")
    if getattr(args, "trajectories", False):
        overrides.append("evaluation.record_trajectories=true")
    if getattr(args, "report", False):
        overrides.append("evaluation.report=true")
    return overrides + list(args.overrides)


def _seeds(seed: int):
    """Agent-init stream, training stream and an integer environment seed."""
    agent_seq, train_seq, env_seq = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(agent_seq), np.random.default_rng(train_seq),
            int(env_seq.generate_state(1)[0]))


def cmd_train(config: RunConfig) -> TrainingLog:
    """
    Train per configuration and write the run artifacts.

    Outputs in ``config.output_dir``: resolved_config.json, episodes.csv,
    stages.csv (curriculum runs only), periodic checkpoints and final.ckpt.npz.
    """
    out = ensure_directory(config.output_dir)
    with run_log(out):
        return _train(config, out)


def _train(config: RunConfig, out: str) -> TrainingLog:
    atomic_write_text(os.path.join(out, RESOLVED_CONFIG_FILE), dump_config(config))
    logger.info(f"Training {config.algorithm.upper()} for up to {config.training.episodes} episodes "
                f"(seed {config.seed}, curriculum {'on' if config.curriculum.enabled else 'off'})")

    agent_rng, train_rng, env_seed = _seeds(config.seed)
    agent = make_agent(config, agent_rng)
    buffer = ReplayBuffer(config.agent.buffer_length)
    normalizer = NormalizerStats()
    stages = build_stages(config) if config.curriculum.enabled \
        else [stage_config(config.training.stage, config)]
    env = make_env(config, stages[0], normalizer=normalizer, training=True, seed=env_seed)
    schedule = make_schedule(config)
    started = time.monotonic()

    def checkpoint_metadata(episode: int) -> dict:
        return {"episode": episode, "stage": env.stage.stage_id, "buffer_size": len(buffer),
                "buffer_pushes": buffer.pushes, "optimizer_updates": agent.update_count}

    def on_episode_end(record: EpisodeRecord):
        every = config.training.checkpoint_every
        if every and record.episode % every == 0:
            directory = ensure_directory(os.path.join(out, CHECKPOINT_DIR))
            save_checkpoint(os.path.join(directory, f"episode_{record.episode:06d}.ckpt.npz"),
                            agent, normalizer, config, checkpoint_metadata(record.episode))

    if config.curriculum.enabled:
        result = curriculum_train(agent, env, stages, criteria_from_config(config),
                                  config.training.episodes, buffer, train_rng, schedule,
                                  on_episode_end=on_episode_end)
        log = result.log
        write_csv([s.to_row() for s in result.stages], STAGE_COLUMNS, os.path.join(out, STAGE_LOG_FILE))
    else:
        log = train_loop(agent, env, schedule, buffer, train_rng, on_episode_end=on_episode_end)

    write_csv([e.to_row() for e in log.episodes], EPISODE_COLUMNS, os.path.join(out, EPISODE_LOG_FILE))
    save_checkpoint(os.path.join(out, FINAL_CHECKPOINT_FILE), agent, normalizer, config,
                    checkpoint_metadata(len(log.episodes)))
    logger.info(f"Training finished after {len(log.episodes)} episodes in "
                f"{format_duration(time.monotonic() - started)} "
                f"({log.optimizer_steps} optimizer steps, final stage {env.stage.stage_id})")
    return log


def _checkpoint_config(checkpoint_config: RunConfig, overrides: Sequence[str]) -> RunConfig:
    return config_from_dict(apply_overrides(config_to_dict(checkpoint_config), overrides))


def _default_out(checkpoint_path: str, name: str) -> str:
    return os.path.join(os.path.dirname(os.path.abspath(checkpoint_path)), name)


def cmd_eval(checkpoint_path: str, overrides: Sequence[str] = (), out: Optional[str] = None):
    """
    Evaluate a checkpoint with frozen statistics and export the results.

    The checkpoint is read before anything is written, so a bad file leaves
    no partial outputs.

    Returns:
        MetricsSummary
    """
    checkpoint = load_checkpoint(checkpoint_path)
    config = _checkpoint_config(checkpoint.config, overrides)
    out = ensure_directory(out or _default_out(checkpoint_path, "eval"))
    with run_log(out):
        return _evaluate(checkpoint, config, checkpoint_path, out)


def _evaluate(checkpoint, config: RunConfig, checkpoint_path: str, out: str):
    evaluation = config.evaluation
    env = build_eval_env(config, checkpoint.normalizer)
    records = run_trials(checkpoint.agent, env, evaluation.trials, config.seed,
                         record_trajectories=evaluation.record_trajectories)
    summary = compute_metrics(records)
    run_info = {
        "checkpoint": os.path.basename(checkpoint_path),
        "algorithm": checkpoint.agent.algorithm,
        "stage": evaluation.stage,
        "waypoints": evaluation.waypoints,
        "seed": config.seed,
        "trained_episodes": checkpoint.metadata.get("episode"),
        "stage_reached": checkpoint.metadata.get("stage"),
    }
    export(records, summary, out, metadata=run_info, trajectories=evaluation.record_trajectories)
    if evaluation.report:
        ReportGenerator().create_evaluation_report(summary, records, run_info,
                                                   path=os.path.join(out, REPORT_FILE))

    logger.info(f"Evaluation summary: success ratio {summary.success_ratio:.1f}%")
    print(summary.format())
    return summary


def cmd_demo(checkpoint_path: str, waypoint_count: int = DEMO_WAYPOINTS, overrides: Sequence[str] = (),
             out: Optional[str] = None) -> str:
    """
    Fly one test episode over ``waypoint_count`` waypoints with deposition and
    randomized initial mass, and export its trajectory.

    Returns:
        Path of the trajectory file
    """
    checkpoint = load_checkpoint(checkpoint_path)
    config = _checkpoint_config(checkpoint.config, overrides)
    out = ensure_directory(out or _default_out(checkpoint_path, "demo"))
    with run_log(out):
        return _demo(checkpoint, config, checkpoint_path, waypoint_count, out)


def _demo(checkpoint, config: RunConfig, checkpoint_path: str, waypoint_count: int, out: str) -> str:
    env = build_eval_env(config, checkpoint.normalizer, stage_id="C3", waypoint_count=waypoint_count)
    records = run_trials(checkpoint.agent, env, 1, config.seed, record_trajectories=True)
    metadata = {
        "checkpoint": os.path.basename(checkpoint_path),
        "algorithm": checkpoint.agent.algorithm,
        "stage": "C3",
        "waypoint_count": waypoint_count,
        "seed": config.seed,
    }
    path = write_trajectories(records, path=os.path.join(out, TRAJECTORY_FILE), metadata=metadata)
    trial = records[0]
    print(f"Demo finished: {trial.status} after {trial.steps} steps, "
          f"final error {trial.positional_error:.3f} m, trajectory in {path}")
    return path


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main application entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    logger = setup_logging(logging.DEBUG if args.verbose else logging.INFO)
    logger.info(f"Starting {APP_NAME} v{APP_VERSION} ({args.command})")

    try:
        overrides = flag_overrides(args)
        if args.command == "train":
            cmd_train(load_config(args.config, overrides))
        elif args.command == "eval":
            cmd_eval(args.checkpoint, overrides, out=args.out)
        else:
            cmd_demo(args.checkpoint, args.waypoints, overrides, out=args.out)
    except Exception as e:
        print(f"Error: {handle_exception(e, logger)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
