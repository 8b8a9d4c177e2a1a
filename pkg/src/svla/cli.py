"""Command-line entry point: demo generation, datasets, training, eval, serve.

Every subcommand accepts `--config <json>` (sections: "scene", "policy",
"train", "task"; flags override file values), is deterministic given
`--seed`, and prints a machine-readable JSON summary on stdout. The env
var SVLA_DATA_DIR overrides the default data root.
"""
from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import evaluate as ev
from . import policy as pol
from . import training as tr
from .episodes import EpisodeError, build_dataset, load_episode, replay_validate, save_episode
from .oracle import run_oracle_episode

DEFAULT_SCENE = {
    "camera": "top",
    "objects": [
        {"id": "banana", "kind": "banana", "region": [0.32, 0.38, 0.02, 0.08]},
    ],
}
DEFAULT_INSTRUCTION = "pick up the banana"
DEFAULT_TARGET = "banana"


def data_root() -> Path:
    return Path(os.environ.get("SVLA_DATA_DIR", "data"))


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise click.ClickException(f"bad config file {path}: {e}")


def _task(config: dict, instruction, target):
    task = config.get("task", {})
    return (
        instruction or task.get("instruction", DEFAULT_INSTRUCTION),
        target or task.get("target_id", DEFAULT_TARGET),
    )


def _scene(config: dict, scene_path) -> dict:
    if scene_path:
        return _load_config(scene_path) or DEFAULT_SCENE
    return config.get("scene", DEFAULT_SCENE)


def _policy_cfg(config: dict) -> pol.PolicyConfig:
    return pol.PolicyConfig.from_dict(config.get("policy", {}))


def _emit(summary: dict):
    click.echo(json.dumps(summary, indent=2))


@click.group()
def main():
    """Desk-scale SCARA vision-language-action workbench."""


# -- demo -------------------------------------------------------------------

@main.group()
def demo():
    """Demonstration generation."""


@demo.command("generate")
@click.option("--count", default=10, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--scene", "scene_path", default=None, help="Scene spec JSON file.")
@click.option("--instruction", default=None)
@click.option("--target", default=None)
@click.option("--out", default=None, help="Output directory (default $SVLA_DATA_DIR/demos).")
@click.option("--config", "config_path", default=None)
def demo_generate(count, seed, scene_path, instruction, target, out, config_path):
    """Generate scripted-oracle demonstrations, one directory each."""
    config = _load_config(config_path)
    scene = _scene(config, scene_path)
    instruction, target = _task(config, instruction, target)
    out = Path(out) if out else data_root() / "demos"
    episodes = []
    for i in range(count):
        ep = run_oracle_episode(
            scene,
            seed=seed + i,
            instruction=instruction,
            episode_id=f"ep{seed + i:05d}",
            target_id=target,
        )
        save_episode(ep, out)
        report = replay_validate(ep)
        episodes.append(
            {
                "id": ep.id,
                "steps": len(ep.steps),
                "replay_divergence": report.max_pose_divergence,
            }
        )
    _emit(
        {
            "command": "demo generate",
            "out": str(out),
            "count": count,
            "seed": seed,
            "all_replay_valid": all(e["replay_divergence"] <= 1e-6 for e in episodes),
            "episodes": episodes,
        }
    )


# -- dataset ----------------------------------------------------------------

@main.group()
def dataset():
    """Dataset assembly."""


@dataset.command("build")
@click.option("--demos", "demos_dir", default=None, help="Directory of episode dirs.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--val-fraction", default=0.1, show_default=True, type=float)
@click.option("--config", "config_path", default=None)
def dataset_build(demos_dir, seed, val_fraction, config_path):
    """Validate episodes and write the train/val split manifest."""
    _load_config(config_path)
    demos_dir = Path(demos_dir) if demos_dir else data_root() / "demos"
    dirs = sorted(p.parent for p in demos_dir.glob("*/meta.json"))
    if not dirs:
        raise click.ClickException(f"no episodes under {demos_dir}")
    try:
        index = build_dataset(dirs, seed=seed, val_fraction=val_fraction)
    except EpisodeError as e:
        raise click.ClickException(str(e))
    manifest = {
        "seed": seed,
        "val_fraction": val_fraction,
        "episode_dirs": [str(d) for d in dirs],
        "train_ids": index.train_ids,
        "val_ids": index.val_ids,
        "total_steps": index.total_steps,
    }
    manifest_path = demos_dir / "dataset.json"
    manifest_path.write_text(json.dumps(manifest, indent=2))
    _emit(
        {
            "command": "dataset build",
            "manifest": str(manifest_path),
            "episodes": len(dirs),
            "train": len(index.train_ids),
            "val": len(index.val_ids),
            "total_steps": index.total_steps,
        }
    )


def _index_from_manifest(demos_dir: Path):
    manifest_path = demos_dir / "dataset.json"
    if not manifest_path.exists():
        raise click.ClickException(
            f"{manifest_path} not found: run `svla dataset build` first"
        )
    manifest = json.loads(manifest_path.read_text())
    return build_dataset(
        manifest["episode_dirs"],
        seed=manifest["seed"],
        val_fraction=manifest["val_fraction"],
    )


# -- train ------------------------------------------------------------------

@main.command("train")
@click.option("--config", "config_path", default=None)
@click.option("--demos", "demos_dir", default=None)
@click.option("--out", default=None, help="Run directory (default $SVLA_DATA_DIR/runs/run0).")
@click.option("--init", "init_path", default=None, help="Checkpoint to fine-tune from.")
@click.option("--seed", default=None, type=int)
@click.option("--steps", default=None, type=int)
@click.option("--lr", default=None, type=float)
@click.option("--batch-size", default=None, type=int)
@click.option("--freeze-first-blocks", default=None, type=int)
@click.option("--log-every", default=50, show_default=True, type=int)
def train_cmd(config_path, demos_dir, out, init_path, seed, steps, lr, batch_size,
              freeze_first_blocks, log_every):
    """Behavioral cloning on a built dataset; checkpoints + loss CSV."""
    config = _load_config(config_path)
    tdict = dict(config.get("train", {}))
    for key, val in (
        ("seed", seed), ("total_steps", steps), ("learning_rate", lr),
        ("batch_size", batch_size), ("freeze_first_blocks", freeze_first_blocks),
    ):
        if val is not None:
            tdict[key] = val
    try:
        cfg = tr.TrainConfig.from_dict(tdict)
    except (TypeError, tr.TrainError) as e:
        raise click.ClickException(f"bad train config: {e}")
    demos_dir = Path(demos_dir) if demos_dir else data_root() / "demos"
    out = Path(out) if out else data_root() / "runs" / "run0"
    index = _index_from_manifest(demos_dir)
    if init_path:
        params, meta = tr.load_checkpoint(init_path)
        policy_cfg = pol.PolicyConfig.from_dict(meta["policy_config"])
    else:
        policy_cfg = _policy_cfg(config)
        params = pol.init_params(policy_cfg, seed=cfg.seed)
    result = tr.train(cfg, index, params, policy_cfg, out, log_every=log_every)
    _emit(
        {
            "command": "train",
            "out": str(out),
            "steps": cfg.total_steps,
            "aborted": result.aborted,
            "abort_step": result.abort_step,
            "final_train_loss": result.curve.rows[-1][1],
            "checkpoints": [str(p) for _, p in result.checkpoints],
            "loss_curve": str(out / "loss_curve.csv"),
        }
    )
    if result.aborted:
        sys.exit(1)


# -- eval / trace / sweep ---------------------------------------------------

def _scenarios(config, scene_path, instruction, target):
    scene = _scene(config, scene_path)
    instruction, target = _task(config, instruction, target)
    return [{"scene_spec": scene, "instruction": instruction, "target_id": target}]


@main.command("eval")
@click.option("--checkpoint", required=True)
@click.option("--runs", default=30, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--scene", "scene_path", default=None)
@click.option("--instruction", default=None)
@click.option("--target", default=None)
@click.option("--out", default=None, help="Directory for results.csv + runs.jsonl.")
@click.option("--config", "config_path", default=None)
def eval_cmd(checkpoint, runs, seed, scene_path, instruction, target, out, config_path):
    """Closed-loop evaluation; prints the outcome table."""
    config = _load_config(config_path)
    params, meta = tr.load_checkpoint(checkpoint)
    policy_cfg = pol.PolicyConfig.from_dict(meta["policy_config"])
    scenarios = _scenarios(config, scene_path, instruction, target)
    out = Path(out) if out else Path(checkpoint).parent
    out.mkdir(parents=True, exist_ok=True)
    table, _ = ev.evaluate(
        params, policy_cfg, scenarios, runs_per_scenario=runs, seed=seed,
        log_path=out / "runs.jsonl",
    )
    table.to_csv(out / "results.csv")
    click.echo(table.to_text())
    _emit(
        {
            "command": "eval",
            "checkpoint": str(checkpoint),
            "total": table.total,
            "counts": table.counts,
            "success_rate": table.success_rate,
            "success_or_near_miss_rate": table.success_or_near_miss_rate,
            "results_csv": str(out / "results.csv"),
            "runs_jsonl": str(out / "runs.jsonl"),
        }
    )


@main.command("trace")
@click.option("--checkpoint", required=True)
@click.option("--episode", "episode_dir", required=True)
@click.option("--out", default=None, help="CSV path (default <episode>/trace.csv).")
@click.option("--config", "config_path", default=None)
def trace_cmd(checkpoint, episode_dir, out, config_path):
    """Teacher-forced validation trace for one episode."""
    _load_config(config_path)
    params, meta = tr.load_checkpoint(checkpoint)
    policy_cfg = pol.PolicyConfig.from_dict(meta["policy_config"])
    episode = load_episode(episode_dir)
    rows = ev.validation_trace(params, policy_cfg, episode)
    out = Path(out) if out else Path(episode_dir) / "trace.csv"
    ev.trace_to_csv(rows, out)
    agreement = ev.trace_bin_agreement(rows)
    _emit(
        {
            "command": "trace",
            "episode": episode.id,
            "steps": len(rows),
            "bin_agreement": [float(a) for a in agreement],
            "mean_bin_agreement": float(agreement.mean()),
            "trace_csv": str(out),
        }
    )


@main.command("sweep")
@click.option("--run-dir", required=True, help="Training run directory with ck_*.svla.")
@click.option("--runs", default=10, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--scene", "scene_path", default=None)
@click.option("--instruction", default=None)
@click.option("--target", default=None)
@click.option("--config", "config_path", default=None)
def sweep_cmd(run_dir, runs, seed, scene_path, instruction, target, config_path):
    """Evaluate every checkpoint in a run and rank by success rate."""
    config = _load_config(config_path)
    scenarios = _scenarios(config, scene_path, instruction, target)
    paths = sorted(Path(run_dir).glob("ck_*.svla"))
    if not paths:
        raise click.ClickException(f"no checkpoints under {run_dir}")

    def eval_fn(params, meta):
        policy_cfg = pol.PolicyConfig.from_dict(meta["policy_config"])
        table, _ = ev.evaluate(
            params, policy_cfg, scenarios, runs_per_scenario=runs, seed=seed
        )
        return table

    entries = tr.sweep_checkpoints(
        [(int(p.stem.split("_")[1]), p) for p in paths], eval_fn
    )
    _emit(
        {
            "command": "sweep",
            "run_dir": str(run_dir),
            "ranking": [
                {"step": e.step, "success_rate": e.success_rate, "counts": e.table.counts}
                for e in entries
            ],
            "best_step": entries[0].step,
        }
    )


# -- replay / serve ---------------------------------------------------------

@main.command("replay")
@click.option("--episode", "episode_dir", required=True)
@click.option("--threshold", default=1e-6, show_default=True, type=float)
def replay_cmd(episode_dir, threshold):
    """Re-run a stored episode's actions and report pose divergence."""
    try:
        episode = load_episode(episode_dir)
        report = replay_validate(episode)
    except EpisodeError as e:
        raise click.ClickException(str(e))
    ok = report.max_pose_divergence <= threshold
    _emit(
        {
            "command": "replay",
            "episode": episode.id,
            "steps": len(episode.steps),
            "max_pose_divergence": report.max_pose_divergence,
            "verdict": "pass" if ok else "fail",
        }
    )
    if not ok:
        sys.exit(1)


@main.command("serve")
@click.option("--bind", default="127.0.0.1:8700", show_default=True)
@click.option("--scene", "scene_path", default=None)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--data-dir", default=None)
@click.option("--config", "config_path", default=None)
@click.option("--ui", "ui_dir", default=None,
              help="Directory with a built browser UI (index.html + dist/).")
def serve_cmd(bind, scene_path, seed, data_dir, config_path, ui_dir):
    """Run the teleoperation gateway service."""
    from .server import serve

    config = _load_config(config_path)
    scene = _scene(config, scene_path)
    data_dir = Path(data_dir) if data_dir else data_root() / "demos"
    click.echo(f"svla gateway on {bind} (data: {data_dir})", err=True)
    try:
        serve(bind, scene, data_dir, scene_seed=seed, ui_dir=ui_dir)
    except OSError as e:
        raise click.ClickException(f"bind failed: {e}")


if __name__ == "__main__":
    main()
