"""Training loop: Adam over sampled batches, freezing, checkpoints, sweeps."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import policy as pol
from .episodes import DatasetIndex, sample_batch
from .optim import AdamState, adam_step, clip_global_norm
from .sim.render import frame_to_float


class TrainError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-6  # fine-tune default; 1e-4 for from-scratch
    batch_size: int = 5
    total_steps: int = 5_000  # desk scale; the full regime runs 55_000
    checkpoint_every: int = 250  # full regime: 1_000
    freeze_first_blocks: int = 0  # 0 = fine-tune the whole model
    freeze_non_transformer: bool = None  # default: frozen iff blocks are frozen
    grad_clip: float = 1.0
    seed: int = 0
    val_batch_size: int = 16

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise TrainError("learning_rate must be positive")
        if not 0 <= self.freeze_first_blocks <= 8:
            raise TrainError("freeze_first_blocks must be in [0, 8]")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class LossCurve:
    rows: list = field(default_factory=list)  # (step, train_loss, val_loss|None)

    def append(self, step, train_loss, val_loss=None):
        if self.rows and step <= self.rows[-1][0]:
            raise TrainError("loss curve steps must strictly increase")
        self.rows.append((step, train_loss, val_loss))

    def train_losses(self):
        return np.array([r[1] for r in self.rows])

    def save_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["step", "train_loss", "val_loss"])
            for step, tr, va in self.rows:
                w.writerow([step, repr(tr), "" if va is None else repr(va)])

    @classmethod
    def load_csv(cls, path):
        curve = cls()
        with open(path, newline="") as f:
            for row in csv.DictReader(f):
                curve.rows.append(
                    (
                        int(row["step"]),
                        float(row["train_loss"]),
                        float(row["val_loss"]) if row["val_loss"] else None,
                    )
                )
        return curve


def freeze_mask(
    params: dict,
    first_n_blocks: int,
    freeze_non_transformer: bool = None,
    num_blocks: int = 8,
) -> set:
    """Names of trainable parameters.

    Transformer blocks [0, first_n_blocks) are frozen. When
    `freeze_non_transformer` (default: True whenever blocks are frozen,
    matching the last-3-of-8 setup), the tokenizer, positional embeddings
    and action heads freeze too, leaving only the unfrozen blocks and the
    final norm trainable.
    """
    if not 0 <= first_n_blocks <= num_blocks:
        raise TrainError(f"first_n_blocks must be in [0, {num_blocks}]")
    if freeze_non_transformer is None:
        freeze_non_transformer = first_n_blocks > 0
    trainable = set()
    for name in params:
        if name.startswith("blk"):
            blk = int(name.split("/")[0][3:])
            if blk < first_n_blocks:
                continue
            trainable.add(name)
        elif name.startswith("ln_f"):
            trainable.add(name)
        elif not freeze_non_transformer:
            trainable.add(name)
    return trainable


@dataclass
class TrainResult:
    params: dict  # name -> Tensor
    curve: LossCurve
    checkpoints: list  # (step, path)
    aborted: bool = False
    abort_step: int = None


def _save_checkpoint(out_dir, step, params, policy_cfg, train_cfg, seed):
    path = Path(out_dir) / f"ck_{step:06d}.svla"
    ckpt.save_params(path, pol.params_to_arrays(params))
    ckpt.save_meta(
        path.with_suffix(".json"),
        {
            "step": step,
            "seed": seed,
            "policy_config": policy_cfg.to_dict(),
            "train_config": train_cfg.to_dict(),
        },
    )
    return path


def load_checkpoint(path, dtype=np.float32):
    """Returns (params dict of Tensors, meta dict)."""
    path = Path(path)
    arrays = ckpt.load_params(path)
    meta = ckpt.load_meta(path.with_suffix(".json"))
    return pol.arrays_to_params(arrays, dtype=dtype), meta


def train(
    cfg: TrainConfig,
    index: DatasetIndex,
    init: dict,
    policy_cfg: pol.PolicyConfig,
    out_dir,
    log_every: int = 0,
) -> TrainResult:
    """Run the behavioral-cloning loop; checkpoints + loss CSV land in out_dir."""
    if not index.train_ids:
        raise TrainError("dataset has no training episodes")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    params = {name: p for name, p in init.items()}
    trainable = freeze_mask(
        params, cfg.freeze_first_blocks, cfg.freeze_non_transformer, policy_cfg.num_blocks
    )
    opt = AdamState()
    curve = LossCurve()
    checkpoints = []
    has_val = bool(index.val_ids)

    for t in range(1, cfg.total_steps + 1):
        frames, embs, targets = sample_batch(
            index, cfg.batch_size, cfg.seed, t, bins=policy_cfg.bins
        )
        for p in params.values():
            p.zero_grad()
        loss, _ = pol.policy_forward(
            params, frame_to_float(frames), embs, targets, policy_cfg
        )
        loss_val = float(loss.item())
        if not math.isfinite(loss_val):
            curve.save_csv(out_dir / "loss_curve.csv")
            return TrainResult(
                params=params,
                curve=curve,
                checkpoints=checkpoints,
                aborted=True,
                abort_step=t,
            )
        loss.backward()
        grads = {
            name: (
                params[name].grad
                if params[name].grad is not None
                else np.zeros_like(params[name].data)
            )
            for name in trainable
        }
        if cfg.grad_clip:
            clip_global_norm(grads, cfg.grad_clip)
        adam_step({n: params[n] for n in trainable}, grads, opt, cfg.learning_rate)

        val_loss = None
        if t % cfg.checkpoint_every == 0:
            if has_val:
                vf, ve, vt = sample_batch(
                    index, cfg.val_batch_size, cfg.seed ^ 0x5A5A5A, t,
                    split="val", bins=policy_cfg.bins,
                )
                from .autodiff import no_grad

                with no_grad():
                    vloss, _ = pol.policy_forward(
                        params, frame_to_float(vf), ve, vt, policy_cfg
                    )
                val_loss = float(vloss.item())
            checkpoints.append(
                (t, _save_checkpoint(out_dir, t, params, policy_cfg, cfg, cfg.seed))
            )
        curve.append(t, loss_val, val_loss)
        if log_every and t % log_every == 0:
            print(f"step {t}: loss {loss_val:.4f}" + (f" val {val_loss:.4f}" if val_loss else ""))

    if not checkpoints or checkpoints[-1][0] != cfg.total_steps:
        checkpoints.append(
            (
                cfg.total_steps,
                _save_checkpoint(out_dir, cfg.total_steps, params, policy_cfg, cfg, cfg.seed),
            )
        )
    curve.save_csv(out_dir / "loss_curve.csv")
    return TrainResult(params=params, curve=curve, checkpoints=checkpoints)


@dataclass
class SweepEntry:
    step: int
    success_rate: float
    table: object  # evaluator ResultTable


def sweep_checkpoints(checkpoint_paths, eval_fn) -> list:
    """Evaluate each checkpoint and rank descending by success rate,
    ties broken by the earlier step.

    `checkpoint_paths`: iterable of (step, path); `eval_fn(params, meta)`
    must return a ResultTable-like object with a `success_rate`.
    """
    entries = []
    for step, path in checkpoint_paths:
        params, meta = load_checkpoint(path)
        table = eval_fn(params, meta)
        entries.append(SweepEntry(step=step, success_rate=table.success_rate, table=table))
    if not entries:
        raise TrainError("no checkpoints in sweep range")
    return sorted(entries, key=lambda e: (-e.success_rate, e.step))
