"""Decoder-only transformer policy over tokenized frame histories.

Each of the 6 history frames contributes 8 visual tokens; the 48-token
sequence (plus learned positional embeddings) passes through 8 pre-norm
transformer blocks with a frame-causal attention mask, and discretized
action logits are read from the newest frame's last token position.

Also owns the action representation: a normalized 7-DoF end-effector
delta plus terminate flag, its uniform 256-bin discretization, and the
mean-cross-entropy training loss over the 8 action dimensions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import tokenizer
from .autodiff import GraphError, Tensor
from .textembed import EMBED_DIM


class ActionError(ValueError):
    pass


# -- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class PolicyConfig:
    image_size: int = 144
    stage_channels: tuple = (16, 32, 64, 128)
    stage_pads: tuple = (1, 1, 1, 1)
    history_len: int = 6
    tokens_per_frame: int = 8
    num_blocks: int = 8
    num_heads: int = 4
    mlp_ratio: int = 4
    bins: int = 256
    terminate_bins: int = 2
    num_continuous_dims: int = 7

    @property
    def width(self):
        # token width C doubles as the transformer model width
        return self.stage_channels[-1]

    @property
    def grid_size(self):
        return tokenizer.stage_grid_sizes(self.image_size, self.stage_pads)[-1]

    @property
    def tokens_pre_compression(self):
        return self.grid_size**2

    @property
    def seq_len(self):
        return self.history_len * self.tokens_per_frame

    @property
    def num_action_dims(self):
        return self.num_continuous_dims + 1

    def to_dict(self):
        d = asdict(self)
        d["stage_channels"] = list(self.stage_channels)
        d["stage_pads"] = list(self.stage_pads)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("stage_channels", "stage_pads"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


# The 300x300 geometry of the original pipeline: five stride-2 stages,
# final stage unpadded, landing on the same 9x9 grid.
def paper_scale_config(**overrides):
    base = dict(
        image_size=300,
        stage_channels=(16, 32, 64, 128, 128),
        stage_pads=(1, 1, 1, 1, 0),
    )
    base.update(overrides)
    return PolicyConfig(**base)


# -- actions ----------------------------------------------------------------

@dataclass(frozen=True)
class ActionSpace:
    """Physical meaning of one normalized action unit."""

    trans_bound: float = 0.05  # metres per step at |delta| = 1
    rot_bound: float = math.radians(15.0)  # radians per step at |delta| = 1
    gripper_max: float = 0.09  # metres of opening at gripper = +1

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class ActionVector:
    dx: float = 0.0
    dy: float = 0.0
    dz: float = 0.0
    droll: float = 0.0
    dpitch: float = 0.0
    dyaw: float = 0.0
    gripper: float = 0.0  # [-1,1] -> [0, gripper_max] opening target
    terminate: bool = False

    def continuous(self):
        return np.array(
            [self.dx, self.dy, self.dz, self.droll, self.dpitch, self.dyaw, self.gripper]
        )

    def to_array(self):
        return np.concatenate([self.continuous(), [1.0 if self.terminate else 0.0]])

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=float)
        if a.shape != (8,):
            raise ActionError(f"action array must have 8 entries, got {a.shape}")
        return cls(*a[:7], terminate=bool(a[7] >= 0.5))


CONTINUOUS_DIM_NAMES = ("dx", "dy", "dz", "droll", "dpitch", "dyaw", "gripper")


def discretize_action(action: ActionVector, bins: int = 256) -> np.ndarray:
    """Uniform binning of [-1,1]; half-open intervals, last bin closed."""
    cont = action.continuous()
    for name, v in zip(CONTINUOUS_DIM_NAMES, cont):
        if not -1.0 <= v <= 1.0:
            raise ActionError(f"action component {name}={v} outside [-1, 1]")
    idx = np.floor((cont + 1.0) / 2.0 * bins).astype(np.int64)
    idx = np.minimum(idx, bins - 1)  # +1.0 belongs to the last bin
    return np.concatenate([idx, [1 if action.terminate else 0]])


def undiscretize(bin_indices, bins: int = 256) -> ActionVector:
    """Bin centres: x = -1 + (i + 0.5) * 2 / bins."""
    b = np.asarray(bin_indices)
    if b.shape != (8,):
        raise ActionError(f"bin array must have 8 entries, got {b.shape}")
    if np.any(b[:7] < 0) or np.any(b[:7] >= bins):
        raise ActionError(f"continuous bin index outside [0, {bins})")
    if b[7] not in (0, 1):
        raise ActionError(f"terminate bin must be 0 or 1, got {b[7]}")
    cont = -1.0 + (b[:7] + 0.5) * (2.0 / bins)
    return ActionVector(*cont, terminate=bool(b[7]))


# -- parameters -------------------------------------------------------------

def _trunc_normal(rng, shape, std=0.02, dtype=np.float32):
    """Normal(0, std) with resampling beyond 2 std."""
    out = rng.standard_normal(shape) * std
    bad = np.abs(out) > 2 * std
    while np.any(bad):
        out[bad] = rng.standard_normal(int(bad.sum())) * std
        bad = np.abs(out) > 2 * std
    return out.astype(dtype)


def init_params(cfg: PolicyConfig, seed: int, dtype=np.float32) -> dict:
    """Full named parameter set, deterministically derived from one seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    d = cfg.width
    p = {}
    cin = 3
    last = len(cfg.stage_channels) - 1
    for i, cout in enumerate(cfg.stage_channels):
        # He fan-in scaling keeps activation magnitude roughly constant
        # through the conv stack. Filters are made zero-mean so uniform
        # image regions produce zero response: without this, the shared
        # background component dominates every visual token and frames are
        # nearly indistinguishable at the readout, which stalls early
        # training at the action-marginal solution. The final stage gets a
        # gain so visual tokens outweigh the positional embeddings at init.
        w = _trunc_normal(
            rng, (3, 3, cin, cout), std=math.sqrt(2.0 / (9 * cin)), dtype=dtype
        )
        w = w - w.mean(axis=(0, 1, 2), keepdims=True)
        p[f"tok/stage{i}/conv_w"] = (w * 4.0 if i == last else w).astype(dtype)
        p[f"tok/stage{i}/conv_b"] = np.zeros(cout, dtype=dtype)
        # zero-initialised FiLM projections: identity conditioning at start
        p[f"tok/stage{i}/film_gamma_w"] = np.zeros((EMBED_DIM, cout), dtype=dtype)
        p[f"tok/stage{i}/film_gamma_b"] = np.zeros(cout, dtype=dtype)
        p[f"tok/stage{i}/film_beta_w"] = np.zeros((EMBED_DIM, cout), dtype=dtype)
        p[f"tok/stage{i}/film_beta_b"] = np.zeros(cout, dtype=dtype)
        cin = cout
    # sharp scoring init: near-uniform attention would average all 81
    # positions into near-identical tokens
    p["tok/learner_w"] = _trunc_normal(
        rng, (d, cfg.tokens_per_frame), std=8.0 / math.sqrt(d), dtype=dtype
    )
    p["tok/learner_b"] = np.zeros(cfg.tokens_per_frame, dtype=dtype)

    p["pos_embed"] = _trunc_normal(rng, (cfg.seq_len, d), dtype=dtype)
    for i in range(cfg.num_blocks):
        pre = f"blk{i}/"
        p[pre + "ln1_g"] = np.ones(d, dtype=dtype)
        p[pre + "ln1_b"] = np.zeros(d, dtype=dtype)
        for wn in ("wq", "wk", "wv", "wo"):
            p[pre + wn] = _trunc_normal(rng, (d, d), std=1.0 / math.sqrt(d), dtype=dtype)
        p[pre + "ln2_g"] = np.ones(d, dtype=dtype)
        p[pre + "ln2_b"] = np.zeros(d, dtype=dtype)
        p[pre + "mlp_w1"] = _trunc_normal(
            rng, (d, d * cfg.mlp_ratio), std=math.sqrt(2.0 / d), dtype=dtype
        )
        p[pre + "mlp_b1"] = np.zeros(d * cfg.mlp_ratio, dtype=dtype)
        p[pre + "mlp_w2"] = _trunc_normal(
            rng, (d * cfg.mlp_ratio, d), std=1.0 / math.sqrt(d * cfg.mlp_ratio), dtype=dtype
        )
        p[pre + "mlp_b2"] = np.zeros(d, dtype=dtype)
    p["ln_f_g"] = np.ones(d, dtype=dtype)
    p["ln_f_b"] = np.zeros(d, dtype=dtype)
    for k in range(cfg.num_action_dims):
        nbins = cfg.bins if k < cfg.num_continuous_dims else cfg.terminate_bins
        p[f"head/dim{k}_w"] = _trunc_normal(rng, (d, nbins), dtype=dtype)
        p[f"head/dim{k}_b"] = np.zeros(nbins, dtype=dtype)
    return {name: Tensor(arr, requires_grad=True, name=name) for name, arr in p.items()}


def params_to_arrays(params: dict) -> dict:
    return {k: v.data if isinstance(v, Tensor) else v for k, v in params.items()}


def arrays_to_params(arrays: dict, dtype=None) -> dict:
    out = {}
    for k, v in arrays.items():
        arr = np.asarray(v, dtype=dtype) if dtype is not None else v
        out[k] = Tensor(arr, requires_grad=True, name=k)
    return out


# -- forward passes ---------------------------------------------------------

def pad_history(frames: list, history_len: int = 6) -> np.ndarray:
    """Stack up to `history_len` frames oldest->newest, left-padding by
    repeating the oldest frame."""
    if not frames:
        raise GraphError("pad_history: empty frame history")
    frames = list(frames)[-history_len:]
    while len(frames) < history_len:
        frames.insert(0, frames[0])
    return np.stack(frames)


def encode_history(frames, embeddings, params, cfg: PolicyConfig):
    """(B,6,H,W,3) frames + (B,512) embeddings -> (B,48,width) tokens."""
    if isinstance(frames, Tensor):
        frames = frames.data
    if isinstance(embeddings, Tensor):
        embeddings = embeddings.data
    b, hl = frames.shape[0], frames.shape[1]
    if hl != cfg.history_len:
        raise GraphError(f"encode_history: expected {cfg.history_len} frames, got {hl}")
    flat_frames = Tensor(frames.reshape(b * hl, *frames.shape[2:]))
    flat_emb = Tensor(np.repeat(embeddings, hl, axis=0))
    tok81 = tokenizer.encode_image(flat_frames, flat_emb, params, cfg)
    tok8 = tokenizer.token_learn(
        tok81,
        params["tok/learner_w"],
        params["tok/learner_b"],
        cfg.tokens_per_frame,
        cfg.tokens_pre_compression,
    )
    seq = ad.reshape(tok8, (b, cfg.seq_len, cfg.width))
    return ad.add(seq, params["pos_embed"])


def frame_causal_mask(cfg: PolicyConfig, dtype):
    """(S,S) additive mask: tokens of frame t attend only to frames <= t."""
    s, tpf = cfg.seq_len, cfg.tokens_per_frame
    frame = np.arange(s) // tpf
    allowed = frame[None, :] <= frame[:, None]
    return np.where(allowed, 0.0, -1e9).astype(dtype)


def _attention(x, params, pre, cfg):
    b, s, d = x.shape
    h = cfg.num_heads
    dh = d // h
    q = ad.matmul(x, params[pre + "wq"])
    k = ad.matmul(x, params[pre + "wk"])
    v = ad.matmul(x, params[pre + "wv"])

    def heads(t):
        return ad.transpose(ad.reshape(t, (b, s, h, dh)), (0, 2, 1, 3))

    q, k, v = heads(q), heads(k), heads(v)
    scores = ad.matmul(q, ad.transpose(k, (0, 1, 3, 2)))
    scores = ad.mul(scores, 1.0 / math.sqrt(dh))
    scores = ad.add(scores, Tensor(frame_causal_mask(cfg, x.dtype)))
    att = ad.softmax(scores, axis=-1)
    out = ad.matmul(att, v)
    out = ad.reshape(ad.transpose(out, (0, 2, 1, 3)), (b, s, d))
    return ad.matmul(out, params[pre + "wo"])


def transformer_apply(seq, params, cfg: PolicyConfig):
    x = seq
    for i in range(cfg.num_blocks):
        pre = f"blk{i}/"
        normed = ad.layer_norm(x, params[pre + "ln1_g"], params[pre + "ln1_b"])
        x = ad.add(x, _attention(normed, params, pre, cfg))
        normed = ad.layer_norm(x, params[pre + "ln2_g"], params[pre + "ln2_b"])
        hmid = ad.relu(ad.add(ad.matmul(normed, params[pre + "mlp_w1"]), params[pre + "mlp_b1"]))
        x = ad.add(x, ad.add(ad.matmul(hmid, params[pre + "mlp_w2"]), params[pre + "mlp_b2"]))
    return ad.layer_norm(x, params["ln_f_g"], params["ln_f_b"])


def predict_action(seq, params, cfg: PolicyConfig, read_frame=None):
    """Token sequence (B,48,width) -> list of per-dimension logit tensors.

    Logits are read at the last token of `read_frame` (default: the newest
    frame); the causal mask guarantees frames after it cannot leak in.
    """
    if seq.shape[1] != cfg.seq_len:
        raise GraphError(f"predict_action: expected {cfg.seq_len} tokens, got {seq.shape[1]}")
    if read_frame is None:
        read_frame = cfg.history_len - 1
    x = transformer_apply(seq, params, cfg)
    read_idx = (read_frame + 1) * cfg.tokens_per_frame - 1
    readout = x[:, read_idx, :]
    return [
        ad.add(ad.matmul(readout, params[f"head/dim{k}_w"]), params[f"head/dim{k}_b"])
        for k in range(cfg.num_action_dims)
    ]


def action_loss(logits_list, targets):
    """Mean of per-dimension cross-entropies over the 8 action dimensions."""
    targets = np.asarray(targets)
    if targets.ndim != 2 or targets.shape[1] != len(logits_list):
        raise GraphError(
            f"action_loss: targets {targets.shape} do not match {len(logits_list)} heads"
        )
    total = None
    for k, logits in enumerate(logits_list):
        ce = ad.cross_entropy(logits, targets[:, k])
        total = ce if total is None else ad.add(total, ce)
    return ad.mul(total, 1.0 / len(logits_list))


def policy_forward(params, frames, embeddings, targets, cfg: PolicyConfig):
    """Full training forward: returns (loss, logits list)."""
    seq = encode_history(frames, embeddings, params, cfg)
    logits = predict_action(seq, params, cfg)
    return action_loss(logits, targets), logits


def policy_graph(params, cfg: PolicyConfig):
    """Graph-API wrapper used by gradient checking."""
    from .graph import Graph

    def build(p, inputs):
        loss, logits = policy_forward(
            p, inputs["frames"].data, inputs["embeddings"].data, inputs["targets"].data, cfg
        )
        out = {"loss": loss}
        for k, lg in enumerate(logits):
            out[f"logits{k}"] = lg
        return out

    return Graph(build, params)
