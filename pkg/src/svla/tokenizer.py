"""Instruction-conditioned image tokenizer.

A stack of stride-2 conv stages, each followed by a FiLM layer driven by
the 512-d instruction embedding and a ReLU, produces a square spatial
feature map (9x9 at the default 144x144 input). The map flattens row-major
into per-position visual tokens, which an attention head then compresses
to a fixed small set of 8 tokens.

FiLM is parameterised as out = (1 + gamma) * in + beta with the
gamma/beta projections initialised to exactly zero, so an untrained
tokenizer ignores the instruction entirely.
"""
from __future__ import annotations

from . import autodiff as ad
from .autodiff import GraphError
from .textembed import EMBED_DIM


def stage_grid_sizes(image_size, stage_pads, kernel=3, stride=2):
    """Spatial extent after each conv stage."""
    sizes = []
    n = image_size
    for pad in stage_pads:
        n = (n + 2 * pad - kernel) // stride + 1
        sizes.append(n)
    return sizes


def film_modulate(features, embedding, gamma_w, gamma_b, beta_w, beta_b):
    """Per-channel affine conditioning: (1 + gamma) * x + beta.

    features (N,H,W,C); embedding (N,512); projections (512,C) and (C,).
    """
    c = features.shape[-1]
    if gamma_w.shape != (EMBED_DIM, c):
        raise GraphError(
            f"film_modulate: projection shape {gamma_w.shape} does not match "
            f"{EMBED_DIM} -> {c} channels"
        )
    if embedding.shape[-1] != EMBED_DIM:
        raise GraphError(f"film_modulate: embedding must be {EMBED_DIM}-d")
    n = features.shape[0]
    gamma = ad.add(ad.matmul(embedding, gamma_w), gamma_b)
    beta = ad.add(ad.matmul(embedding, beta_w), beta_b)
    gamma = ad.reshape(gamma, (n, 1, 1, c))
    beta = ad.reshape(beta, (n, 1, 1, c))
    scaled = ad.mul(features, ad.add(gamma, 1.0))
    return ad.add(scaled, beta)


def encode_image(frames, embedding, params, cfg):
    """Frames (N,H,W,3) + embeddings (N,512) -> (N, grid*grid, C) tokens."""
    if frames.shape[1] != cfg.image_size or frames.shape[2] != cfg.image_size:
        raise GraphError(
            f"encode_image: expected {cfg.image_size}x{cfg.image_size} frames, "
            f"got {frames.shape[1]}x{frames.shape[2]}"
        )
    x = frames
    for i, pad in enumerate(cfg.stage_pads):
        x = ad.conv2d(
            x,
            params[f"tok/stage{i}/conv_w"],
            params[f"tok/stage{i}/conv_b"],
            stride=2,
            pad=pad,
        )
        x = film_modulate(
            x,
            embedding,
            params[f"tok/stage{i}/film_gamma_w"],
            params[f"tok/stage{i}/film_gamma_b"],
            params[f"tok/stage{i}/film_beta_w"],
            params[f"tok/stage{i}/film_beta_b"],
        )
        x = ad.relu(x)
    n, gh, gw, c = x.shape
    return ad.reshape(x, (n, gh * gw, c))


def token_learn(tokens, weight, bias, num_output_tokens, expected_count):
    """Compress (N, P, C) position tokens to (N, K, C) learned tokens.

    Attention logits come from a linear map of each token; each output
    token is the softmax-over-positions mixture of all input tokens.
    """
    if tokens.shape[1] != expected_count:
        raise GraphError(
            f"token_learn: expected {expected_count} input tokens, got {tokens.shape[1]}"
        )
    if weight.shape[-1] != num_output_tokens:
        raise GraphError(
            f"token_learn: weight produces {weight.shape[-1]} tokens, want {num_output_tokens}"
        )
    logits = ad.add(ad.matmul(tokens, weight), bias)  # (N, P, K)
    att = ad.softmax(logits, axis=1)  # rows over positions sum to 1
    att_t = ad.transpose(att, (0, 2, 1))  # (N, K, P)
    return ad.matmul(att_t, tokens)  # (N, K, C)


def token_attention(tokens, weight, bias):
    """The (N, P, K) attention maps themselves, for inspection/tests."""
    logits = ad.add(ad.matmul(tokens, weight), bias)
    return ad.softmax(logits, axis=1)
