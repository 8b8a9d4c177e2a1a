"""Deterministic 512-d instruction embeddings.

Stand-in for a pretrained sentence encoder: each token hashes to a fixed
pseudo-random 512-d vector, the instruction embeds as the L2-normalised
sum of its token vectors. Bag-of-tokens by construction — token order
does not matter — which is all the policy relies on (fixed size,
determinism, distinct instructions map to distinct vectors).
"""
from __future__ import annotations

import hashlib
import string
from dataclasses import dataclass

import numpy as np

EMBED_DIM = 512
_PUNCT = str.maketrans("", "", string.punctuation)


class EmbedError(ValueError):
    pass


@dataclass(frozen=True)
class InstructionEmbedding:
    values: np.ndarray  # (512,) float32, unit norm
    source_text: str


def tokenize(text: str) -> list:
    """Lowercase, strip punctuation, split on whitespace."""
    return [t for t in text.lower().translate(_PUNCT).split() if t]


def _token_vector(token: str) -> np.ndarray:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    seed = int.from_bytes(digest, "little")
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.standard_normal(EMBED_DIM)


def embed_instruction(text: str) -> InstructionEmbedding:
    tokens = tokenize(text)
    if not tokens:
        raise EmbedError("empty instruction")
    acc = np.zeros(EMBED_DIM)
    for tok in tokens:
        acc += _token_vector(tok)
    norm = np.linalg.norm(acc)
    if norm == 0.0:  # token vectors cancelling exactly is not reachable in practice
        raise EmbedError("degenerate instruction embedding")
    vec = (acc / norm).astype(np.float32)
    return InstructionEmbedding(values=vec, source_text=text)
