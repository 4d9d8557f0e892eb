"""Discriminative selection of text tokens worth grounding against an image.

A token earns its place through two views of the same attention mechanism:
how much softmax mass it collects from the other text tokens (standing inside
the prompt) and how much it collects from the image patches (visual
relevance). Both scores are min-max scaled and summed into one unified score,
and the top fraction of tokens is kept.

Bookkeeping tokens (sequence markers the caller flags as special) soak up
disproportionate attention without carrying content, so they are excluded
before any scoring and can never be selected. Their score slots are filled
with -inf to make the exclusion visible downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, ParameterError
from .numerics import (
    floor_count,
    l2_normalize_rows,
    minmax_scale,
    row_softmax,
    top_k_indices,
)

__all__ = [
    "TokenSequence",
    "TextFilterResult",
    "intra_affinity_scores",
    "inter_affinity_scores",
    "filter_text_tokens",
]


@dataclass
class TokenSequence:
    """A run of embeddings plus per-token special flags.

    Flagged tokens are sequence markers (start/end and similar) that carry no
    content; scoring skips them and selection never returns them. Instances
    are treated as immutable after construction.
    """

    embeddings: np.ndarray
    special_flags: np.ndarray

    def __post_init__(self) -> None:
        emb = np.asarray(self.embeddings, dtype=np.float64)
        if emb.ndim != 2 or emb.shape[0] == 0 or emb.shape[1] == 0:
            raise InputError(
                f"token embeddings must be a non-empty 2-D matrix, got shape {emb.shape}"
            )
        flags = np.asarray(self.special_flags, dtype=bool)
        if flags.shape != (emb.shape[0],):
            raise InputError(
                f"special flags must have one entry per token: "
                f"{flags.shape} flags for {emb.shape[0]} tokens"
            )
        self.embeddings = emb
        self.special_flags = flags

    @property
    def count(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def content_indices(self) -> np.ndarray:
        """Indices of tokens that are not flagged special, ascending."""
        return np.flatnonzero(~self.special_flags)


@dataclass
class TextFilterResult:
    """Outcome of one filtering pass over a text sequence.

    Score vectors cover every position; special positions hold -inf.
    ``unified_scores`` is the sum of the min-max scaled intra and inter
    scores, the quantity selection actually ranks by. ``kept_indices`` is
    ascending and exactly the positions where ``mask`` is True.
    """

    intra_scores: np.ndarray
    inter_scores: np.ndarray
    unified_scores: np.ndarray
    mask: np.ndarray
    kept_indices: np.ndarray
    keep_count: int


def intra_affinity_scores(text: TokenSequence, temperature: float = 1.0) -> np.ndarray:
    """Attention mass each content token collects from the other content tokens.

    Embeddings are unit-normalized, the pairwise cosine matrix is row-softmaxed
    at the given temperature, and each token's score is its column sum. The
    total mass across content tokens therefore equals their count. Special
    positions get -inf.
    """
    idx = text.content_indices
    if idx.size == 0:
        raise InputError("every token is flagged special; nothing to score")
    z = l2_normalize_rows(text.embeddings)[idx]
    probs = row_softmax(z @ z.T, temperature)
    scores = np.full(text.count, -np.inf)
    scores[idx] = probs.sum(axis=0)
    return scores


def inter_affinity_scores(
    text: TokenSequence, image: TokenSequence, temperature: float = 1.0
) -> np.ndarray:
    """Attention mass each content text token collects from the image patches.

    Each patch distributes one unit of softmax mass over the content tokens,
    so the scores sum to the patch count. Special positions get -inf.
    """
    if text.dim != image.dim:
        raise InputError(
            f"embedding width mismatch: text dim {text.dim} vs image dim {image.dim}"
        )
    idx = text.content_indices
    if idx.size == 0:
        raise InputError("every token is flagged special; nothing to score")
    zt = l2_normalize_rows(text.embeddings)[idx]
    zi = l2_normalize_rows(image.embeddings)
    probs = row_softmax(zi @ zt.T, temperature)
    scores = np.full(text.count, -np.inf)
    scores[idx] = probs.sum(axis=0)
    return scores


def filter_text_tokens(
    text: TokenSequence,
    image: TokenSequence,
    keep_ratio: float = 0.4,
    temperature: float = 1.0,
) -> TextFilterResult:
    """Keep the top fraction of content tokens by unified affinity score.

    The keep count is max(1, floor(keep_ratio * content_count)), so at least
    one token always survives. Ranking ties resolve to the lower index.
    """
    if not 0.0 < keep_ratio <= 1.0:
        raise ParameterError(f"keep_ratio must be in (0, 1], got {keep_ratio}")
    intra = intra_affinity_scores(text, temperature)
    inter = inter_affinity_scores(text, image, temperature)
    idx = text.content_indices
    unified = np.full(text.count, -np.inf)
    unified[idx] = minmax_scale(intra[idx]) + minmax_scale(inter[idx])
    keep_count = min(idx.size, max(1, floor_count(keep_ratio, idx.size)))
    kept = top_k_indices(unified, keep_count)
    mask = np.zeros(text.count, dtype=bool)
    mask[kept] = True
    return TextFilterResult(
        intra_scores=intra,
        inter_scores=inter,
        unified_scores=unified,
        mask=mask,
        kept_indices=kept,
        keep_count=keep_count,
    )
