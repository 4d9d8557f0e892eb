"""Synthetic text/image pairs with planted correspondences.

A sample is built so that ground truth is known by construction: the text
tokens are orthonormal, every planted patch is a lightly noised copy of one
content token (cosine >= 0.99 to it), and unplanted patches are drawn
orthogonal to the whole text span (|cosine| <= 0.1 to every token, in
practice ~1e-15). A pipeline that works must rank the planted patches above
the unplanted ones, which is what the recovery checks measure.

Each patch also gets a discrete code: the index of the content token it is
most aligned with. Codes double as reconstruction targets in discrete mode
and as i2t answer tokens, so model vocabularies must be at least n_text.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import GenerationError, ParameterError
from ..numerics import Rng, floor_count, l2_normalize_rows
from ..textfilter import TokenSequence

__all__ = ["SyntheticSample", "generate_synthetic", "generate_batch"]

_MAX_TRIES = 200


@dataclass
class SyntheticSample:
    """One text/image pair plus the planted ground truth.

    ``planted_map`` flags the patches that copy a text token. It is None
    only for samples loaded from files, where the truth is unknown;
    generated samples always carry it with at least one True and one False.
    ``discrete_codes`` holds one code per patch.
    """

    text: TokenSequence
    image: TokenSequence
    planted_map: np.ndarray | None
    discrete_codes: np.ndarray | None


def _random_unit(rng: Rng, dim: int) -> np.ndarray:
    for _ in range(_MAX_TRIES):
        v = rng.normal(dim)
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            return v / norm
    raise GenerationError("could not draw a non-degenerate direction")


def generate_synthetic(
    rng: Rng,
    n_text: int = 6,
    n_patches: int = 16,
    dim: int = 12,
    planted_fraction: float = 0.3,
) -> SyntheticSample:
    """Build one sample with known planted correspondences.

    Token 0 is flagged special (a BOS-like marker); the planted patches all
    copy one rng-chosen content token. Requires dim > n_text, otherwise the
    text span fills the whole space and no orthogonal patch exists; that and
    any other unsatisfiable setting raise GenerationError.
    """
    if n_text < 2:
        raise ParameterError(f"n_text must be >= 2 (one special, one content), got {n_text}")
    if n_patches < 2:
        raise ParameterError(f"n_patches must be >= 2, got {n_patches}")
    if not 0.0 < planted_fraction < 1.0:
        raise GenerationError(
            f"planted_fraction must be in (0, 1), got {planted_fraction}"
        )
    if dim <= n_text:
        raise GenerationError(
            f"dim must exceed n_text to leave room for unplanted patches: "
            f"dim={dim} n_text={n_text}"
        )
    # start from an orthonormal frame so chance correlations cannot tilt the
    # scores, then lean every other content token a little toward the source:
    # the source then wins both affinity views by a real margin instead of a
    # float-noise tie, which min-max scaling would amplify arbitrarily
    basis, r = np.linalg.qr(rng.normal((dim, n_text)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    basis = basis * signs
    source = 1 + rng.integer(n_text - 1)
    lean = 0.25
    text_emb = basis.T.copy()
    for j in range(1, n_text):
        if j != source:
            tilted = basis[:, j] + lean * basis[:, source]
            text_emb[j] = tilted / np.linalg.norm(tilted)
    flags = np.zeros(n_text, dtype=bool)
    flags[0] = True

    n_planted = min(n_patches - 1, max(1, floor_count(planted_fraction, n_patches)))
    planted_map = np.zeros(n_patches, dtype=bool)
    planted_map[rng.permutation(n_patches)[:n_planted]] = True

    patches = np.zeros((n_patches, dim))
    for i in range(n_patches):
        if planted_map[i]:
            for _ in range(_MAX_TRIES):
                noise = rng.uniform_scalar(0.0, 0.1) * _random_unit(rng, dim)
                cand = text_emb[source] + noise
                cand /= np.linalg.norm(cand)
                if float(cand @ text_emb[source]) >= 0.9:
                    patches[i] = cand
                    break
            else:
                raise GenerationError("could not plant a patch within budget")
        else:
            for _ in range(_MAX_TRIES):
                v = rng.normal(dim)
                v = v - basis @ (basis.T @ v)
                norm = np.linalg.norm(v)
                if norm < 1e-8:
                    continue
                cand = v / norm
                if float(np.abs(text_emb @ cand).max()) <= 0.1:
                    patches[i] = cand
                    break
            else:
                raise GenerationError(
                    "could not draw a patch orthogonal to the text span within budget"
                )

    cosines = l2_normalize_rows(patches) @ text_emb.T
    cosines[:, flags] = -np.inf
    codes = cosines.argmax(axis=1).astype(np.int64)
    return SyntheticSample(
        text=TokenSequence(text_emb, flags),
        image=TokenSequence(patches, np.zeros(n_patches, dtype=bool)),
        planted_map=planted_map,
        discrete_codes=codes,
    )


def generate_batch(
    rng: Rng,
    n_samples: int,
    n_text: int = 6,
    n_patches: int = 16,
    dim: int = 12,
    planted_fraction: float = 0.3,
) -> list[SyntheticSample]:
    """n_samples sequential draws from one stream; deterministic per seed."""
    if n_samples < 1:
        raise ParameterError(f"n_samples must be >= 1, got {n_samples}")
    return [
        generate_synthetic(rng, n_text, n_patches, dim, planted_fraction)
        for _ in range(n_samples)
    ]
