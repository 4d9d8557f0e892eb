"""Per-patch grounding maps derived from kept text tokens.

Each kept token spreads one unit of softmax attention mass over the image
patches; a patch's raw grounding value is the total mass it receives. The
map is min-max scaled to [0, 1] and, for masking decisions, perturbed with
small uniform noise so that near-ties break differently across steps instead
of freezing one arbitrary ordering into every plan.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InputError, ParameterError
from .numerics import Rng, l2_normalize_rows, minmax_scale, row_softmax, uniform_vector
from .textfilter import TextFilterResult, TokenSequence

__all__ = ["GroundingMap", "grounding_map", "perturb"]


@dataclass
class GroundingMap:
    """Grounding values for one image, in patch order.

    ``raw`` holds attention mass (non-negative, sums to the kept-token
    count), ``normalized`` its min-max rescaling onto [0, 1]. ``perturbed``
    is filled in by :func:`perturb` and is the vector masking decisions rank
    by; it stays None until then. Grid shape is optional display metadata
    and never affects any computation.
    """

    raw: np.ndarray
    normalized: np.ndarray
    perturbed: np.ndarray | None = None
    noise_scale: float = 0.0
    rng_seed: int | None = None
    grid_rows: int | None = None
    grid_cols: int | None = None

    @property
    def n_patches(self) -> int:
        return self.raw.shape[0]


def grounding_map(
    text: TokenSequence,
    image: TokenSequence,
    filter_result: TextFilterResult,
    temperature: float = 1.0,
    *,
    grid_rows: int | None = None,
    grid_cols: int | None = None,
) -> GroundingMap:
    """Aggregate kept-token attention over patches into one map.

    Rows of the token-to-patch softmax are summed over the kept tokens only;
    dropped tokens contribute nothing. With no kept tokens at all (a mask of
    zeros built by hand) the map is identically zero.
    """
    if text.dim != image.dim:
        raise InputError(
            f"embedding width mismatch: text dim {text.dim} vs image dim {image.dim}"
        )
    if filter_result.mask.shape != (text.count,):
        raise InputError(
            f"filter mask covers {filter_result.mask.shape[0]} tokens, "
            f"text has {text.count}"
        )
    kept = np.flatnonzero(filter_result.mask)
    if kept.size == 0:
        raw = np.zeros(image.count)
    else:
        zt = l2_normalize_rows(text.embeddings)[kept]
        zi = l2_normalize_rows(image.embeddings)
        probs = row_softmax(zt @ zi.T, temperature)
        raw = probs.sum(axis=0)
    return GroundingMap(
        raw=raw,
        normalized=minmax_scale(raw),
        grid_rows=grid_rows,
        grid_cols=grid_cols,
    )


def perturb(gmap: GroundingMap, noise_scale: float, rng: Rng) -> GroundingMap:
    """Add uniform noise from [0, noise_scale) to the normalized map.

    Returns a new map with ``perturbed`` set; the input is untouched. A
    noise_scale of 0 reproduces the normalized map exactly, which is what
    makes artifact runs byte-for-byte repeatable when noise is switched off.
    The perturbed values may exceed 1; only their ordering matters.
    """
    if noise_scale < 0:
        raise ParameterError(f"noise_scale must be >= 0, got {noise_scale}")
    noise = uniform_vector(rng, gmap.n_patches, 0.0, noise_scale)
    return replace(
        gmap,
        perturbed=gmap.normalized + noise,
        noise_scale=float(noise_scale),
        rng_seed=rng.seed,
    )
