"""Masking plans, corrupted inputs, visual hints, and the attention layout.

The grounding map orders patches by how strongly the kept text tokens point
at them. A supervision plan carves that ordering into three index sets:

* ``hint_indices``: the most grounded patches, surfaced clean as visual hints;
* ``seen_indices``: the least grounded patches, left intact in the input;
* ``masked_indices``: the rest, replaced by a placeholder and reconstructed.

Hints are taken from the top of the ordering and the seen set from the
bottom, so the model is asked to restore exactly the semantically loaded
region while the background stays visible. The masking ratio is drawn fresh
per step from a narrow high range. Optionally the training loss is restricted
to the most grounded masked patches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, ParameterError
from .grounding import GroundingMap
from .numerics import Rng, bottom_k_indices, ceil_count, floor_count, top_k_indices
from .textfilter import TokenSequence

__all__ = [
    "SupervisionPlan",
    "CorruptedSequence",
    "AttentionMask",
    "draw_masking_ratio",
    "build_plan",
    "corrupt",
    "extract_hints",
    "build_attention_mask",
    "plan_to_text",
    "plan_from_text",
]


@dataclass
class SupervisionPlan:
    """Index bookkeeping for one masked-reconstruction step.

    ``seen_indices`` and ``masked_indices`` partition the patch range;
    ``hint_indices`` may overlap the masked set (the same patch can be shown
    clean as a hint and still be a reconstruction target). All index arrays
    are sorted ascending. ``loss_target_indices`` defaults to the full
    masked set and shrinks only under drop-loss.
    """

    n_patches: int
    hint_indices: np.ndarray
    seen_indices: np.ndarray
    masked_indices: np.ndarray
    loss_target_indices: np.ndarray
    mask_ratio: float
    hint_ratio: float

    def __post_init__(self) -> None:
        self.hint_indices = _index_array(self.hint_indices, self.n_patches, "hint")
        self.seen_indices = _index_array(self.seen_indices, self.n_patches, "seen")
        self.masked_indices = _index_array(self.masked_indices, self.n_patches, "masked")
        self.loss_target_indices = _index_array(
            self.loss_target_indices, self.n_patches, "loss_target"
        )
        union = np.union1d(self.seen_indices, self.masked_indices)
        if np.intersect1d(self.seen_indices, self.masked_indices).size:
            raise InputError("seen and masked sets overlap")
        if union.size != self.n_patches:
            raise InputError("seen and masked sets do not cover every patch")
        if np.setdiff1d(self.loss_target_indices, self.masked_indices).size:
            raise InputError("loss targets must be masked patches")


def _index_array(values, n: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64).reshape(-1)
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        raise InputError(f"{name} indices out of range for {n} patches")
    if np.unique(arr).size != arr.size:
        raise InputError(f"{name} indices contain duplicates")
    return np.sort(arr)


@dataclass
class CorruptedSequence:
    """Patch embeddings with masked rows replaced by the placeholder vector."""

    embeddings: np.ndarray
    mask_embedding: np.ndarray
    plan: SupervisionPlan


@dataclass
class AttentionMask:
    """Boolean layout over the concatenated [hints | text | corrupted] sequence.

    ``allowed[q, k]`` is True when query position q may attend to key
    position k. Hint queries are bidirectional within the hint block and see
    nothing else; text queries see every hint plus earlier-or-equal text
    positions; corrupted-patch queries see everything.
    """

    allowed: np.ndarray
    n_hint: int
    n_text: int
    n_img: int

    @property
    def total_len(self) -> int:
        return self.n_hint + self.n_text + self.n_img

    @property
    def segment_bounds(self) -> tuple[tuple[int, int], tuple[int, int], tuple[int, int]]:
        h, t = self.n_hint, self.n_text
        return (0, h), (h, h + t), (h + t, self.total_len)


def draw_masking_ratio(rng: Rng, lo: float = 0.7, hi: float = 1.0) -> float:
    """One masking ratio drawn uniformly from [lo, hi)."""
    if not 0.0 < lo < hi <= 1.0:
        raise ParameterError(f"masking ratio bounds must satisfy 0 < lo < hi <= 1, got [{lo}, {hi})")
    return rng.uniform_scalar(lo, hi)


def build_plan(
    gmap: GroundingMap,
    mask_ratio: float,
    hint_ratio: float = 0.3,
    drop_loss_ratio: float | None = None,
) -> SupervisionPlan:
    """Carve the perturbed grounding order into hint, seen, and masked sets.

    Counts: hints = max(1, floor(hint_ratio * n)); masked = floor(mask_ratio
    * n), capped at n - 1 so something is always left visible; seen is the
    complement. Hints come from the top of the perturbed ordering, the seen
    set from the bottom, ties to the lower index. With drop-loss, the loss
    targets shrink to the ceil(drop_loss_ratio * n) most grounded masked
    patches.
    """
    if gmap.perturbed is None:
        raise InputError("grounding map has no perturbed values; call perturb() first")
    if not 0.0 < mask_ratio < 1.0:
        raise ParameterError(f"mask_ratio must be in (0, 1), got {mask_ratio}")
    if not 0.0 < hint_ratio <= 1.0:
        raise ParameterError(f"hint_ratio must be in (0, 1], got {hint_ratio}")
    if drop_loss_ratio is not None and not 0.0 < drop_loss_ratio <= 1.0:
        raise ParameterError(f"drop_loss_ratio must be in (0, 1], got {drop_loss_ratio}")
    order_values = gmap.perturbed
    n = gmap.n_patches
    n_masked = min(n - 1, floor_count(mask_ratio, n))
    if n_masked == 0:
        raise ParameterError(
            f"mask_ratio {mask_ratio} masks no patches out of {n}; nothing to reconstruct"
        )
    n_hint = min(n, max(1, floor_count(hint_ratio, n)))
    hint = top_k_indices(order_values, n_hint)
    seen = bottom_k_indices(order_values, n - n_masked)
    masked = np.setdiff1d(np.arange(n), seen)
    if drop_loss_ratio is None:
        loss_target = masked
    else:
        n_drop = min(masked.size, max(1, ceil_count(drop_loss_ratio, n)))
        # rank the masked patches by grounding, keep the strongest
        order = np.argsort(-order_values[masked], kind="stable")
        loss_target = np.sort(masked[order[:n_drop]])
    return SupervisionPlan(
        n_patches=n,
        hint_indices=hint,
        seen_indices=seen,
        masked_indices=masked,
        loss_target_indices=loss_target,
        mask_ratio=float(mask_ratio),
        hint_ratio=float(hint_ratio),
    )


def corrupt(
    image: TokenSequence, plan: SupervisionPlan, mask_embedding: np.ndarray
) -> CorruptedSequence:
    """Replace the plan's masked rows with the placeholder embedding.

    The placeholder passed here is a data snapshot; the toy model substitutes
    its live trainable parameter at the same rows inside the forward pass so
    the placeholder keeps receiving gradient.
    """
    emb = np.asarray(mask_embedding, dtype=np.float64).reshape(-1)
    if image.count != plan.n_patches:
        raise InputError(
            f"plan covers {plan.n_patches} patches, image has {image.count}"
        )
    if emb.shape[0] != image.dim:
        raise InputError(
            f"mask embedding width {emb.shape[0]} does not match patch width {image.dim}"
        )
    out = image.embeddings.copy()
    out[plan.masked_indices] = emb
    return CorruptedSequence(embeddings=out, mask_embedding=emb, plan=plan)


def extract_hints(image: TokenSequence, plan: SupervisionPlan) -> TokenSequence:
    """Clean embeddings of the hint patches, in ascending patch order.

    The rows are copies of the uncorrupted input; positional identity is
    carried separately by ``plan.hint_indices``.
    """
    if image.count != plan.n_patches:
        raise InputError(
            f"plan covers {plan.n_patches} patches, image has {image.count}"
        )
    if plan.hint_indices.size == 0:
        raise InputError("plan has no hint patches")
    rows = image.embeddings[plan.hint_indices].copy()
    return TokenSequence(rows, np.zeros(rows.shape[0], dtype=bool))


def build_attention_mask(n_hint: int, n_text: int, n_img: int) -> AttentionMask:
    """Three-block layout mask; see :class:`AttentionMask` for the rules.

    Any block may be empty; the rules for the remaining blocks are unchanged
    (with no hints, text attends purely causally to itself).
    """
    for name, v in (("n_hint", n_hint), ("n_text", n_text), ("n_img", n_img)):
        if v < 0:
            raise ParameterError(f"{name} must be >= 0, got {v}")
    h, t, i = int(n_hint), int(n_text), int(n_img)
    total = h + t + i
    allowed = np.zeros((total, total), dtype=bool)
    allowed[:h, :h] = True
    allowed[h : h + t, :h] = True
    allowed[h : h + t, h : h + t] = np.tril(np.ones((t, t), dtype=bool))
    allowed[h + t :, :] = True
    return AttentionMask(allowed=allowed, n_hint=h, n_text=t, n_img=i)


def plan_to_text(plan: SupervisionPlan, seed: int) -> str:
    """Serialize one plan as key=value lines.

    Floats are written with repr so parsing restores them exactly. The
    loss_target line appears only when drop-loss restricted the targets.
    """
    lines = [
        f"n_patches={plan.n_patches}",
        f"gamma={plan.mask_ratio!r}",
        f"eta={plan.hint_ratio!r}",
        f"seed={int(seed)}",
        "hint=" + " ".join(str(i) for i in plan.hint_indices),
        "seen=" + " ".join(str(i) for i in plan.seen_indices),
        "masked=" + " ".join(str(i) for i in plan.masked_indices),
    ]
    if not np.array_equal(plan.loss_target_indices, plan.masked_indices):
        lines.append("loss_target=" + " ".join(str(i) for i in plan.loss_target_indices))
    return "\n".join(lines) + "\n"


def plan_from_text(text: str) -> tuple[SupervisionPlan, int]:
    """Parse :func:`plan_to_text` output back into a plan and its seed.

    Blank lines and lines starting with ``#`` are ignored, so plans embedded
    in commented artifacts parse unchanged.
    """
    fields: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise InputError(f"plan line {lineno} is not key=value: {line!r}")
        key, _, value = stripped.partition("=")
        fields[key.strip()] = value.strip()
    required = ("n_patches", "gamma", "eta", "seed", "hint", "seen", "masked")
    missing = [k for k in required if k not in fields]
    if missing:
        raise InputError(f"plan is missing fields: {', '.join(missing)}")

    def indices(key: str) -> np.ndarray:
        raw = fields[key]
        return np.array([int(tok) for tok in raw.split()] if raw else [], dtype=np.int64)

    masked = indices("masked")
    loss_target = indices("loss_target") if "loss_target" in fields else masked
    plan = SupervisionPlan(
        n_patches=int(fields["n_patches"]),
        hint_indices=indices("hint"),
        seen_indices=indices("seen"),
        masked_indices=masked,
        loss_target_indices=loss_target,
        mask_ratio=float(fields["gamma"]),
        hint_ratio=float(fields["eta"]),
    )
    return plan, int(fields["seed"])
