"""Semantically grounded supervision for masked multimodal training.

The pipeline turns a text/image embedding pair into a supervision plan:
filter the text tokens down to the discriminative ones, aggregate their
cross-attention into a per-patch grounding map, perturb it, and carve the
patches into hint / seen / masked sets under a three-block attention layout.
A desk-scale transformer exercises the whole construction end to end on
synthetic data with planted correspondences.
"""

from .config import RunConfig
from .errors import (
    FormatError,
    GenerationError,
    InputError,
    MetadataError,
    ParameterError,
    SegrosError,
)
from .grounding import GroundingMap, grounding_map, perturb
from .numerics import Rng
from .supervision import (
    AttentionMask,
    CorruptedSequence,
    SupervisionPlan,
    build_attention_mask,
    build_plan,
    corrupt,
    draw_masking_ratio,
    extract_hints,
    plan_from_text,
    plan_to_text,
)
from .textfilter import (
    TextFilterResult,
    TokenSequence,
    filter_text_tokens,
    inter_affinity_scores,
    intra_affinity_scores,
)

__version__ = "0.1.0"

__all__ = [
    "RunConfig",
    "SegrosError",
    "InputError",
    "ParameterError",
    "FormatError",
    "MetadataError",
    "GenerationError",
    "Rng",
    "TokenSequence",
    "TextFilterResult",
    "intra_affinity_scores",
    "inter_affinity_scores",
    "filter_text_tokens",
    "GroundingMap",
    "grounding_map",
    "perturb",
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
    "__version__",
]
