"""One-step pipeline wiring, a plain-GD training loop, and verification hooks.

Each step runs the full supervision pipeline on one sample: filter the text,
build and perturb the grounding map, draw a masking ratio, carve the plan,
corrupt the patches, and optimize reconstruction plus the weighted i2t
objective with one fixed-step gradient-descent update.

Two independent draw streams are derived from the seed, one for map noise
and one for masking ratios, so a grounded run and a random-masking run at
the same seed see identical ratio schedules and differ only in which patches
the ordering selects. Verification hooks cover planted-correspondence
recovery and a central-difference check of every gradient path.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import torch

from ..config import RunConfig
from ..errors import InputError, ParameterError
from ..grounding import grounding_map, perturb
from ..numerics import Rng, top_k_indices
from ..supervision import (
    SupervisionPlan,
    build_attention_mask,
    build_plan,
    corrupt,
    draw_masking_ratio,
    extract_hints,
)
from ..textfilter import filter_text_tokens
from .losses import LossReport, masked_mse, masked_nll
from .model import ToyModel, ToyModelConfig
from .synthetic import SyntheticSample

__all__ = [
    "TrainingRun",
    "train_step",
    "run_training",
    "grounding_precision",
    "masked_reconstruction_error",
    "finite_diff_gradient_check",
]

_NOISE_STREAM, _RATIO_STREAM = 1, 2
_QUESTION_CODE = 0


@dataclass
class TrainingRun:
    """A trained model plus the per-step reports and plans that produced it."""

    model: ToyModel
    reports: list[LossReport]
    plans: list[SupervisionPlan]


def train_step(
    model: ToyModel,
    sample: SyntheticSample,
    knobs: RunConfig,
    *,
    noise_rng: Rng,
    ratio_rng: Rng,
    lr: float,
    random_masking: bool = False,
) -> tuple[LossReport, SupervisionPlan]:
    """Run the pipeline on one sample and take one gradient-descent step.

    With ``random_masking`` the perturbed grounding map is replaced by pure
    uniform noise before the plan is carved; everything else, including the
    ratio schedule, is untouched. Returns the loss report and the plan.
    """
    text, image = sample.text, sample.image
    filt = filter_text_tokens(text, image, knobs.keep_ratio, knobs.temperature)
    gmap = grounding_map(text, image, filt, knobs.temperature)
    gmap = perturb(gmap, knobs.noise_scale, noise_rng)
    if random_masking:
        gmap = replace(gmap, perturbed=noise_rng.uniform(image.count))
    ratio = draw_masking_ratio(ratio_rng, knobs.mask_lo, knobs.mask_hi)
    plan = build_plan(gmap, ratio, knobs.hint_ratio, knobs.drop_loss_ratio)
    with torch.no_grad():
        placeholder = model.mask_embedding.detach().numpy().copy()
    corrupted = corrupt(image, plan, placeholder)
    hints = extract_hints(image, plan)
    attn = build_attention_mask(hints.count, text.count, image.count)
    pred = model.reconstruct(hints, text, corrupted, attn)
    if model.cfg.mode == "continuous":
        recon, per_position = masked_mse(pred, image.embeddings, plan)
    else:
        if sample.discrete_codes is None:
            raise InputError("discrete mode needs per-patch codes")
        recon, per_position = masked_nll(pred, sample.discrete_codes, plan)
    if sample.discrete_codes is not None:
        answer = np.asarray(sample.discrete_codes)
        i2t = model.i2t_nll(image, [_QUESTION_CODE], answer).mean()
    elif knobs.i2t_weight != 0.0:
        raise InputError(
            "sample has no codes for the i2t objective; provide codes or set lambda to 0"
        )
    else:
        i2t = torch.zeros((), dtype=torch.float64)
    total = recon + knobs.i2t_weight * i2t
    model.zero_grad(set_to_none=True)
    total.backward()
    with torch.no_grad():
        for p in model.parameters():
            if p.grad is not None:
                p -= lr * p.grad
    report = LossReport(
        reconstruction=float(recon.detach()),
        i2t=float(i2t.detach()),
        total=float(total.detach()),
        per_position=per_position,
        i2t_weight=knobs.i2t_weight,
    )
    return report, plan


def run_training(
    samples: list[SyntheticSample],
    knobs: RunConfig,
    model_cfg: ToyModelConfig,
    steps: int,
    lr: float = 0.1,
    random_masking: bool = False,
) -> TrainingRun:
    """Cycle through the samples for the given number of steps.

    Single-threaded torch so repeated runs at the same seed are bit
    identical. The model seed comes from ``model_cfg``, all pipeline
    randomness from ``knobs.seed``.
    """
    if steps < 1:
        raise ParameterError(f"steps must be >= 1, got {steps}")
    if not samples:
        raise InputError("at least one sample is required")
    torch.set_num_threads(1)
    model = ToyModel(model_cfg)
    base = Rng(knobs.seed)
    noise_rng = base.split(_NOISE_STREAM)
    ratio_rng = base.split(_RATIO_STREAM)
    reports: list[LossReport] = []
    plans: list[SupervisionPlan] = []
    for step in range(steps):
        sample = samples[step % len(samples)]
        report, plan = train_step(
            model,
            sample,
            knobs,
            noise_rng=noise_rng,
            ratio_rng=ratio_rng,
            lr=lr,
            random_masking=random_masking,
        )
        reports.append(report)
        plans.append(plan)
    return TrainingRun(model=model, reports=reports, plans=plans)


def grounding_precision(
    samples: list[SyntheticSample],
    knobs: RunConfig,
    noise_rng: Rng | None = None,
) -> float:
    """Fraction of the top-|planted| map entries that are truly planted.

    Ranks by the clean normalized map, or by a perturbed map when a noise
    stream is supplied (one draw per sample). Averaged over the samples that
    carry planted truth.
    """
    scores = []
    for sample in samples:
        if sample.planted_map is None:
            continue
        filt = filter_text_tokens(sample.text, sample.image, knobs.keep_ratio, knobs.temperature)
        gmap = grounding_map(sample.text, sample.image, filt, knobs.temperature)
        values = gmap.normalized
        if noise_rng is not None and knobs.noise_scale > 0:
            values = perturb(gmap, knobs.noise_scale, noise_rng).perturbed
        k = int(sample.planted_map.sum())
        top = top_k_indices(values, k)
        scores.append(float(sample.planted_map[top].sum()) / k)
    if not scores:
        raise InputError("no sample carries planted ground truth")
    return float(np.mean(scores))


def masked_reconstruction_error(
    model: ToyModel,
    samples: list[SyntheticSample],
    knobs: RunConfig,
    eval_mask_ratio: float = 0.85,
) -> dict[str, float]:
    """Deterministic post-training evaluation of reconstruction quality.

    Plans are carved from the clean normalized map (no noise) at one fixed
    masking ratio, so the numbers are comparable across runs and in
    particular between grounded and random-masking training. Returns the
    mean per-target error under key ``masked_error``, plus
    ``planted_masked_error`` restricted to planted targets when any sample
    carries planted truth.
    """
    errors: list[float] = []
    planted_errors: list[float] = []
    with torch.no_grad():
        placeholder = model.mask_embedding.detach().numpy().copy()
    for sample in samples:
        text, image = sample.text, sample.image
        filt = filter_text_tokens(text, image, knobs.keep_ratio, knobs.temperature)
        gmap = grounding_map(text, image, filt, knobs.temperature)
        gmap = replace(gmap, perturbed=gmap.normalized)
        plan = build_plan(gmap, eval_mask_ratio, knobs.hint_ratio, None)
        corrupted = corrupt(image, plan, placeholder)
        hints = extract_hints(image, plan)
        attn = build_attention_mask(hints.count, text.count, image.count)
        with torch.no_grad():
            pred = model.reconstruct(hints, text, corrupted, attn)
            if model.cfg.mode == "continuous":
                _, per_position = masked_mse(pred, image.embeddings, plan)
            else:
                _, per_position = masked_nll(pred, sample.discrete_codes, plan)
        for t in plan.loss_target_indices:
            errors.append(float(per_position[t]))
            if sample.planted_map is not None and sample.planted_map[t]:
                planted_errors.append(float(per_position[t]))
    out = {"masked_error": float(np.mean(errors))}
    if planted_errors:
        out["planted_masked_error"] = float(np.mean(planted_errors))
    return out


def finite_diff_gradient_check(
    model: ToyModel,
    sample: SyntheticSample,
    knobs: RunConfig,
    *,
    n_coords: int = 100,
    step: float = 1e-4,
    seed: int = 0,
) -> float:
    """Central-difference check of the full objective's gradient.

    The pipeline runs once to freeze a plan; the losses then become a pure
    function of the parameters. A seeded subset of coordinates is perturbed
    by +-step and the numerical slope compared against autograd. Returns the
    maximum relative error over the subset, where relative error is
    |a - n| / max(|a|, |n|, 1e-6).
    """
    if model.parameter_count() > 5000:
        raise ParameterError(
            f"gradient check is meant for models up to 5000 parameters, "
            f"got {model.parameter_count()}"
        )
    torch.set_num_threads(1)
    base = Rng(seed)
    text, image = sample.text, sample.image
    filt = filter_text_tokens(text, image, knobs.keep_ratio, knobs.temperature)
    gmap = grounding_map(text, image, filt, knobs.temperature)
    gmap = perturb(gmap, knobs.noise_scale, base.split(_NOISE_STREAM))
    ratio = draw_masking_ratio(base.split(_RATIO_STREAM), knobs.mask_lo, knobs.mask_hi)
    plan = build_plan(gmap, ratio, knobs.hint_ratio, knobs.drop_loss_ratio)
    hints = extract_hints(image, plan)
    attn = build_attention_mask(hints.count, text.count, image.count)
    if sample.discrete_codes is None:
        raise InputError("gradient check needs a sample with codes")
    answer = np.asarray(sample.discrete_codes)

    def objective() -> torch.Tensor:
        # corruption is rebuilt inside so the placeholder row always reflects
        # the current parameter value
        with torch.no_grad():
            placeholder = model.mask_embedding.detach().numpy().copy()
        corrupted = corrupt(image, plan, placeholder)
        pred = model.reconstruct(hints, text, corrupted, attn)
        if model.cfg.mode == "continuous":
            recon, _ = masked_mse(pred, image.embeddings, plan)
        else:
            recon, _ = masked_nll(pred, sample.discrete_codes, plan)
        i2t = model.i2t_nll(image, [_QUESTION_CODE], answer).mean()
        return recon + knobs.i2t_weight * i2t

    model.zero_grad(set_to_none=True)
    objective().backward()
    params = list(model.parameters())
    analytic = np.concatenate(
        [
            (p.grad if p.grad is not None else torch.zeros_like(p)).detach().numpy().ravel()
            for p in params
        ]
    )
    sizes = [p.numel() for p in params]
    offsets = np.cumsum([0] + sizes)
    total = int(offsets[-1])
    coords = base.split(3).permutation(total)[: min(n_coords, total)]
    worst = 0.0
    for coord in coords:
        pi = int(np.searchsorted(offsets, coord, side="right") - 1)
        local = int(coord - offsets[pi])
        flat = params[pi].data.view(-1)
        original = float(flat[local])
        with torch.no_grad():
            flat[local] = original + step
            f_plus = float(objective())
            flat[local] = original - step
            f_minus = float(objective())
            flat[local] = original
        numeric = (f_plus - f_minus) / (2.0 * step)
        a = float(analytic[coord])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
        worst = max(worst, rel)
    return worst
