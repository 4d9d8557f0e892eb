"""Command line front end.

Four subcommands cover the artifact surface:

* ``plan``: run the pipeline on an embedding pair, write the filter scores,
  the grounding map, and the supervision plan.
* ``heatmap``: render a previously written grounding map and its hint set as
  ASCII PGM images using the image file's grid metadata.
* ``train``: fit the toy model, either on synthetic planted data or on an
  embedding pair, and write the step log plus a summary report; also hosts
  the finite-difference gradient check.
* ``sweep``: rerun a short training across values of one knob and tabulate
  planted-recovery precision and final loss.

Every text artifact opens with ``#`` header lines echoing the resolved
configuration and the rng algorithm, so a run can be reproduced from its
outputs alone. Exit codes: 0 ok, 2 file parse error, 3 bad input or
configuration, 4 missing metadata, 5 generation failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config_file, resolve_config
from .errors import (
    FormatError,
    GenerationError,
    InputError,
    MetadataError,
    ParameterError,
)
from .fileio import read_embedding_file, write_pgm
from .grounding import grounding_map, perturb
from .numerics import Rng
from .supervision import build_plan, draw_masking_ratio, plan_from_text, plan_to_text
from .textfilter import filter_text_tokens

_NOISE_STREAM, _RATIO_STREAM, _DATA_STREAM, _SWEEP_STREAM = 1, 2, 7, 9

GRADCHECK_THRESHOLD = 1e-3


def _header(command: str, cfg: RunConfig) -> list[str]:
    return [
        f"# segros {command}",
        "# " + cfg.header_line(),
        f"# rng_algorithm={Rng.algorithm}",
    ]


def _write_text(path: Path, lines: list[str]) -> None:
    path.write_text("\n".join(lines) + "\n")


def _flag_values(args: argparse.Namespace) -> dict[str, object]:
    """Only the knobs the user actually passed on the command line."""
    values: dict[str, object] = {}
    pairs = (
        ("temperature", args.tau),
        ("keep_ratio", args.rho),
        ("hint_ratio", args.eta),
        ("noise_scale", args.alpha),
        ("mask_lo", args.gamma_lo),
        ("mask_hi", args.gamma_hi),
        ("i2t_weight", args.lambda_),
        ("seed", args.seed),
        ("mode", args.mode),
    )
    for field, value in pairs:
        if value is not None:
            values[field] = value
    if args.drop_loss is not None:
        if args.drop_loss.lower() in ("none", "off"):
            values["drop_loss_ratio"] = None
        else:
            try:
                values["drop_loss_ratio"] = float(args.drop_loss)
            except ValueError as exc:
                raise ParameterError(
                    f"--drop-loss must be a number or 'none', got {args.drop_loss!r}"
                ) from exc
    return values


def _resolve(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else None
    return resolve_config(file_values, _flag_values(args))


def _add_knob_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau", type=float, default=None, help="softmax temperature (default 1.0)")
    p.add_argument("--rho", type=float, default=None, help="kept fraction of content text tokens (default 0.4)")
    p.add_argument("--eta", type=float, default=None, help="hint fraction of patches (default 0.3)")
    p.add_argument("--alpha", type=float, default=None, help="grounding-map noise amplitude (default 0.5)")
    p.add_argument("--gamma-lo", type=float, default=None, help="masking ratio lower bound (default 0.7)")
    p.add_argument("--gamma-hi", type=float, default=None, help="masking ratio upper bound (default 1.0)")
    p.add_argument("--lambda", type=float, default=None, dest="lambda_", help="i2t loss weight (default 1.0)")
    p.add_argument("--drop-loss", type=str, default=None, help="restrict the loss to this fraction of most grounded masked patches, or 'none'")
    p.add_argument("--seed", type=int, default=None, help="base seed for all randomness (default 0)")
    p.add_argument("--mode", choices=("continuous", "discrete"), default=None, help="reconstruction objective (default continuous)")
    p.add_argument("--config", type=str, default=None, help="key=value config file; flags override it")


def _add_shape_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--samples", type=int, default=8, help="synthetic samples to cycle through")
    p.add_argument("--n-text", type=int, default=6, help="text tokens per synthetic sample")
    p.add_argument("--n-patches", type=int, default=16, help="image patches per synthetic sample")
    p.add_argument("--dim", type=int, default=12, help="embedding width (model and data)")
    p.add_argument("--planted-fraction", type=float, default=0.3, help="fraction of patches planted with a text correspondence")
    p.add_argument("--layers", type=int, default=2, help="transformer blocks")
    p.add_argument("--heads", type=int, default=2, help="attention heads")
    p.add_argument("--vocab", type=int, default=16, help="code vocabulary size")
    p.add_argument("--lr", type=float, default=0.1, help="gradient descent step size")
    p.add_argument("--steps", type=int, default=200, help="training steps")


def _load_pair(text_path: str, image_path: str):
    text_ef = read_embedding_file(text_path)
    image_ef = read_embedding_file(image_path)
    text = text_ef.to_token_sequence()
    image = image_ef.to_token_sequence()
    if text.dim != image.dim:
        raise InputError(
            f"embedding width mismatch: {text_path} has dim {text.dim}, "
            f"{image_path} has dim {image.dim}"
        )
    return text_ef, image_ef, text, image


def cmd_plan(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    _, image_ef, text, image = _load_pair(args.text_file, args.image_file)
    base = Rng(cfg.seed)
    filt = filter_text_tokens(text, image, cfg.keep_ratio, cfg.temperature)
    gmap = grounding_map(
        text,
        image,
        filt,
        cfg.temperature,
        grid_rows=image_ef.grid_rows,
        grid_cols=image_ef.grid_cols,
    )
    gmap = perturb(gmap, cfg.noise_scale, base.split(_NOISE_STREAM))
    gamma = draw_masking_ratio(base.split(_RATIO_STREAM), cfg.mask_lo, cfg.mask_hi)
    plan = build_plan(gmap, gamma, cfg.hint_ratio, cfg.drop_loss_ratio)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    lines = _header("plan", cfg)
    lines.append("# columns: token special intra inter unified kept")
    for i in range(text.count):
        lines.append(
            f"{i}\t{int(text.special_flags[i])}\t{float(filt.intra_scores[i])!r}"
            f"\t{float(filt.inter_scores[i])!r}\t{float(filt.unified_scores[i])!r}\t{int(filt.mask[i])}"
        )
    _write_text(out / "textfilter.txt", lines)

    lines = _header("plan", cfg)
    lines.append("# columns: patch raw normalized perturbed")
    for i in range(image.count):
        lines.append(
            f"{i}\t{float(gmap.raw[i])!r}\t{float(gmap.normalized[i])!r}"
            f"\t{float(gmap.perturbed[i])!r}"
        )
    _write_text(out / "grounding.txt", lines)

    lines = _header("plan", cfg)
    lines.append(plan_to_text(plan, cfg.seed).rstrip("\n"))
    _write_text(out / "plan.txt", lines)

    print(f"wrote {out / 'textfilter.txt'}")
    print(f"wrote {out / 'grounding.txt'}")
    print(f"wrote {out / 'plan.txt'}")
    print(
        f"kept {filt.keep_count} of {text.count} tokens; "
        f"masked {plan.masked_indices.size}/{plan.n_patches} patches, "
        f"{plan.hint_indices.size} hints"
    )
    return 0


def _read_grounding_artifact(path: Path) -> np.ndarray:
    if not path.exists():
        raise InputError(f"{path} not found; run 'segros plan' first")
    normalized = []
    for line in path.read_text().splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split("\t")
        if len(parts) != 4:
            raise FormatError(f"{path}: expected 4 columns, got {len(parts)}")
        normalized.append(float(parts[2]))
    if not normalized:
        raise FormatError(f"{path}: no data rows")
    return np.array(normalized)


def cmd_heatmap(args: argparse.Namespace) -> int:
    image_ef = read_embedding_file(args.image_file)
    if image_ef.grid_rows is None:
        raise MetadataError(
            f"{args.image_file} carries no grid metadata; heatmap rendering needs it"
        )
    artifacts = Path(args.artifacts)
    normalized = _read_grounding_artifact(artifacts / "grounding.txt")
    plan_path = artifacts / "plan.txt"
    if not plan_path.exists():
        raise InputError(f"{plan_path} not found; run 'segros plan' first")
    plan, _ = plan_from_text(plan_path.read_text())
    n = image_ef.n_tokens
    if normalized.shape[0] != n or plan.n_patches != n:
        raise InputError(
            f"artifacts cover {normalized.shape[0]} patches (plan {plan.n_patches}), "
            f"image file has {n}"
        )
    rows, cols = image_ef.grid_rows, image_ef.grid_cols
    pixels = np.rint(np.clip(normalized, 0.0, 1.0) * 255).astype(np.int64)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    map_path = Path(f"{out}.map.pgm")
    hint_path = Path(f"{out}.hint.pgm")
    write_pgm(map_path, pixels.reshape(rows, cols))
    hint_pixels = np.zeros(n, dtype=np.int64)
    hint_pixels[plan.hint_indices] = 255
    write_pgm(hint_path, hint_pixels.reshape(rows, cols))
    print(f"wrote {map_path}")
    print(f"wrote {hint_path}")
    return 0


def _model_config(args: argparse.Namespace, cfg: RunConfig):
    from .toymodel import ToyModelConfig

    return ToyModelConfig(
        dim=args.dim,
        n_layers=args.layers,
        n_heads=args.heads,
        vocab_size=args.vocab,
        mode=cfg.mode,
        seed=cfg.seed,
    )


def _synthetic_batch(args: argparse.Namespace, cfg: RunConfig):
    from .toymodel import generate_batch

    return generate_batch(
        Rng(cfg.seed).split(_DATA_STREAM),
        args.samples,
        args.n_text,
        args.n_patches,
        args.dim,
        args.planted_fraction,
    )


def _file_batch(args: argparse.Namespace):
    from .toymodel import SyntheticSample

    _, image_ef, text, image = _load_pair(args.text_file, args.image_file)
    return [
        SyntheticSample(
            text=text, image=image, planted_map=None, discrete_codes=image_ef.codes
        )
    ]


def cmd_train(args: argparse.Namespace) -> int:
    from .toymodel import (
        finite_diff_gradient_check,
        generate_synthetic,
        grounding_precision,
        masked_reconstruction_error,
        run_training,
        ToyModel,
    )

    cfg = _resolve(args)
    if args.gradcheck:
        sample = generate_synthetic(
            Rng(cfg.seed).split(_DATA_STREAM),
            args.n_text,
            args.n_patches,
            args.dim,
            args.planted_fraction,
        )
        model = ToyModel(_model_config(args, cfg))
        err = finite_diff_gradient_check(model, sample, cfg, seed=cfg.seed)
        ok = err < GRADCHECK_THRESHOLD
        print(
            f"gradcheck mode={cfg.mode} lambda={cfg.i2t_weight!r} "
            f"max_rel_err={err:.3e} {'ok' if ok else 'FAILED'}"
        )
        return 0 if ok else 1

    if args.synthetic:
        if args.text_file or args.image_file:
            raise ParameterError("--synthetic and embedding files are mutually exclusive")
        batch = _synthetic_batch(args, cfg)
    elif args.text_file and args.image_file:
        batch = _file_batch(args)
        if batch[0].image.dim != args.dim:
            # model width follows the data in file mode
            args.dim = batch[0].image.dim
    else:
        raise ParameterError("provide a text and image embedding file, or --synthetic")

    run = run_training(batch, cfg, _model_config(args, cfg), args.steps, lr=args.lr)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_lines = [
        f"{i}\t{r.reconstruction!r}\t{r.i2t!r}\t{r.total!r}"
        for i, r in enumerate(run.reports)
    ]
    _write_text(out / "train.log", log_lines)

    lines = _header("train", cfg)
    lines.append(f"steps={args.steps}")
    lines.append(f"samples={len(batch)}")
    lines.append(f"parameter_count={run.model.parameter_count()}")
    lines.append(f"first_reconstruction={run.reports[0].reconstruction!r}")
    lines.append(f"final_reconstruction={run.reports[-1].reconstruction!r}")
    lines.append(f"first_total={run.reports[0].total!r}")
    lines.append(f"final_total={run.reports[-1].total!r}")
    if any(s.planted_map is not None for s in batch):
        lines.append(f"grounding_precision={grounding_precision(batch, cfg)!r}")
    grounded_err = masked_reconstruction_error(run.model, batch, cfg)
    for key, value in grounded_err.items():
        lines.append(f"{key}={value!r}")
    if args.compare_random:
        random_run = run_training(
            batch, cfg, _model_config(args, cfg), args.steps, lr=args.lr, random_masking=True
        )
        random_err = masked_reconstruction_error(random_run.model, batch, cfg)
        lines.append(f"random_final_reconstruction={random_run.reports[-1].reconstruction!r}")
        for key, value in random_err.items():
            lines.append(f"random_{key}={value!r}")
        shown = "planted_masked_error" if "planted_masked_error" in grounded_err else "masked_error"
        print(
            f"masked-target error ({shown}): grounded={grounded_err[shown]:.6f} "
            f"random={random_err[shown]:.6f}"
        )
    _write_text(out / "report.txt", lines)
    print(f"wrote {out / 'train.log'}")
    print(f"wrote {out / 'report.txt'}")
    print(
        f"final losses: reconstruction={run.reports[-1].reconstruction:.6f} "
        f"i2t={run.reports[-1].i2t:.6f} total={run.reports[-1].total:.6f}"
    )
    return 0


_SWEEP_FIELDS = {"eta": "hint_ratio", "alpha": "noise_scale", "rho": "keep_ratio"}


def cmd_sweep(args: argparse.Namespace) -> int:
    from .toymodel import grounding_precision, run_training

    cfg = _resolve(args)
    field = _SWEEP_FIELDS[args.parameter]
    raw = [tok.strip() for tok in args.values.split(",") if tok.strip()]
    try:
        parsed = [float(tok) for tok in raw]
    except ValueError as exc:
        raise ParameterError(f"sweep values must be numbers: {args.values!r}") from exc
    values: list[float] = []
    for v in parsed:
        if v in values:
            print(f"segros: warning: duplicate sweep value {v!r} ignored", file=sys.stderr)
            continue
        values.append(v)
    if len(values) < 2:
        raise ParameterError(f"sweep needs at least 2 distinct values, got {len(values)}")
    for v in values:
        replace(cfg, **{field: v}).validate()

    batch = _synthetic_batch(args, cfg)
    rows = []
    for v in values:
        knobs = replace(cfg, **{field: v})
        precision = grounding_precision(
            batch, knobs, noise_rng=Rng(cfg.seed).split(_SWEEP_STREAM)
        )
        run = run_training(batch, knobs, _model_config(args, knobs), args.steps, lr=args.lr)
        rows.append((v, precision, run.reports[-1].reconstruction, run.reports[-1].total))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = _header("sweep", cfg)
    lines.append(f"# parameter={args.parameter}")
    lines.append("# columns: value precision final_reconstruction final_total")
    for v, precision, recon, total in rows:
        lines.append(f"{v!r}\t{precision!r}\t{recon!r}\t{total!r}")
    _write_text(out / "sweep.tsv", lines)
    print(f"wrote {out / 'sweep.tsv'}")
    for v, precision, recon, _ in rows:
        print(f"{args.parameter}={v}: precision={precision:.4f} final={recon:.6f}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segros",
        description="Grounded supervision plans for masked multimodal training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="run the pipeline on an embedding pair and write artifacts")
    p.add_argument("text_file")
    p.add_argument("image_file")
    p.add_argument("--out", type=str, default=".", help="artifact directory")
    _add_knob_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("heatmap", help="render grounding and hint maps as PGM images")
    p.add_argument("image_file")
    p.add_argument("artifacts", help="directory holding plan artifacts")
    p.add_argument("--out", type=str, default="heatmap", help="output path prefix")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("train", help="train the toy model end to end")
    p.add_argument("text_file", nargs="?", default=None)
    p.add_argument("image_file", nargs="?", default=None)
    p.add_argument("--synthetic", action="store_true", help="use generated planted data")
    p.add_argument("--compare-random", action="store_true", help="also train with random masking at matched seeds")
    p.add_argument("--gradcheck", action="store_true", help="finite-difference gradient check instead of training")
    p.add_argument("--out", type=str, default=".", help="artifact directory")
    _add_knob_flags(p)
    _add_shape_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="short training across values of one knob")
    p.add_argument("--parameter", choices=sorted(_SWEEP_FIELDS), required=True)
    p.add_argument("--values", type=str, required=True, help="comma-separated values")
    p.add_argument("--out", type=str, default=".", help="artifact directory")
    _add_knob_flags(p)
    _add_shape_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"segros: error: {exc}", file=sys.stderr)
        return 2
    except MetadataError as exc:
        print(f"segros: error: {exc}", file=sys.stderr)
        return 4
    except (InputError, ParameterError) as exc:
        print(f"segros: error: {exc}", file=sys.stderr)
        return 3
    except GenerationError as exc:
        print(f"segros: error: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
