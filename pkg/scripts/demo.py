#!/usr/bin/env python3
"""Drive the whole pipeline end to end on one synthetic pair.

Generates embedding files, carves a supervision plan, renders the heatmaps,
then trains the toy model twice (grounded and random masking) and prints the
masked-target comparison. Everything goes through the same command-line
entry points a user would call.
"""

import argparse
from pathlib import Path

from segros.cli import main as segros

MAKE = Path(__file__).resolve().parent / "make_embeddings.py"


def run(argv: list[str]) -> None:
    print(f"$ segros {' '.join(argv)}")
    code = segros(argv)
    if code != 0:
        raise SystemExit(code)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo_run", help="working directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--steps", type=int, default=200)
    args = parser.parse_args(argv)

    out = Path(args.out)
    data = out / "data"
    import make_embeddings

    make_embeddings.main(["--out", str(data), "--seed", str(args.seed)])

    text, image = str(data / "text.emb"), str(data / "image.emb")
    seed = str(args.seed)
    run(["plan", text, image, "--seed", seed, "--out", str(out / "artifacts")])
    run(["heatmap", image, str(out / "artifacts"), "--out", str(out / "heatmap")])
    run(
        [
            "train", "--synthetic", "--steps", str(args.steps), "--seed", seed,
            "--compare-random", "--out", str(out / "train"),
        ]
    )
    print(f"artifacts under {out}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
