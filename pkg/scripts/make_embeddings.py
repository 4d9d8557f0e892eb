#!/usr/bin/env python3
"""Write a synthetic text/image embedding pair to disk.

The pair carries planted correspondences, a patch grid, and discrete codes,
so the resulting files exercise every optional field of the embedding format
and can drive `segros plan`, `segros heatmap`, and `segros train` directly.
"""

import argparse
from pathlib import Path

import numpy as np

from segros.fileio import EmbeddingFile, write_embedding_file
from segros.numerics import Rng
from segros.toymodel.synthetic import generate_synthetic


def grid_shape(n: int) -> tuple[int, int]:
    """Most square rows x cols factorisation of n."""
    rows = int(np.sqrt(n))
    while n % rows:
        rows -= 1
    return rows, n // rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data", help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--n-text", type=int, default=6)
    parser.add_argument("--n-patches", type=int, default=16)
    parser.add_argument("--dim", type=int, default=12)
    parser.add_argument("--planted-fraction", type=float, default=0.3)
    args = parser.parse_args(argv)

    sample = generate_synthetic(
        Rng(args.seed), args.n_text, args.n_patches, args.dim, args.planted_fraction
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, cols = grid_shape(args.n_patches)

    write_embedding_file(
        out / "text.emb",
        EmbeddingFile(
            embeddings=sample.text.embeddings,
            special_indices=np.flatnonzero(sample.text.special_flags).tolist(),
        ),
    )
    write_embedding_file(
        out / "image.emb",
        EmbeddingFile(
            embeddings=sample.image.embeddings,
            special_indices=[],
            grid_rows=rows,
            grid_cols=cols,
            codes=sample.discrete_codes,
        ),
    )
    planted = np.flatnonzero(sample.planted_map).tolist()
    print(f"wrote {out / 'text.emb'} ({args.n_text} tokens, dim {args.dim})")
    print(f"wrote {out / 'image.emb'} ({args.n_patches} patches, grid {rows}x{cols})")
    print(f"planted patches: {planted}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
