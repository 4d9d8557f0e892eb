"""On-disk formats: the embedding container and plain-text PGM heatmaps.

An embedding file is an 8-byte magic, an ASCII key=value header terminated
by an ``end`` line, and a row-major little-endian float32 payload. The
header always carries ``n_tokens`` and ``dim``; it may carry ``special``
(flagged token indices), ``grid`` (rows and cols for display), and ``codes``
(one discrete code per token). Writing uses a canonical key order, so a
read-write round trip reproduces the bytes exactly.

Heatmaps are written as P2 (ASCII) PGM at maxval 255 so they are mergeable,
diffable, and viewable anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError
from .textfilter import TokenSequence

__all__ = [
    "EmbeddingFile",
    "MAGIC",
    "read_embedding_file",
    "write_embedding_file",
    "write_pgm",
    "read_pgm",
]

MAGIC = b"SGRSEMB1"


@dataclass
class EmbeddingFile:
    """In-memory view of one embedding container.

    ``embeddings`` is float64 (n_tokens, dim); the payload on disk is
    float32, so values survive a round trip bit for bit.
    """

    embeddings: np.ndarray
    special_indices: list[int]
    grid_rows: int | None = None
    grid_cols: int | None = None
    codes: np.ndarray | None = None

    def __post_init__(self) -> None:
        emb = np.asarray(self.embeddings, dtype=np.float64)
        if emb.ndim != 2 or emb.shape[0] == 0 or emb.shape[1] == 0:
            raise InputError(f"embeddings must be a non-empty 2-D matrix, got {emb.shape}")
        self.embeddings = emb
        n = emb.shape[0]
        specials = sorted(int(i) for i in self.special_indices)
        if specials and (specials[0] < 0 or specials[-1] >= n):
            raise InputError(f"special indices out of range for {n} tokens")
        if len(set(specials)) != len(specials):
            raise InputError("special indices contain duplicates")
        self.special_indices = specials
        if (self.grid_rows is None) != (self.grid_cols is None):
            raise InputError("grid rows and cols must be given together")
        if self.grid_rows is not None and self.grid_rows * self.grid_cols != n:
            raise InputError(
                f"grid {self.grid_rows}x{self.grid_cols} does not cover {n} tokens"
            )
        if self.codes is not None:
            codes = np.asarray(self.codes, dtype=np.int64).reshape(-1)
            if codes.shape[0] != n:
                raise InputError(f"{codes.shape[0]} codes for {n} tokens")
            if codes.size and codes.min() < 0:
                raise InputError("codes must be non-negative")
            self.codes = codes

    @property
    def n_tokens(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def to_token_sequence(self) -> TokenSequence:
        flags = np.zeros(self.n_tokens, dtype=bool)
        flags[self.special_indices] = True
        return TokenSequence(self.embeddings.copy(), flags)


def write_embedding_file(path: str | Path, ef: EmbeddingFile) -> None:
    """Serialize in canonical key order; see the module docstring for layout."""
    lines = [f"n_tokens={ef.n_tokens}", f"dim={ef.dim}"]
    if ef.special_indices:
        lines.append("special=" + " ".join(str(i) for i in ef.special_indices))
    if ef.grid_rows is not None:
        lines.append(f"grid={ef.grid_rows} {ef.grid_cols}")
    if ef.codes is not None:
        lines.append("codes=" + " ".join(str(c) for c in ef.codes))
    lines.append("end")
    header = "\n".join(lines) + "\n"
    payload = np.ascontiguousarray(ef.embeddings, dtype="<f4").tobytes()
    Path(path).write_bytes(MAGIC + header.encode("ascii") + payload)


def _parse_int(value: str, what: str) -> int:
    try:
        return int(value)
    except ValueError as exc:
        raise FormatError(f"{what} is not an integer: {value!r}") from exc


def read_embedding_file(path: str | Path) -> EmbeddingFile:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise FormatError(
            f"{path}: bad magic {data[:len(MAGIC)]!r}, expected {MAGIC!r}"
        )
    offset = len(MAGIC)
    fields: dict[str, str] = {}
    while True:
        newline = data.find(b"\n", offset)
        if newline < 0:
            raise FormatError(f"{path}: header not terminated by an 'end' line")
        try:
            line = data[offset:newline].decode("ascii")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: header is not ASCII at byte {offset}") from exc
        offset = newline + 1
        if line == "end":
            break
        if "=" not in line:
            raise FormatError(f"{path}: header line {line!r} is not key=value")
        key, _, value = line.partition("=")
        if key in fields:
            raise FormatError(f"{path}: duplicate header key {key!r}")
        fields[key] = value
    for required in ("n_tokens", "dim"):
        if required not in fields:
            raise FormatError(f"{path}: header is missing {required!r}")
    n = _parse_int(fields.pop("n_tokens"), "n_tokens")
    dim = _parse_int(fields.pop("dim"), "dim")
    if n < 1 or dim < 1:
        raise FormatError(f"{path}: n_tokens and dim must be positive, got {n}, {dim}")
    specials = [
        _parse_int(tok, "special index") for tok in fields.pop("special", "").split()
    ]
    grid_rows = grid_cols = None
    if "grid" in fields:
        parts = fields.pop("grid").split()
        if len(parts) != 2:
            raise FormatError(f"{path}: grid must be 'rows cols'")
        grid_rows = _parse_int(parts[0], "grid rows")
        grid_cols = _parse_int(parts[1], "grid cols")
        if grid_rows < 1 or grid_cols < 1 or grid_rows * grid_cols != n:
            raise FormatError(
                f"{path}: grid {grid_rows}x{grid_cols} does not cover {n} tokens"
            )
    codes = None
    if "codes" in fields:
        codes = [_parse_int(tok, "code") for tok in fields.pop("codes").split()]
        if len(codes) != n:
            raise FormatError(f"{path}: {len(codes)} codes for {n} tokens")
        if codes and min(codes) < 0:
            raise FormatError(f"{path}: codes must be non-negative")
    if fields:
        raise FormatError(f"{path}: unknown header keys {sorted(fields)}")
    expected = n * dim * 4
    actual = len(data) - offset
    if actual < expected:
        raise FormatError(
            f"{path}: truncated payload at byte offset {offset}: "
            f"expected {expected} bytes, found {actual}"
        )
    if actual > expected:
        raise FormatError(
            f"{path}: {actual - expected} trailing bytes after the payload"
        )
    emb = np.frombuffer(data, dtype="<f4", count=n * dim, offset=offset)
    emb = emb.reshape(n, dim).astype(np.float64)
    try:
        return EmbeddingFile(
            embeddings=emb,
            special_indices=specials,
            grid_rows=grid_rows,
            grid_cols=grid_cols,
            codes=np.asarray(codes, dtype=np.int64) if codes is not None else None,
        )
    except InputError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_pgm(path: str | Path, pixels: np.ndarray) -> None:
    """Write one grayscale image as ASCII PGM (P2, maxval 255)."""
    arr = np.asarray(pixels)
    if arr.ndim != 2 or arr.size == 0:
        raise InputError(f"pixels must be a non-empty 2-D array, got shape {arr.shape}")
    if arr.min() < 0 or arr.max() > 255:
        raise InputError("pixel values must lie in [0, 255]")
    rows, cols = arr.shape
    lines = ["P2", f"{cols} {rows}", "255"]
    lines.extend(" ".join(str(int(v)) for v in row) for row in arr)
    Path(path).write_text("\n".join(lines) + "\n")


def read_pgm(path: str | Path) -> np.ndarray:
    """Parse an ASCII PGM back into an int array (rows, cols)."""
    tokens: list[str] = []
    for line in Path(path).read_text().splitlines():
        stripped = line.split("#", 1)[0]
        tokens.extend(stripped.split())
    if not tokens or tokens[0] != "P2":
        raise FormatError(f"{path}: not an ASCII PGM")
    if len(tokens) < 4:
        raise FormatError(f"{path}: incomplete PGM header")
    cols, rows, maxval = (int(t) for t in tokens[1:4])
    values = [int(t) for t in tokens[4:]]
    if len(values) != rows * cols:
        raise FormatError(
            f"{path}: expected {rows * cols} pixels, found {len(values)}"
        )
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    return np.array(values, dtype=np.int64).reshape(rows, cols)
