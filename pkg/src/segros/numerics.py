"""Dense numeric kernels shared by the whole pipeline.

Everything operates on plain numpy arrays: matrices are 2-D row-major, score
vectors are 1-D, and all math runs in float64. Selection helpers resolve ties
by ascending index so the same scores give the same index sets on every
platform. Randomness goes through :class:`Rng`, a thin wrapper around numpy's
counter-based Philox generator, which is keyed rather than state-seeded and
therefore reproducible bit for bit from a 64-bit seed.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InputError, ParameterError

__all__ = [
    "Rng",
    "l2_normalize_rows",
    "row_softmax",
    "minmax_scale",
    "top_k_indices",
    "bottom_k_indices",
    "uniform_vector",
    "floor_count",
    "ceil_count",
]

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _mix64(x: int) -> int:
    # splitmix64 finalizer; enough bit diffusion that nearby keys decorrelate
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class Rng:
    """Seeded stream of reproducible draws.

    Backed by ``np.random.Philox``, so identical seeds give bit-identical
    streams regardless of platform or process history. The algorithm name is
    exposed as a class attribute so output artifacts can record how their
    randomness was produced.
    """

    algorithm = "philox4x64"

    def __init__(self, seed: int) -> None:
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed})"

    def split(self, tag: int) -> "Rng":
        """Fresh stream derived from this seed and an integer tag.

        Splitting does not advance this stream, so the derived streams are
        stable no matter how much the parent has been consumed.
        """
        return Rng(_mix64(self.seed ^ _mix64(int(tag))))

    def uniform(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        """n independent draws from the half-open interval [lo, hi)."""
        if n < 1:
            raise ParameterError(f"draw count must be >= 1, got {n}")
        if not lo <= hi:
            raise ParameterError(f"uniform bounds out of order: lo={lo} hi={hi}")
        return self._gen.uniform(lo, hi, size=int(n))

    def uniform_scalar(self, lo: float, hi: float) -> float:
        if not lo <= hi:
            raise ParameterError(f"uniform bounds out of order: lo={lo} hi={hi}")
        return float(self._gen.uniform(lo, hi))

    def normal(self, shape) -> np.ndarray:
        return self._gen.normal(size=shape)

    def integer(self, n: int) -> int:
        """One draw from {0, ..., n-1}."""
        if n < 1:
            raise ParameterError(f"integer range must be >= 1, got {n}")
        return int(self._gen.integers(0, n))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(int(n))


def _as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise InputError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    return a


def _as_vector(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1 or a.shape[0] == 0:
        raise InputError(f"expected a non-empty 1-D vector, got shape {a.shape}")
    return a


def l2_normalize_rows(m) -> np.ndarray:
    """Scale each row to unit Euclidean norm; all-zero rows pass through unchanged."""
    a = _as_matrix(m)
    norms = np.linalg.norm(a, axis=1, keepdims=True)
    return a / np.where(norms == 0.0, 1.0, norms)


def row_softmax(m, temperature: float) -> np.ndarray:
    """Row-wise softmax at the given temperature.

    Rows are shifted by their maximum before exponentiation, so arbitrarily
    large scores cannot overflow and each output row sums to 1.
    """
    if not temperature > 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    a = _as_matrix(m) / float(temperature)
    a = a - a.max(axis=1, keepdims=True)
    e = np.exp(a)
    return e / e.sum(axis=1, keepdims=True)


def minmax_scale(v) -> np.ndarray:
    """Affinely map a vector onto [0, 1]; a constant vector maps to all zeros."""
    a = _as_vector(v)
    lo = a.min()
    hi = a.max()
    if hi == lo:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


def top_k_indices(v, k: int) -> np.ndarray:
    """Indices of the k largest entries, returned in ascending index order.

    Ties go to the lower index: top_k_indices([0.5, 0.5, 0.5], 1) == [0].
    """
    a = _as_vector(v)
    if not 1 <= k <= a.shape[0]:
        raise ParameterError(f"k must be in [1, {a.shape[0]}], got {k}")
    order = np.argsort(-a, kind="stable")
    return np.sort(order[:k])


def bottom_k_indices(v, k: int) -> np.ndarray:
    """Indices of the k smallest entries, ascending order, ties to the lower index."""
    a = _as_vector(v)
    if not 1 <= k <= a.shape[0]:
        raise ParameterError(f"k must be in [1, {a.shape[0]}], got {k}")
    order = np.argsort(a, kind="stable")
    return np.sort(order[:k])


def uniform_vector(rng: Rng, n: int, lo: float, hi: float) -> np.ndarray:
    """n draws from [lo, hi) taken from the given stream."""
    return rng.uniform(n, lo, hi)


def floor_count(ratio: float, n: int) -> int:
    """floor(ratio * n) with a tiny slack so exact products survive binary rounding.

    0.3 * 10 evaluates to 2.999...96 in float64; the slack keeps the intended
    value 3. The bias only matters within 1e-9 of an integer, far below the
    resolution at which the ratios here are specified.
    """
    return int(math.floor(ratio * n + 1e-9))


def ceil_count(ratio: float, n: int) -> int:
    """ceil(ratio * n) with the same slack as :func:`floor_count`."""
    return int(math.ceil(ratio * n - 1e-9))
