"""Dense float64 array helpers, activations and the finite-difference oracle.

Everything here computes in 64-bit; matrices are plain numpy arrays with
samples as rows. The Rng class wraps a counter-based generator so any
(purpose, index) pair yields an independent, reproducible substream.
"""

from __future__ import annotations

import hashlib
from typing import Callable

import numpy as np
from scipy.special import erf

from .errors import NonFinite, ShapeMismatch, ZeroRow

ZERO_ROW_EPS = 1e-12


class Rng:
    """Seeded source of independent substreams.

    Substreams are keyed by (purpose, index): the 128-bit Philox key is
    derived from a SHA-256 of the root seed and the key, so streams never
    depend on the order in which they are requested.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def substream(self, purpose: str, index: int = 0) -> np.random.Generator:
        digest = hashlib.sha256(
            f"{self.seed}/{purpose}/{int(index)}".encode()
        ).digest()
        key = np.frombuffer(digest[:16], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def generator(self) -> np.random.Generator:
        return self.substream("root")


def as_matrix(x) -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting non-finite entries."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise NonFinite("matrix contains NaN or inf")
    return m


def row_norms(m: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.asarray(m, dtype=np.float64) ** 2, axis=1))


def l2_normalize_rows(m: np.ndarray) -> np.ndarray:
    """Scale each row to unit Euclidean norm.

    Raises ZeroRow if any row norm is at or below 1e-12.
    """
    m = as_matrix(m)
    norms = row_norms(m)
    bad = np.flatnonzero(norms <= ZERO_ROW_EPS)
    if bad.size:
        raise ZeroRow(f"row {bad[0]} has norm {norms[bad[0]]:.3e}")
    return m / norms[:, None]


def gram(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise scalar products: out[i, j] = a[i] . b[j]."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise ShapeMismatch(f"column counts differ: {a.shape[1]} vs {b.shape[1]}")
    return a @ b.T


_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def normal_cdf(x):
    return 0.5 * (1.0 + erf(np.asarray(x, dtype=np.float64) / _SQRT2))


def gelu(x):
    """Gaussian-CDF form: x * Phi(x)."""
    x = np.asarray(x, dtype=np.float64)
    return x * normal_cdf(x)


def gelu_grad(x):
    x = np.asarray(x, dtype=np.float64)
    return normal_cdf(x) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def log_sigmoid(x):
    """log(sigmoid(x)), stable for |x| up to at least 1e4."""
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))),
                   x - np.log1p(np.exp(-np.abs(x))))
    return out if out.ndim else float(out)


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return out if out.ndim else float(out)


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray,
                     h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time.

    Used as the independent oracle against analytic backward passes; it must
    never share code with them.
    """
    if not (1e-7 <= h <= 1e-4):
        raise ValueError(f"step h={h} outside [1e-7, 1e-4]")
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        fp = float(f(x))
        flat[k] = orig - h
        fm = float(f(x))
        flat[k] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFinite(f"non-finite evaluation at coordinate {k}")
        gflat[k] = (fp - fm) / (2.0 * h)
    return grad


def max_rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Max absolute difference normalized by the larger magnitude present.

    The floor of 1e-8 keeps all-zero gradient comparisons well defined.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    scale = max(float(np.max(np.abs(a), initial=0.0)),
                float(np.max(np.abs(b), initial=0.0)), 1e-8)
    return float(np.max(np.abs(a - b), initial=0.0)) / scale
