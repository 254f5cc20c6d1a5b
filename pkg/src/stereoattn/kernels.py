"""Dense numeric substrate shared by every other module.

Arrays are plain row-major ``numpy.ndarray`` objects in float32 or float64.
The helpers here add the two things numpy does not give us for free: an
explicit multiply-add counter on matrix products, and loud failure on
non-finite values.
"""
from __future__ import annotations

from collections import Counter
from typing import Callable, Iterable, Optional

import numpy as np

DTYPES = {"f32": np.float32, "f64": np.float64}


class NonFiniteError(FloatingPointError):
    """Raised when an operation would produce NaN or Inf."""


def resolve_dtype(dtype) -> np.dtype:
    if isinstance(dtype, str) and dtype in DTYPES:
        return np.dtype(DTYPES[dtype])
    dt = np.dtype(dtype)
    if dt not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dt}; use float32 or float64")
    return dt


def dtype_tag(dtype) -> str:
    return "f64" if np.dtype(dtype) == np.float64 else "f32"


def check_finite(a: np.ndarray, what: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"non-finite values in {what}")
    return a


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator (Philox 4x64) keyed by ``seed`` and an optional stream path.

    Philox output depends only on (key, counter), so the stream for a given
    seed is the same on every platform numpy supports.  Extra ``stream``
    integers derive an independent sub-stream, e.g. ``make_rng(seed, step)``.
    """
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    ss = np.random.SeedSequence([int(seed), *[int(s) for s in stream]])
    return np.random.Generator(np.random.Philox(ss))


class FlopCounter:
    """Per-invocation multiply-add accumulator.

    Counts follow the usual convention of 2 FLOPs per multiply-accumulate,
    so an (m x k) @ (k x n) product records ``2*m*n*k``.  Python ints keep
    the totals exact.
    """

    def __init__(self):
        self.by_tag: Counter = Counter()

    @property
    def total(self) -> int:
        return sum(self.by_tag.values())

    def add(self, flops: int, tag: str = "matmul") -> None:
        self.by_tag[tag] += int(flops)

    def __repr__(self):
        return f"FlopCounter(total={self.total}, by_tag={dict(self.by_tag)})"


def matmul(a: np.ndarray, b: np.ndarray, counter: Optional[FlopCounter] = None,
           tag: str = "matmul") -> np.ndarray:
    """Matrix product with optional multiply-add accounting.

    Leading (batch) axes follow numpy's ``matmul`` broadcasting; the count
    covers every product in the batch.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul needs at least 2-D operands")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"shape mismatch: {a.shape} @ {b.shape}")
    out = np.matmul(a, b)
    if counter is not None:
        m, k = a.shape[-2:]
        n = b.shape[-1]
        batch = int(np.prod(out.shape[:-2], dtype=np.int64)) if out.ndim > 2 else 1
        counter.add(2 * m * n * k * batch, tag)
    return check_finite(out, "matmul output")


def softmax_rows(a: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Softmax over the last axis with max subtraction.

    ``mask`` (broadcastable boolean, True = keep) excludes entries exactly:
    they get probability 0.  A row with no kept entry is an error.
    """
    a = np.asarray(a)
    check_finite(a, "softmax input")
    if mask is None:
        z = a - a.max(axis=-1, keepdims=True)
        e = np.exp(z)
    else:
        mask = np.broadcast_to(mask, a.shape)
        if not np.all(mask.any(axis=-1)):
            raise ValueError("fully masked row in softmax")
        z = np.where(mask, a, -np.inf)
        z = z - z.max(axis=-1, keepdims=True)
        e = np.where(mask, np.exp(z), 0.0).astype(a.dtype, copy=False)
    return e / e.sum(axis=-1, keepdims=True)


def fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-6,
                indices: Optional[Iterable[int]] = None) -> np.ndarray:
    """Central finite-difference gradient of a scalar function, in float64.

    With ``indices`` only those flat positions are probed; the rest of the
    returned array is zero.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    for i in idx:
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"non-finite evaluation at index {i}")
        grad.reshape(-1)[i] = (fp - fm) / (2.0 * eps)
    return grad
