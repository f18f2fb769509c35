"""Input checking helpers in the spirit of sklearn.utils.check_*."""
from __future__ import annotations

import numbers

import numpy as np

from . import _backend


def is_prime(p: int) -> bool:
    if p < 2:
        return False
    if p % 2 == 0:
        return p == 2
    d = 3
    while d * d <= p:
        if p % d == 0:
            return False
        d += 2
    return True


def prime_power(q: int) -> tuple[int, int]:
    """Return (p, e) with q = p**e, e >= 1."""
    q = int(q)
    if q < 2:
        raise ValueError(f"{q} is not a prime power")
    p = 2
    while q % p:
        p += 1
    e, rest = 0, q
    while rest % p == 0:
        rest //= p
        e += 1
    if rest != 1:
        raise ValueError(f"{q} is not a prime power")
    return p, e


def check_rng(seed=None) -> np.random.Generator:
    """Turn None, an int, or a Generator into a numpy Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, numbers.Integral):
        return np.random.default_rng(seed)
    raise TypeError(f"cannot build a random generator from {seed!r}")


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    """Counter-based stream for one trial; independent of scheduling."""
    return np.random.Generator(np.random.Philox(key=[int(master_seed), int(trial)]))


def check_matrix(M, ctx, square: bool = False) -> np.ndarray:
    """Residue matrix reduced mod p**E, in the dtype the kernels expect."""
    q = ctx.q
    arr = np.asarray(M, dtype=object)
    if arr.ndim != 2:
        if arr.size == 0:
            arr = arr.reshape(0, 0)
        else:
            raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    out = np.empty(arr.shape, dtype=object)
    for idx, x in np.ndenumerate(arr):
        out[idx] = int(x) % q
    dtype = _backend.residue_dtype(ctx.p, ctx.E)
    return out if dtype is object else out.astype(np.int64)


def check_alternating(A, ctx) -> np.ndarray:
    A = check_matrix(A, ctx, square=True)
    n = A.shape[0]
    for i in range(n):
        if A[i, i] != 0:
            raise ValueError("alternating matrix must have zero diagonal")
        for j in range(i + 1, n):
            if (int(A[i, j]) + int(A[j, i])) % ctx.q:
                raise ValueError("matrix is not skew-symmetric")
    return A


def check_vector(x, length: int | None = None) -> list[int]:
    vals = [int(v) for v in np.asarray(x, dtype=object).ravel()]
    if length is not None and len(vals) != length:
        raise ValueError(f"expected a vector of length {length}, got {len(vals)}")
    return vals
