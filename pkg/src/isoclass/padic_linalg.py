"""Matrix algebra over Z/p^E read as a truncation of the p-adic integers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from ._validation import check_matrix, check_rng, is_prime
from .exceptions import InternalInconsistency, UnresolvedPrecision


@dataclass(frozen=True)
class PadicCtx:
    """Prime ``p`` and working precision ``E``; residues live in [0, p**E)."""

    p: int
    E: int

    def __post_init__(self):
        if not isinstance(self.p, (int, np.integer)) or not is_prime(int(self.p)):
            raise ValueError(f"p must be prime, got {self.p!r}")
        if int(self.E) < 1:
            raise ValueError(f"precision E must be >= 1, got {self.E!r}")
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "E", int(self.E))

    @property
    def q(self) -> int:
        return self.p**self.E

    def with_precision(self, E: int) -> "PadicCtx":
        return PadicCtx(self.p, E)


class Partition(tuple):
    """Isomorphism type of a finite abelian p-group: nonincreasing exponents.

    ``Partition((2, 1))`` is Z/p^2 + Z/p; the empty partition is the trivial
    group. Inputs are sorted, so ``Partition([1, 2]) == Partition([2, 1])``.
    """

    def __new__(cls, exps=()):
        vals = sorted((int(e) for e in exps), reverse=True)
        if any(v <= 0 for v in vals):
            raise ValueError(f"partition entries must be positive, got {vals}")
        return super().__new__(cls, vals)

    def __repr__(self):
        return f"Partition({list(self)})"

    @classmethod
    def parse(cls, text: str) -> "Partition":
        text = text.strip().strip("[]() ")
        if not text:
            return cls()
        try:
            return cls(int(tok) for tok in text.split(","))
        except ValueError as exc:
            raise ValueError(f"malformed partition {text!r}: {exc}") from None

    def log_order(self) -> int:
        return sum(self)

    def order(self, p: int) -> int:
        return p ** sum(self)

    @property
    def p_rank(self) -> int:
        return len(self)

    def is_symplectic(self) -> bool:
        return all(self.count(e) % 2 == 0 for e in set(self))

    def label(self) -> str:
        return ",".join(str(e) for e in self)

    def pretty(self, p: int) -> str:
        if not self:
            return "0"
        return " ⊕ ".join(f"Z/{p**e}" for e in self)


@dataclass(frozen=True)
class CokernelShape:
    free_rank: int
    tors: Partition
    resolved: bool


def smith_normal_form(M, ctx: PadicCtx):
    """Elementary divisors of M over Z/p^E together with the transforms.

    Returns ``(exponents, U, V)`` with ``U @ M @ V`` diagonal mod p**E, the
    i-th diagonal entry equal to ``p**exponents[i]``. An exponent equal to
    ``ctx.E`` is the sentinel for "valuation >= E" (diagonal entry 0).
    Exponents come out nondecreasing. The pivot is the entry of least
    valuation, ties broken by the smallest row-major index.
    """
    M = check_matrix(M, ctx)
    p, E, q = ctx.p, ctx.E, ctx.q
    rows, cols = M.shape
    A = [[int(x) for x in row] for row in M]
    U = [[int(i == j) for j in range(rows)] for i in range(rows)]
    V = [[int(i == j) for j in range(cols)] for i in range(cols)]

    def val(x):
        if x == 0:
            return E
        v = 0
        while x % p == 0:
            x //= p
            v += 1
        return v

    exps = []
    for k in range(min(rows, cols)):
        best, bi, bj = E, -1, -1
        for i in range(k, rows):
            for j in range(k, cols):
                if A[i][j]:
                    v = val(A[i][j])
                    if v < best:
                        best, bi, bj = v, i, j
        if bi < 0:
            exps.extend([E] * (min(rows, cols) - k))
            break
        exps.append(best)
        A[k], A[bi] = A[bi], A[k]
        U[k], U[bi] = U[bi], U[k]
        for row in A:
            row[k], row[bj] = row[bj], row[k]
        for row in V:
            row[k], row[bj] = row[bj], row[k]
        pv = p**best
        uinv = pow(A[k][k] // pv, -1, q)
        A[k] = [x * uinv % q for x in A[k]]
        U[k] = [x * uinv % q for x in U[k]]
        for i in range(k + 1, rows):
            f = A[i][k] // pv
            if f:
                A[i] = [(a - f * b) % q for a, b in zip(A[i], A[k])]
                U[i] = [(a - f * b) % q for a, b in zip(U[i], U[k])]
        for j in range(k + 1, cols):
            g = A[k][j] // pv
            if g:
                A[k][j] = 0
                for row in V:
                    row[j] = (row[j] - g * row[k]) % q
    dtype = _backend.residue_dtype(p, E)
    return exps, np.array(U, dtype=object).astype(dtype), np.array(V, dtype=object).astype(dtype)


def elementary_exponents(M, ctx: PadicCtx) -> list[int]:
    """Exponents only, through the compiled kernel when the modulus allows."""
    M = check_matrix(M, ctx)
    kernels = _backend.for_precision(ctx.p, ctx.E)
    return [int(e) for e in kernels.snf_exponents(M.copy(), ctx.p, ctx.E)]


def shape_from_exponents(exps, E: int) -> CokernelShape:
    free = sum(1 for e in exps if e >= E)
    tors = Partition(e for e in exps if 0 < e < E)
    return CokernelShape(free, tors, all(e <= E - 2 for e in tors))


def cokernel_shape(A, ctx: PadicCtx) -> CokernelShape:
    """Free rank and torsion of coker A.

    Sentinel exponents count as free rank. ``resolved`` is True iff every
    finite nonzero exponent is at most E-2.
    """
    A = check_matrix(A, ctx, square=True)
    return shape_from_exponents(elementary_exponents(A, ctx), ctx.E)


def symplectic_divisors(A, ctx: PadicCtx) -> list[int]:
    """Torsion exponents of coker A for alternating A; each appears in pairs."""
    from ._validation import check_alternating

    A = check_alternating(A, ctx)
    shape = cokernel_shape(A, ctx)
    if not shape.resolved:
        raise UnresolvedPrecision(f"cokernel exponents {list(shape.tors)} reach E-1 at E={ctx.E}")
    if not shape.tors.is_symplectic():
        raise InternalInconsistency(f"odd multiplicity in {list(shape.tors)}")
    return list(shape.tors)


def rank_mod_p(M, ctx: PadicCtx) -> int:
    M = check_matrix(M, ctx)
    if M.size == 0:
        return 0
    return int(_backend.for_precision(ctx.p, ctx.E).rank_mod_p(M, ctx.p))


def sample_unimodular(n: int, ctx: PadicCtx, rng=None) -> np.ndarray:
    """Uniform matrix mod p^E that is invertible mod p (rejection sampling)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = check_rng(rng)
    return _backend.for_precision(ctx.p, ctx.E).unimodular(rng, n, ctx.p, ctx.E)


def det_integer(M) -> int:
    """Exact determinant of an integer matrix (Bareiss elimination)."""
    A = [[int(x) for x in row] for row in np.asarray(M, dtype=object)]
    n = len(A)
    if n == 0:
        return 1
    sign, prev = 1, 1
    for k in range(n - 1):
        if A[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if A[i][k] != 0), None)
            if swap is None:
                return 0
            A[k], A[swap] = A[swap], A[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                A[i][j] = (A[i][j] * A[k][k] - A[i][k] * A[k][j]) // prev
        prev = A[k][k]
    return sign * A[-1][-1]
