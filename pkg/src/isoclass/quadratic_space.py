"""Maximal isotropic summands of the hyperbolic module (Z/p^E)^{2n}.

Vectors are written (x_1..x_n, y_1..y_n) and Q(x, y) = sum x_i y_i. The
reference summand W is Z^n x 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, product
from math import comb

import numpy as np

from . import _backend
from ._validation import check_matrix, check_rng, check_vector, prime_power
from .exceptions import InternalInconsistency, NotInS, TooLarge, UnresolvedPrecision
from .padic_linalg import PadicCtx, Partition, rank_mod_p, smith_normal_form

ENUMERATION_GUARD = 10**7


@dataclass(frozen=True)
class HyperbolicSpace:
    n: int
    ctx: PadicCtx

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("half-rank n must be >= 0")

    @property
    def rank(self) -> int:
        return 2 * self.n

    def with_precision(self, E: int) -> "HyperbolicSpace":
        return HyperbolicSpace(self.n, self.ctx.with_precision(E))

    def standard(self) -> "IsotropicSummand":
        """W = Z^n x 0."""
        basis = np.zeros((2 * self.n, self.n), dtype=object)
        for i in range(self.n):
            basis[i, i] = 1
        return IsotropicSummand.from_basis(basis, self)

    def complement(self) -> "IsotropicSummand":
        """0 x Z^n, transverse to the standard summand."""
        basis = np.zeros((2 * self.n, self.n), dtype=object)
        for i in range(self.n):
            basis[self.n + i, i] = 1
        return IsotropicSummand.from_basis(basis, self)

    def graph(self, A) -> "IsotropicSummand":
        """{(x, A x)} for alternating A; meets W in ker A."""
        A = check_matrix(A, self.ctx, square=True)
        basis = np.zeros((2 * self.n, self.n), dtype=object)
        for i in range(self.n):
            basis[i, i] = 1
            for j in range(self.n):
                basis[self.n + i, j] = int(A[i, j])
        return IsotropicSummand.from_basis(basis, self)


def q_eval(v, space: HyperbolicSpace) -> int:
    v = check_vector(v, space.rank)
    n = space.n
    return sum(v[i] * v[n + i] for i in range(n)) % space.ctx.q


def inner(u, v, space: HyperbolicSpace) -> int:
    """Polarization Q(u+v) - Q(u) - Q(v)."""
    u = check_vector(u, space.rank)
    v = check_vector(v, space.rank)
    n = space.n
    return sum(u[i] * v[n + i] + u[n + i] * v[i] for i in range(n)) % space.ctx.q


class IsotropicSummand:
    """Rank-n isotropic direct summand, stored in canonical column-reduced form.

    Canonical form: the rows picked greedily top-down whose n x n minor is
    invertible mod p carry the identity. Two summands are equal iff their
    canonical bases are equal.
    """

    __slots__ = ("basis", "space", "pivots", "_key")

    def __init__(self, basis: np.ndarray, space: HyperbolicSpace, pivots):
        self.basis = basis
        self.space = space
        self.pivots = tuple(int(r) for r in pivots)
        self._key = (space.ctx.p, space.ctx.E, tuple(int(x) for x in basis.ravel()))

    @classmethod
    def from_basis(cls, basis, space: HyperbolicSpace, check: bool = True) -> "IsotropicSummand":
        ctx = space.ctx
        B = check_matrix(basis, ctx)
        if B.shape != (space.rank, space.n):
            raise ValueError(f"basis must be {space.rank} x {space.n}, got {B.shape}")
        kernels = _backend.for_precision(ctx.p, ctx.E)
        if space.n == 0:
            return cls(B, space, ())
        try:
            rows = kernels.pivot_rows(B, space.n, ctx.p)
        except ValueError as exc:
            raise ValueError(f"columns do not span a direct summand: {exc}") from None
        C = kernels.canonical_basis(B, space.n, ctx.p, ctx.q)
        Z = cls(C, space, rows)
        if check and not Z.is_isotropic():
            raise ValueError("the hyperbolic form does not vanish on the span")
        return Z

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def ctx(self) -> PadicCtx:
        return self.space.ctx

    def column(self, i: int) -> list[int]:
        return [int(x) for x in self.basis[:, i]]

    def is_isotropic(self) -> bool:
        """Q on every column and the polarization on every pair vanish mod p^E."""
        cols = [self.column(i) for i in range(self.n)]
        if any(q_eval(c, self.space) for c in cols):
            return False
        return not any(inner(cols[i], cols[j], self.space) for i, j in combinations(range(self.n), 2))

    def is_direct_summand(self) -> bool:
        minor = self.basis[list(self.pivots), :]
        return rank_mod_p(minor, self.ctx) == self.n

    def reduce(self, k: int) -> "IsotropicSummand":
        if not 1 <= k <= self.ctx.E:
            raise ValueError(f"cannot reduce precision {self.ctx.E} to {k}")
        return IsotropicSummand.from_basis(self.basis, self.space.with_precision(k), check=False)

    def coefficients(self, v, k: int) -> list[int] | None:
        """a with basis @ a = v mod p^k, or None if v is not in the span."""
        v = check_vector(v, self.space.rank)
        pk = self.ctx.p**k
        a = [v[r] % pk for r in self.pivots]
        for s in range(self.space.rank):
            if sum(int(self.basis[s, i]) * a[i] for i in range(self.n)) % pk != v[s] % pk:
                return None
        return a

    def __eq__(self, other):
        return isinstance(other, IsotropicSummand) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        return f"IsotropicSummand(n={self.n}, p={self.ctx.p}, E={self.ctx.E}, basis={self.basis.tolist()})"


@dataclass(frozen=True)
class RstSample:
    r: int
    T: Partition
    resolved: bool


# ---------------------------------------------------------------- sampling


def sample_ogr_mod_p(space: HyperbolicSpace, rng=None) -> IsotropicSummand:
    """Uniform point of OGr_n(F_p)."""
    rng = check_rng(rng)
    p = space.ctx.p
    basis = _backend.for_precision(p, 1).ogr_mod_p(rng, space.n, p)
    return IsotropicSummand.from_basis(basis, space.with_precision(1))


def lift_ogr(Z: IsotropicSummand, rng=None) -> IsotropicSummand:
    """Uniform lift of Z to one more p-adic digit (p^{n(n-1)/2} choices)."""
    rng = check_rng(rng)
    ctx = Z.ctx
    e = ctx.E
    kernels = _backend.for_precision(ctx.p, e + 1)
    B = check_matrix(Z.basis, ctx.with_precision(e + 1))
    try:
        lifted = kernels.ogr_lift(rng, B, Z.n, ctx.p, e)
    except ValueError as exc:
        raise InternalInconsistency(f"cannot lift summand: {exc}") from None
    return IsotropicSummand.from_basis(lifted, Z.space.with_precision(e + 1))


def sample_ogr(space: HyperbolicSpace, rng=None) -> IsotropicSummand:
    """Uniform point of OGr_n(Z/p^E): uniform mod p, then E-1 uniform lifts."""
    rng = check_rng(rng)
    ctx = space.ctx
    kernels = _backend.for_precision(ctx.p, ctx.E)
    return IsotropicSummand.from_basis(kernels.ogr_sample(rng, space.n, ctx.p, ctx.E), space)


# ---------------------------------------------------------------- intersections


def _concatenated(Z: IsotropicSummand, W: IsotropicSummand) -> np.ndarray:
    if Z.space != W.space:
        raise ValueError("summands live in different spaces")
    q = Z.ctx.q
    return np.hstack([Z.basis.astype(object), (-W.basis.astype(object)) % q])


def intersect(Z: IsotropicSummand, W: IsotropicSummand, k: int | None = None) -> Partition:
    """Isomorphism type of Z/p^k cap W/p^k, exponents capped at k."""
    E = Z.ctx.E
    k = E if k is None else k
    if not 1 <= k <= E:
        raise ValueError(f"k must lie in [1, {E}]")
    exps, _, _ = smith_normal_form(_concatenated(Z, W), Z.ctx)
    return Partition(min(e, k) for e in exps if e > 0)


def intersection_generators(Z: IsotropicSummand, W: IsotropicSummand, k: int):
    """Generators of Z/p^k cap W/p^k as ambient vectors mod p^k.

    Returns ``(vectors, exponents, free)``: vectors[i] has order
    p^exponents[i]; free[i] marks directions whose valuation reached the
    working precision (the divisible part R).
    """
    ctx = Z.ctx
    E = ctx.E
    pk = ctx.p**k
    exps, _, V = smith_normal_form(_concatenated(Z, W), ctx)
    n = Z.n
    vectors, orders, free = [], [], []
    for i, e in enumerate(exps):
        if e == 0:
            continue
        eff = min(e, k)
        scale = ctx.p ** (k - eff)
        a = [int(V[t, i]) * scale % pk for t in range(n)]
        vec = [sum(int(Z.basis[s, t]) * a[t] for t in range(n)) % pk for s in range(2 * n)]
        vectors.append(vec)
        orders.append(eff)
        free.append(e >= E)
    return vectors, orders, free


def rst_extract(Z: IsotropicSummand, W: IsotropicSummand | None = None) -> RstSample:
    """Split S = Z cap W into its divisible rank r and finite quotient T.

    Compares the intersection partitions at k = E-1 and k = E: exponents
    that track k are free, exponents equal at both and <= E-2 give T.
    """
    E = Z.ctx.E
    if E < 3:
        raise ValueError("rst_extract needs E >= 3")
    W = Z.space.standard() if W is None else W
    upper = intersect(Z, W, E)
    lower = intersect(Z, W, E - 1)
    padded = len(upper)
    lower = list(lower) + [0] * (padded - len(lower))
    r, T, resolved = 0, [], True
    for hi, lo in zip(upper, lower):
        if hi == E and lo == E - 1:
            r += 1
        elif hi == lo and hi <= E - 2:
            T.append(hi)
        else:
            resolved = False
    return RstSample(r, Partition(T), resolved)


def ct_pairing(Z: IsotropicSummand, W: IsotropicSummand, x, y, k: int, rng=None) -> Fraction:
    """Model Cassels-Tate pairing Q(z_x - w_y) mod Z_p.

    ``x`` and ``y`` are vectors mod p^k lying in Z/p^k cap W/p^k; they stand
    for the elements x/p^k, y/p^k of S[p^k]. z_x is the lift of x in
    Z tensor Q_p, w_y the lift of y in W tensor Q_p. When ``rng`` is given
    the integral lifts of the coefficient vectors are re-drawn at random,
    which must not change the value. Needs precision E >= 2k.
    """
    ctx = Z.ctx
    if W.space != Z.space:
        raise ValueError("summands live in different spaces")
    if 2 * k > ctx.E:
        raise UnresolvedPrecision(f"ct_pairing at level p^{k} needs E >= {2 * k}, have {ctx.E}")
    a = Z.coefficients(x, k)
    b = W.coefficients(y, k)
    if a is None or W.coefficients(x, k) is None:
        raise NotInS("x is not in both spans mod p^k")
    if b is None or Z.coefficients(y, k) is None:
        raise NotInS("y is not in both spans mod p^k")
    p = ctx.p
    pk, p2k = p**k, p ** (2 * k)
    if rng is not None:
        rng = check_rng(rng)
        a = [ai + pk * int(rng.integers(0, pk)) for ai in a]
        b = [bi + pk * int(rng.integers(0, pk)) for bi in b]
    n = Z.n
    z = [sum(int(Z.basis[s, t]) * a[t] for t in range(n)) for s in range(2 * n)]
    w = [sum(int(W.basis[s, t]) * b[t] for t in range(n)) for s in range(2 * n)]
    d = [(zi - wi) % p2k for zi, wi in zip(z, w)]
    value = sum(d[i] * d[n + i] for i in range(n)) % p2k
    return Fraction(value, p2k)


# ---------------------------------------------------------------- enumeration & parity


def enumerate_ogr(n: int, q: int) -> list[IsotropicSummand]:
    """Every maximal isotropic direct summand of (Z/q)^{2n}.

    Candidates are bases carrying the identity on some n rows; distinct
    summands are told apart by their full set of elements.
    """
    p, e = prime_power(q)
    candidates = comb(2 * n, n) * q ** (n * n)
    if candidates > ENUMERATION_GUARD:
        raise TooLarge(f"{candidates} candidate bases exceed the guard {ENUMERATION_GUARD}")
    space = HyperbolicSpace(n, PadicCtx(p, e))
    if n == 0:
        return [IsotropicSummand.from_basis(np.zeros((0, 0), dtype=object), space)]
    seen, found = set(), []
    coeffs = list(product(range(q), repeat=n))
    for rows in combinations(range(2 * n), n):
        others = [s for s in range(2 * n) if s not in rows]
        for free in product(range(q), repeat=n * n):
            B = [[0] * n for _ in range(2 * n)]
            for i, r in enumerate(rows):
                B[r][i] = 1
            for idx, s in enumerate(others):
                B[s] = list(free[idx * n:(idx + 1) * n])
            if any(sum(B[t][i] * B[n + t][i] for t in range(n)) % q for i in range(n)):
                continue
            if any(
                sum(B[t][i] * B[n + t][j] + B[n + t][i] * B[t][j] for t in range(n)) % q
                for i in range(n)
                for j in range(i + 1, n)
            ):
                continue
            span = frozenset(
                tuple(sum(B[s][t] * c[t] for t in range(n)) % q for s in range(2 * n)) for c in coeffs
            )
            if span in seen:
                continue
            seen.add(span)
            found.append(IsotropicSummand.from_basis(np.array(B, dtype=object), space))
    return found


def intersection_dim_mod_p(Z1: IsotropicSummand, Z2: IsotropicSummand) -> int:
    """dim over F_p of the intersection of the reductions."""
    stacked = np.hstack([Z1.basis.astype(object), Z2.basis.astype(object)])
    return 2 * Z1.n - rank_mod_p(stacked, Z1.ctx)


def component_sign(Z: IsotropicSummand, W: IsotropicSummand | None = None) -> str:
    """'even' or 'odd': parity of dim(Z mod p cap W mod p)."""
    W = Z.space.standard() if W is None else W
    return "even" if intersection_dim_mod_p(Z, W) % 2 == 0 else "odd"
