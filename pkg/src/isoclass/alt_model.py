"""The alternating-matrix model: Haar and stratum sampling, cokernel pairings."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from . import _backend
from ._validation import check_alternating, check_rng, check_vector
from .exceptions import InternalInconsistency, InvalidStratum, SingularMatrix, UnresolvedPrecision
from .padic_linalg import (
    CokernelShape,
    PadicCtx,
    cokernel_shape,
    elementary_exponents,
    rank_mod_p,
    smith_normal_form,
)


@dataclass(frozen=True)
class StratumSpec:
    """Alternating n x n matrices of corank r (rank n - r)."""

    n: int
    r: int

    def __post_init__(self):
        if self.n < 0 or self.r < 0 or self.r > self.n:
            raise InvalidStratum(f"need 0 <= r <= n, got n={self.n}, r={self.r}")
        if (self.n - self.r) % 2:
            raise InvalidStratum(f"n - r must be even, got n={self.n}, r={self.r}")

    @property
    def core_size(self) -> int:
        return self.n - self.r


def standard_alternating(e_list, ctx: PadicCtx) -> np.ndarray:
    """Block matrix [[0, diag(p^e)], [-diag(p^e), 0]] of size 2*len(e_list)."""
    k = len(e_list)
    D = np.zeros((2 * k, 2 * k), dtype=object)
    for i, e in enumerate(e_list):
        D[i, k + i] = ctx.p ** int(e) % ctx.q
        D[k + i, i] = (-ctx.p ** int(e)) % ctx.q
    return check_alternating(D, ctx)


def sample_alt_haar(n: int, ctx: PadicCtx, rng=None) -> np.ndarray:
    """Alternating matrix with independent uniform upper entries mod p^E."""
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = check_rng(rng)
    return _backend.for_precision(ctx.p, ctx.E).alt_haar(rng, n, ctx.p, ctx.E)


def sample_alt_stratum(spec: StratumSpec, ctx: PadicCtx, rng=None):
    """Sample A = M^t diag(core, 0) M from the corank-r stratum.

    The core is Haar on (n-r) x (n-r) alternating matrices, kept with
    probability |det core|_p^r; a core whose determinant vanishes mod p^E
    is redrawn. Returns ``(A, core)``.
    """
    rng = check_rng(rng)
    kernels = _backend.for_precision(ctx.p, ctx.E)
    _, _, A, core, _, _ = kernels.stratum_trial(rng, spec.n, spec.r, ctx.p, ctx.E, ctx.E, 1, True)
    return A, core


def coker_tors_sample(spec: StratumSpec, ctx: PadicCtx, rng=None) -> CokernelShape:
    """Torsion of coker A for A from the stratum; free rank reported as r."""
    _, core = sample_alt_stratum(spec, ctx, rng)
    shape = cokernel_shape(core, ctx)
    if not shape.resolved:
        raise UnresolvedPrecision(f"core exponents {list(shape.tors)} reach E-1 at E={ctx.E}")
    return CokernelShape(spec.r, shape.tors, True)


# ---------------------------------------------------------------- exact rationals


def rational_inverse(M) -> list[list[Fraction]]:
    """Inverse over Q of an integer matrix; raises SingularMatrix."""
    rows = [[Fraction(int(x)) for x in row] for row in np.asarray(M, dtype=object)]
    n = len(rows)
    aug = [row + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(rows)]
    for c in range(n):
        piv = next((i for i in range(c, n) if aug[i][c] != 0), None)
        if piv is None:
            raise SingularMatrix("matrix is singular over Q")
        aug[c], aug[piv] = aug[piv], aug[c]
        inv = 1 / aug[c][c]
        aug[c] = [x * inv for x in aug[c]]
        for i in range(n):
            if i != c and aug[i][c] != 0:
                f = aug[i][c]
                aug[i] = [a - f * b for a, b in zip(aug[i], aug[c])]
    return [row[n:] for row in aug]


def alternating_lift(A, ctx: PadicCtx) -> np.ndarray:
    """Integer matrix with upper entries in [0, p^E) and exact skew-symmetry."""
    A = check_alternating(A, ctx)
    n = A.shape[0]
    L = np.zeros((n, n), dtype=object)
    for i in range(n):
        for j in range(i + 1, n):
            L[i, j] = int(A[i, j])
            L[j, i] = -int(A[i, j])
    return L


def p_part(x: Fraction, p: int) -> Fraction:
    """Image of a rational number in Q_p/Z_p, as a fraction in [0, 1)."""
    den, k = x.denominator, 0
    while den % p == 0:
        den //= p
        k += 1
    if k == 0:
        return Fraction(0)
    pk = p**k
    return Fraction(x.numerator * pow(den, -1, pk) % pk, pk)


def p_integral(x: Fraction, p: int) -> bool:
    return x.denominator % p != 0


def bilinear(x, M, y) -> Fraction:
    return sum((Fraction(int(xi)) * mij * int(yj) for xi, row in zip(x, M) for mij, yj in zip(row, y)), Fraction(0))


def cokernel_pairing(A, x, y, ctx: PadicCtx) -> Fraction:
    """x^t A^{-1} y in Q_p/Z_p, for the integer representative of A.

    The value is a Fraction in [0, 1) whose denominator is a power of p.
    """
    A = check_alternating(A, ctx)
    n = A.shape[0]
    if ctx.E in elementary_exponents(A, ctx):
        raise SingularMatrix("det A vanishes mod p^E")
    inv = rational_inverse(alternating_lift(A, ctx))
    return p_part(bilinear(check_vector(x, n), inv, check_vector(y, n)), ctx.p)


def precision_saturated(value: Fraction, ctx: PadicCtx) -> bool:
    """True when a pairing value uses the full p^-E denominator."""
    return value.denominator >= ctx.q


def cokernel_representatives(A, ctx: PadicCtx) -> list[list[int]]:
    """One integer vector per element of coker A (nonsingular A).

    With U A V = diag(p^e), the classes are U^{-1} c for c_i in [0, p^{e_i}).
    """
    A = check_alternating(A, ctx)
    exps, U, _ = smith_normal_form(A, ctx)
    if ctx.E in exps:
        raise SingularMatrix("det A vanishes mod p^E")
    Uinv = _backend.for_precision(ctx.p, ctx.E).inverse_mod(U, ctx.p, ctx.q)
    n = A.shape[0]
    reps = []
    for c in product(*(range(ctx.p**e) for e in exps)):
        reps.append([sum(int(Uinv[i, j]) * c[j] for j in range(n)) % ctx.q for i in range(n)])
    return reps


# ---------------------------------------------------------------- same pairing


class PairingClass:
    """Matrices A whose cokernel pairing coincides with that of D.

    Membership is the criterion A in D + D M_n(Z_p) D with rank(A mod p) =
    rank(D mod p). With U D V = diag(p^e) the first part reads
    (U (A - D) V)_ij = 0 mod p^(e_i + e_j).
    """

    def __init__(self, D, ctx: PadicCtx):
        self.D = check_alternating(D, ctx)
        self.ctx = ctx
        exps, U, V = smith_normal_form(self.D, ctx)
        if ctx.E in exps:
            raise SingularMatrix("reference matrix D is singular mod p^E")
        self.exponents = exps
        self.U = U
        self.V = V
        self.thresholds = np.add.outer(np.array(exps), np.array(exps)).astype(np.int64)
        self.rank_D = rank_mod_p(self.D, ctx)

    @property
    def n(self) -> int:
        return self.D.shape[0]

    def exact(self) -> bool:
        """Membership is decided exactly when E covers every threshold."""
        return int(self.thresholds.max(initial=0)) <= self.ctx.E

    def contains(self, A) -> bool:
        ctx = self.ctx
        A = check_alternating(A, ctx)
        q = ctx.q
        Delta = [[(int(a) - int(d)) % q for a, d in zip(ra, rd)] for ra, rd in zip(A, self.D)]
        U = [[int(x) for x in row] for row in self.U]
        V = [[int(x) for x in row] for row in self.V]
        n = self.n
        UD = [[sum(U[i][t] * Delta[t][j] for t in range(n)) % q for j in range(n)] for i in range(n)]
        for i in range(n):
            for j in range(n):
                x = sum(UD[i][t] * V[t][j] for t in range(n)) % q
                t = min(int(self.thresholds[i, j]), ctx.E)
                if x % ctx.p**t:
                    return False
        return rank_mod_p(A, ctx) == self.rank_D


def same_pairing_inverse(A, D, ctx: PadicCtx) -> bool:
    """A^{-1} - D^{-1} has p-integral entries (det A must be nonzero)."""
    try:
        Ainv = rational_inverse(alternating_lift(A, ctx))
    except SingularMatrix:
        return False
    Dinv = rational_inverse(alternating_lift(D, ctx))
    return all(p_integral(a - d, ctx.p) for ra, rd in zip(Ainv, Dinv) for a, d in zip(ra, rd))


def same_pairing(A, D, ctx: PadicCtx) -> bool:
    """Whether [,]_A = [,]_D, decided two independent ways that must agree."""
    D = check_alternating(D, ctx)
    if ctx.E in elementary_exponents(D, ctx):
        raise SingularMatrix("reference matrix D is singular mod p^E")
    way_inverse = same_pairing_inverse(A, D, ctx)
    # the congruences reach depth 2(E-1); read both integer lifts at 2E
    wide = ctx.with_precision(2 * ctx.E)
    way_congruence = PairingClass(alternating_lift(D, ctx), wide).contains(alternating_lift(A, ctx))
    if way_inverse != way_congruence:
        raise InternalInconsistency(
            f"pairing criteria disagree (inverse: {way_inverse}, congruence: {way_congruence})"
        )
    return way_inverse


def prob_pairing_match_mc(D, ctx: PadicCtx, trials: int, rng=None) -> float:
    """Monte Carlo frequency of Haar A with the same pairing as D."""
    rng = check_rng(rng)
    cls = PairingClass(D, ctx)
    if not cls.exact():
        raise UnresolvedPrecision(f"E={ctx.E} is below the congruence depth {int(cls.thresholds.max())}")
    kernels = _backend.for_precision(ctx.p, ctx.E)
    hits = 0
    for _ in range(trials):
        hits += bool(
            kernels.pairing_match_trial(
                rng, cls.n, ctx.p, ctx.E, cls.D, cls.U, cls.V, cls.thresholds, cls.rank_D
            )
        )
    return hits / trials
