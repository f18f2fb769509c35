"""Closed-form laws, counting formulas, and symplectic automorphism counts.

Finite products are returned as exact ``Fraction`` values; infinite products
are floats with an explicit truncation bound.
"""
from __future__ import annotations

import math
import os
import sys
import threading
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from itertools import product
from pathlib import Path

import numpy as np

from . import _backend
from ._validation import is_prime, prime_power
from .exceptions import InvalidParity, TooLarge
from .padic_linalg import Partition

CACHE_VERSION = 1
CACHE_HEADER = f"# isoclass sp_order cache v{CACHE_VERSION}"
EXHAUSTIVE_GROUP_LIMIT = 1024
EXHAUSTIVE_COUNT_LIMIT = 5 * 10**6
BRUTE_FORCE_GUARD = 10**7


@dataclass(frozen=True)
class SymplecticType:
    """Finite abelian p-group admitting a nondegenerate alternating pairing."""

    p: int
    part: Partition

    def __post_init__(self):
        if not is_prime(self.p):
            raise ValueError(f"p must be prime, got {self.p}")
        part = Partition(self.part)
        if not part.is_symplectic():
            raise ValueError(f"exponents of a symplectic group come in pairs, got {list(part)}")
        object.__setattr__(self, "part", part)

    @classmethod
    def of(cls, p: int, exps=()) -> "SymplecticType":
        return cls(p, Partition(exps))

    @property
    def order(self) -> int:
        return self.p ** sum(self.part)

    @property
    def p_rank(self) -> int:
        return len(self.part)

    @property
    def half(self) -> tuple[int, ...]:
        """Exponents of one Lagrangian half: G = (half) x (half)."""
        return tuple(self.part[::2])


def _as_type(G, p: int | None = None) -> SymplecticType:
    if isinstance(G, SymplecticType):
        return G
    if p is None:
        raise TypeError("a bare partition needs the prime p")
    return SymplecticType(p, Partition(G))


# ---------------------------------------------------------------- products


def gl_alt_ratio(m: int, p: int) -> Fraction:
    """Share of invertible matrices among m x m alternating matrices over F_p."""
    if m % 2 or m < 0:
        raise InvalidParity(f"m must be even and >= 0, got {m}")
    out = Fraction(1)
    for i in range(1, m // 2 + 1):
        out *= 1 - Fraction(1, p ** (2 * i - 1))
    return out


def _alt_tail(K: int, p: int) -> float:
    """Upper bound for sum_{i > K} p^(1-2i)."""
    return p ** (1 - 2 * (K + 1)) / (1 - p**-2)


def euler_alt_bounds(r: int, p: int, tol: float = 1e-12) -> tuple[float, float]:
    """Interval certified to contain prod_{i > r} (1 - p^(1-2i))."""
    if r < 0:
        raise ValueError("r must be >= 0")
    value, K = 1.0, r
    while True:
        K += 1
        value *= 1 - p ** (1 - 2 * K)
        tail = _alt_tail(K, p)
        if value * tail < tol:
            # each factor adds at most one rounding error
            slack = (K - r + 2) * sys.float_info.epsilon
            return value * (1 - tail) * (1 - slack), min(1.0, value * (1 + slack))


def euler_alt(r: int, p: int, tol: float = 1e-12) -> float:
    """prod_{i > r} (1 - p^(1-2i)) to absolute error below ``tol``."""
    lo, hi = euler_alt_bounds(r, p, tol)
    return (lo + hi) / 2


def igusa(n: int, s: int, p: int) -> Fraction:
    """Mean of |det A|_p^s over Haar alternating n x n matrices."""
    if n % 2 or n < 0:
        raise InvalidParity(f"n must be even and >= 0, got {n}")
    if s < 0:
        raise ValueError("s must be >= 0")
    out = Fraction(1)
    for i in range(1, n // 2 + 1):
        out *= (1 - Fraction(1, p ** (2 * i - 1))) / (1 - Fraction(1, p ** (2 * i - 1 + 2 * s)))
    return out


def alt_rank_count(n: int, rank: int, p: int) -> int:
    """Number of n x n alternating matrices over F_p of the given rank."""
    if rank % 2 or rank < 0 or rank > n:
        return 0
    k = rank // 2
    num = p ** (k * (k - 1))
    for i in range(rank):
        num *= p ** (n - i) - 1
    den = 1
    for i in range(1, k + 1):
        den *= p ** (2 * i) - 1
    return num // den


def prob_kernel_at_least_half(n: int, p: int) -> Fraction:
    """Probability that a uniform alternating n x n matrix over F_p has dim ker >= n/2."""
    total = p ** (n * (n - 1) // 2)
    hits = sum(alt_rank_count(n, rank, p) for rank in range(0, n + 1, 2) if 2 * (n - rank) >= n)
    return Fraction(hits, total)


# ---------------------------------------------------------------- automorphisms


def _elements(part: Partition, p: int) -> np.ndarray:
    """All elements of prod Z/p^part_s as coordinate rows."""
    return np.array(list(product(*(range(p**e) for e in part))), dtype=np.int64).reshape(-1, len(part))


def _pairing_table(G: SymplecticType, coords: np.ndarray) -> np.ndarray:
    """[x, y] * p^top mod p^top for the standard pairing, coordinates (e1, f1, e2, f2, ...)."""
    p, half = G.p, G.half
    top = p ** half[0] if half else 1
    table = np.zeros((coords.shape[0], coords.shape[0]), dtype=np.int64)
    for j, mu in enumerate(half):
        scale = p ** (half[0] - mu)
        e, f = coords[:, 2 * j], coords[:, 2 * j + 1]
        table = (table + scale * (np.outer(e, f) - np.outer(f, e))) % top
    return table


def sp_order_exhaustive(G: SymplecticType) -> int:
    """Count pairing-preserving automorphisms by enumerating generator images.

    An automorphism is fixed by the images of the standard generators
    e_1, f_1, e_2, ...; each image must be killed by the generator's order
    and the images must pair exactly like the generators. Any such tuple
    defines an injective, hence bijective, homomorphism.
    """
    if G.order > EXHAUSTIVE_GROUP_LIMIT:
        raise TooLarge(f"#G = {G.order} exceeds the exhaustive limit {EXHAUSTIVE_GROUP_LIMIT}")
    if not G.part:
        return 1
    p, part = G.p, G.part
    coords = _elements(part, p)
    table = _pairing_table(G, coords)
    radix = [p**e for e in part]
    gens = []
    for s in range(len(part)):
        idx = 0
        for t, base in enumerate(radix):
            idx = idx * base + (1 if t == s else 0)
        gens.append(idx)
    cand_lists = []
    for s, e in enumerate(part):
        killed = np.all((coords * p**e) % np.array(radix) == 0, axis=1)
        cand_lists.append(np.nonzero(killed)[0])
    width = max(len(c) for c in cand_lists)
    cand = np.zeros((len(part), width), dtype=np.int64)
    ncand = np.zeros(len(part), dtype=np.int64)
    for s, c in enumerate(cand_lists):
        cand[s, : len(c)] = c
        ncand[s] = len(c)
    target = table[np.ix_(gens, gens)].astype(np.int64)
    return int(_backend.compiled().count_pairing_homs(table, cand, ncand, target))


def _torsion_size(part, p: int, t: int) -> int:
    """#H[p^t] for H of type part."""
    return p ** sum(min(e, t) for e in part)


def sp_order_levels(G: SymplecticType) -> int:
    """Orbit count along the standard hyperbolic decomposition.

    Write G = H_1 + ... + H_k with hyperbolic planes H_i = (Z/p^mu_i)^2,
    mu_1 >= ... >= mu_k, and G_i = H_i + ... + H_k. A symplectic basis is
    built one plane at a time: the image (e, f) of the i-th plane is any
    pair in G_i with [e, f] = p^-mu_i, and its orthogonal complement is again
    of the type of G_{i+1}. For fixed e the admissible f form a coset of the
    kernel of f -> [e, f], so there are #G_i / p^mu_i of them when e has order
    p^mu_i and none otherwise.
    """
    p, half = G.p, G.half
    total = 1
    for i, mu in enumerate(half):
        rest = [m for m in half[i:] for _ in range(2)]
        size = p ** sum(rest)
        good_e = size - _torsion_size(rest, p, mu - 1)
        total *= good_e * (size // p**mu)
    return total


class _SpCache:
    """Memo for sp_order backed by a small versioned text file."""

    def __init__(self):
        self._lock = threading.RLock()
        self._memo: dict[tuple[int, tuple[int, ...]], int] = {}
        self._loaded_from: Path | None = None

    @staticmethod
    def path() -> Path:
        env = os.environ.get("ISOCLASS_CACHE")
        if env:
            return Path(env)
        base = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
        return Path(base) / "isoclass" / "sp_order.txt"

    @staticmethod
    def parse_line(line: str):
        key, value = line.split("=")
        p_text, part_text = key.split(":")
        return (int(p_text), tuple(Partition.parse(part_text))), int(value)

    @staticmethod
    def format_line(p: int, part, order: int) -> str:
        return f"{p}:{','.join(str(e) for e in part)}={order}"

    def _load(self):
        path = self.path()
        if self._loaded_from == path:
            return
        self._memo.clear()
        self._loaded_from = path
        try:
            lines = path.read_text().splitlines()
        except OSError:
            return
        if not lines or lines[0].strip() != CACHE_HEADER:
            return
        for line in lines[1:]:
            line = line.strip()
            if line and not line.startswith("#"):
                try:
                    key, value = self.parse_line(line)
                except ValueError:
                    continue
                self._memo[key] = value

    def get(self, p: int, part) -> int | None:
        with self._lock:
            self._load()
            return self._memo.get((p, tuple(part)))

    def put(self, p: int, part, order: int):
        with self._lock:
            self._load()
            self._memo[(p, tuple(part))] = order
            path = self.path()
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                fresh = not path.exists() or path.stat().st_size == 0
                with path.open("a") as fh:
                    if fresh:
                        fh.write(CACHE_HEADER + "\n")
                    fh.write(self.format_line(p, part, order) + "\n")
            except OSError:
                pass

    def entries(self) -> dict:
        with self._lock:
            self._load()
            return dict(self._memo)

    def clear(self):
        with self._lock:
            self._memo.clear()
            self._loaded_from = None
            try:
                self.path().unlink()
            except OSError:
                pass


sp_cache = _SpCache()


def sp_order(G, p: int | None = None, method: str = "auto") -> int:
    """#Sp(G): automorphisms of G preserving its standard pairing.

    ``method`` is "exhaustive" (enumerate generator images), "levels" (orbit
    count) or "auto", which enumerates whenever the search is small and
    counts orbits otherwise. Results are memoized on disk.
    """
    G = _as_type(G, p)
    if method == "exhaustive":
        return sp_order_exhaustive(G)
    if method == "levels":
        return sp_order_levels(G)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    cached = sp_cache.get(G.p, G.part)
    if cached is not None:
        return cached
    estimate = sp_order_levels(G)
    if G.order <= EXHAUSTIVE_GROUP_LIMIT and estimate <= EXHAUSTIVE_COUNT_LIMIT:
        order = sp_order_exhaustive(G)
    else:
        order = estimate
    sp_cache.put(G.p, G.part, order)
    return order


def w_weight(G, p: int | None = None) -> Fraction:
    """#G / #Sp(G)."""
    G = _as_type(G, p)
    return Fraction(G.order, sp_order(G))


def symplectic_types(p: int, k: int) -> list[SymplecticType]:
    """All symplectic types of order p^(2k)."""
    return [SymplecticType(p, Partition(e for e in mu for _ in range(2))) for mu in integer_partitions(k)]


def integer_partitions(k: int, largest: int | None = None):
    largest = k if largest is None else largest
    if k == 0:
        yield ()
        return
    for first in range(min(k, largest), 0, -1):
        for rest in integer_partitions(k - first, first):
            yield (first,) + rest


def w_sum_exact(p: int, k: int) -> Fraction:
    """p^-k prod_{j=1}^k (1 - p^-2j)^-1."""
    out = Fraction(1, p**k)
    for j in range(1, k + 1):
        out /= 1 - Fraction(1, p ** (2 * j))
    return out


def w_sum_enumerated(p: int, k: int) -> Fraction:
    return sum((w_weight(G) for G in symplectic_types(p, k)), Fraction(0))


def factorize(N: int) -> dict[int, int]:
    out, d = {}, 2
    while d * d <= N:
        while N % d == 0:
            out[d] = out.get(d, 0) + 1
            N //= d
        d += 1
    if N > 1:
        out[N] = out.get(N, 0) + 1
    return out


def w_sum_order(N: int) -> Fraction:
    """Sum of w_G over symplectic abelian groups of order N^2 (all primes)."""
    return reduce(lambda acc, pk: acc * w_sum_exact(*pk), factorize(N).items(), Fraction(1))


# ---------------------------------------------------------------- cokernel laws


def surj_count(G, n: int, p: int | None = None) -> Fraction:
    """#Surj(Z_p^n, G) = #G^n prod_{i<d} (1 - p^(i-n)), d = dim G[p].

    ``G`` is a SymplecticType or, with ``p`` given, any partition.
    """
    if isinstance(G, SymplecticType):
        p, part = G.p, G.part
    elif p is None:
        raise TypeError("a bare partition needs the prime p")
    else:
        part = Partition(G)
    out = Fraction(p ** sum(part)) ** n
    for i in range(len(part)):
        out *= 1 - Fraction(p**i, p**n)
    return out


def surj_count_bruteforce(part, p: int, n: int) -> int:
    """Count n-tuples of elements generating the group of type ``part``."""
    part = Partition(part)
    size = p ** sum(part)
    if size**n > BRUTE_FORCE_GUARD:
        raise TooLarge(f"{size**n} tuples exceed the guard")
    radix = tuple(p**e for e in part)
    elems = list(product(*(range(b) for b in radix)))

    def add(x, y):
        return tuple((a + b) % m for a, b, m in zip(x, y, radix))

    zero = tuple(0 for _ in radix)
    count = 0
    for tup in product(elems, repeat=n):
        span = {zero}
        for g in tup:
            frontier = set(span)
            while frontier:
                new = {add(h, g) for h in frontier} - span
                span |= new
                frontier = new
        count += len(span) == size
    return count


def pi_finite(G, n: int, p: int | None = None) -> Fraction:
    """Probability that coker of a Haar alternating n x n matrix is G."""
    G = _as_type(G, p)
    d = G.p_rank
    if n % 2 or n < d:
        raise InvalidParity(f"need n even and n >= dim G[p] = {d}, got n={n}")
    return (
        surj_count(G, n)
        / sp_order(G)
        * gl_alt_ratio(n - d, G.p)
        * Fraction(G.order) ** (1 - n)
    )


def pi_limit(G, r: int, p: int | None = None, tol: float = 1e-12) -> float:
    """Limit probability of G as torsion of coker in the corank-r stratum."""
    G = _as_type(G, p)
    return float(Fraction(G.order) ** (1 - r) / sp_order(G)) * euler_alt(r, G.p, tol)


def limit_law(p: int, r: int, max_k: int) -> tuple[dict[Partition, float], float]:
    """pi_limit over all types of order <= p^(2 max_k), and the uncovered mass."""
    law = {}
    for k in range(max_k + 1):
        for G in symplectic_types(p, k):
            law[G.part] = pi_limit(G, r)
    return law, max(0.0, 1.0 - sum(law.values()))


def finite_law(p: int, n: int, r: int, max_k: int) -> tuple[dict[Partition, Fraction], Fraction]:
    """stratum_finite over all types with 2k <= n - r, k <= max_k, and the remainder."""
    law = {}
    for k in range(max_k + 1):
        for G in symplectic_types(p, k):
            if G.p_rank <= n - r:
                law[G.part] = stratum_finite(G, n, r)
    return law, 1 - sum(law.values(), Fraction(0))


def stratum_finite(G, n: int, r: int, p: int | None = None) -> Fraction:
    """Probability of G as torsion of coker for the normalized measure on the corank-r stratum."""
    G = _as_type(G, p)
    m = n - r
    if r < 0 or m < 0 or m % 2 or m < G.p_rank:
        raise InvalidParity(f"need n - r even and >= {G.p_rank}, got n={n}, r={r}")
    return Fraction(G.order) ** (-r) * pi_finite(G, m) / igusa(m, r, G.p)


# ---------------------------------------------------------------- orthogonal Grassmannian & moments


def ogr_count(n: int, q: int) -> int:
    """#OGr_n(Z/q) = q^(n(n-1)/2) prod_{i=1}^n (1 + p^(i-n))."""
    p, _ = prime_power(q)
    out = Fraction(q ** (n * (n - 1) // 2))
    for i in range(1, n + 1):
        out *= 1 + Fraction(p**i, p**n)
    if out.denominator != 1:
        raise ArithmeticError(f"non-integral count {out}")
    return int(out)


def moment_finite(m: int, n: int, q: int) -> Fraction:
    """Average number of injections (Z/q)^m -> Z/q cap W/q over OGr_n(Z/q)^2."""
    if not 0 <= m <= n:
        raise ValueError(f"need 0 <= m <= n, got m={m}, n={n}")
    p, _ = prime_power(q)
    out = Fraction(q ** (m * (m + 1) // 2))
    for i in range(m):
        out *= 1 - Fraction(p**i, p**n)
    for i in range(n - m, n):
        out /= 1 + Fraction(1, p**i)
    return out


def moment_limit(m: int, q: int) -> int:
    return q ** (m * (m + 1) // 2)


def count_injections(G, m: int, q: int) -> int:
    """Brute-force count of injective homomorphisms (Z/q)^m -> G."""
    part = Partition(G)
    p, _ = prime_power(q)
    radix = tuple(p**e for e in part)
    killed = [x for x in product(*(range(b) for b in radix)) if all(q * c % b == 0 for c, b in zip(x, radix))]
    if len(killed) ** m > BRUTE_FORCE_GUARD:
        raise TooLarge(f"{len(killed) ** m} tuples exceed the guard")
    coeffs = [c for c in product(range(q), repeat=m) if any(c)]
    count = 0
    for tup in product(killed, repeat=m):
        if all(
            any(sum(c[j] * tup[j][s] for j in range(m)) % radix[s] for s in range(len(radix)))
            for c in coeffs
        ):
            count += 1
    return count


def injection_count(G, m: int, q: int) -> int:
    """Closed count of injections (Z/q)^m -> G.

    A map from (Z/q)^m is injective iff it is injective on the socle, i.e.
    iff the images multiplied by q/p are independent in V = (q/p) G[q].
    """
    part = Partition(G)
    p, e = prime_power(q)
    killed = _torsion_size(part, p, e)
    dim_v = sum(1 for lam in part if lam >= e)
    size_v = p**dim_v
    out = (killed // size_v) ** m
    for i in range(m):
        out *= max(size_v - p**i, 0)
    return out


# ---------------------------------------------------------------- misc laws


def prob_same_pairing(e_list, n: int, p: int) -> Fraction:
    """Probability that a Haar alternating A has the pairing of standard D."""
    m = 2 * sum(1 for e in e_list if e == 0)
    det_abs = Fraction(1, p ** (2 * sum(e_list)))
    return gl_alt_ratio(m, p) * det_abs ** (n - 1)


def prob_nonzero_T(r: int, p: int) -> float:
    return 1.0 - euler_alt(r, p)


def schubert_dim(n: int, r: int) -> int:
    return (n - r) * (n + r - 1) // 2


def stratum_dim(n: int, r: int) -> int:
    return math.comb(n, 2) - math.comb(r, 2)
