from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isoclass import _backend
from isoclass.exceptions import InternalInconsistency, UnresolvedPrecision
from isoclass.padic_linalg import (
    CokernelShape,
    PadicCtx,
    Partition,
    cokernel_shape,
    det_integer,
    elementary_exponents,
    rank_mod_p,
    sample_unimodular,
    shape_from_exponents,
    smith_normal_form,
    symplectic_divisors,
)


def fraction_det(rows):
    """Plain Gaussian elimination over Q; independent of the package."""
    a = [[Fraction(x) for x in r] for r in rows]
    n = len(a)
    det = Fraction(1)
    for c in range(n):
        piv = next((i for i in range(c, n) if a[i][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            a[c], a[piv] = a[piv], a[c]
            det = -det
        det *= a[c][c]
        for i in range(c + 1, n):
            f = a[i][c] / a[c][c]
            a[i] = [x - f * y for x, y in zip(a[i], a[c])]
    return det


def val(x, p, cap):
    x = int(x)
    if x == 0:
        return cap
    v = 0
    while x % p == 0:
        x //= p
        v += 1
    return min(v, cap)


def exponents_by_minors(M, p, E):
    """Elementary divisor exponents from valuations of determinantal divisors."""
    rows, cols = len(M), len(M[0])
    big = 10**6
    dvals = [0]
    for k in range(1, min(rows, cols) + 1):
        best = big
        for R in combinations(range(rows), k):
            for C in combinations(range(cols), k):
                d = fraction_det([[M[i][j] for j in C] for i in R])
                best = min(best, val(int(d), p, big))
        dvals.append(best)
    exps = []
    for k in range(1, len(dvals)):
        if dvals[k] >= big:
            exps.append(E)
        else:
            exps.append(min(dvals[k] - dvals[k - 1], E))
    return sorted(exps)


class TestPartition:
    def test_sorted_and_equal(self):
        assert Partition([1, 2]) == Partition([2, 1]) == (2, 1)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            Partition([1, 0])

    def test_parse(self):
        assert Partition.parse("") == ()
        assert Partition.parse("2,1,1") == (2, 1, 1)
        assert Partition.parse("1,2") == (2, 1)
        with pytest.raises(ValueError):
            Partition.parse("1,a")

    def test_pretty(self):
        assert Partition([2, 1]).pretty(3) == "Z/9 ⊕ Z/3"
        assert Partition().pretty(5) == "0"

    def test_invariants(self):
        lam = Partition([3, 3, 1, 1])
        assert lam.order(2) == 256
        assert lam.p_rank == 4
        assert lam.is_symplectic()
        assert not Partition([2, 1]).is_symplectic()
        assert lam.label() == "3,3,1,1"


class TestPadicCtx:
    def test_validation(self):
        with pytest.raises(ValueError):
            PadicCtx(4, 3)
        with pytest.raises(ValueError):
            PadicCtx(2, 0)

    def test_q(self):
        assert PadicCtx(3, 4).q == 81
        assert PadicCtx(3, 4).with_precision(2).q == 9


class TestSmithNormalForm:
    def test_diagonalizes(self):
        ctx = PadicCtx(2, 5)
        rng = np.random.default_rng(1)
        for _ in range(20):
            M = rng.integers(0, ctx.q, size=(3, 4))
            exps, U, V = smith_normal_form(M, ctx)
            D = (U.astype(object) @ np.asarray(M, dtype=object) @ V.astype(object)) % ctx.q
            for i in range(3):
                for j in range(4):
                    expected = (ctx.p ** exps[i]) % ctx.q if i == j else 0
                    assert D[i, j] == expected

    def test_exponents_nondecreasing_with_sentinel(self):
        ctx = PadicCtx(3, 3)
        exps, _, _ = smith_normal_form([[9, 0], [0, 0]], ctx)
        assert exps == [2, 3]

    @pytest.mark.parametrize("p,E,shape", [(2, 4, (3, 3)), (3, 3, (3, 3)), (2, 6, (2, 3)), (5, 2, (3, 2))])
    def test_matches_determinantal_divisors(self, p, E, shape):
        ctx = PadicCtx(p, E)
        rng = np.random.default_rng(p * 100 + E)
        for _ in range(15):
            M = rng.integers(0, ctx.q, size=shape)
            # sprinkle in high valuations so nontrivial exponents appear
            M = (M * p ** rng.integers(0, E, size=shape)) % ctx.q
            exps, _, _ = smith_normal_form(M, ctx)
            assert sorted(exps) == exponents_by_minors(M.tolist(), p, E)
            assert elementary_exponents(M, ctx) == exps

    def test_kernel_agrees_with_python_snf(self):
        ctx = PadicCtx(2, 8)
        rng = np.random.default_rng(7)
        for _ in range(50):
            M = (rng.integers(0, ctx.q, size=(5, 5)) * 2 ** rng.integers(0, 4, size=(5, 5))) % ctx.q
            assert elementary_exponents(M, ctx) == smith_normal_form(M, ctx)[0]

    def test_wide_precision(self):
        ctx = PadicCtx(3, 50)
        M = [[3**40, 0], [0, 3**7 * 2]]
        assert elementary_exponents(M, ctx) == [7, 40]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_invariant_under_unimodular_change(self, seed):
        ctx = PadicCtx(3, 4)
        rng = np.random.default_rng(seed)
        M = (rng.integers(0, ctx.q, size=(3, 3)) * 3 ** rng.integers(0, 3, size=(3, 3))) % ctx.q
        U = sample_unimodular(3, ctx, rng).astype(object)
        V = sample_unimodular(3, ctx, rng).astype(object)
        N = (U @ M.astype(object) @ V) % ctx.q
        assert elementary_exponents(N, ctx) == elementary_exponents(M, ctx)


class TestCokernelShape:
    def test_free_and_torsion(self):
        ctx = PadicCtx(2, 6)
        shape = cokernel_shape([[0, 0, 0], [0, 4, 0], [0, 0, 1]], ctx)
        assert shape == CokernelShape(1, Partition([2]), True)

    def test_resolution_rule(self):
        assert shape_from_exponents([0, 4], 6).resolved
        assert not shape_from_exponents([0, 5], 6).resolved
        assert shape_from_exponents([0, 6], 6) == CokernelShape(1, Partition(), True)

    def test_symplectic_divisors(self):
        ctx = PadicCtx(2, 6)
        A = [[0, 4, 0, 0], [-4, 0, 0, 0], [0, 0, 0, 2], [0, 0, -2, 0]]
        assert symplectic_divisors(A, ctx) == [2, 2, 1, 1]

    def test_symplectic_divisors_unresolved(self):
        ctx = PadicCtx(2, 4)
        A = [[0, 8], [-8, 0]]
        with pytest.raises(UnresolvedPrecision):
            symplectic_divisors(A, ctx)

    def test_symplectic_divisors_rejects_non_alternating(self):
        with pytest.raises(ValueError):
            symplectic_divisors([[1, 0], [0, 1]], PadicCtx(2, 4))

    def test_internal_inconsistency_type(self):
        assert issubclass(InternalInconsistency, ArithmeticError)


class TestHelpers:
    def test_rank_mod_p(self):
        ctx = PadicCtx(3, 2)
        assert rank_mod_p([[3, 0], [0, 1]], ctx) == 1
        assert rank_mod_p(np.zeros((0, 0), dtype=np.int64), ctx) == 0

    def test_unimodular_is_invertible(self):
        ctx = PadicCtx(2, 6)
        rng = np.random.default_rng(3)
        for _ in range(20):
            assert rank_mod_p(sample_unimodular(4, ctx, rng), ctx) == 4

    def test_det_integer(self):
        rng = np.random.default_rng(5)
        for n in range(0, 6):
            M = rng.integers(-50, 50, size=(n, n))
            assert det_integer(M) == fraction_det(M.tolist())


def test_wide_and_compiled_snf_agree():
    rng = np.random.default_rng(11)
    fast, wide = _backend.compiled(), _backend.wide()
    for _ in range(30):
        M = (rng.integers(0, 2**10, size=(4, 4)) * 2 ** rng.integers(0, 5, size=(4, 4))) % 2**10
        a = fast.snf_exponents(M.astype(np.int64), 2, 10)
        b = wide.snf_exponents(M.astype(object), 2, 10)
        assert [int(x) for x in a] == [int(x) for x in b]
