from collections import Counter
from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from isoclass import _backend
from isoclass._validation import trial_rng
from isoclass.alt_model import StratumSpec, alternating_lift, cokernel_pairing, sample_alt_haar, sample_alt_stratum
from isoclass.exceptions import NotInS, TooLarge, UnresolvedPrecision
from isoclass.padic_linalg import PadicCtx, Partition, cokernel_shape
from isoclass.quadratic_space import (
    HyperbolicSpace,
    IsotropicSummand,
    component_sign,
    ct_pairing,
    enumerate_ogr,
    inner,
    intersect,
    intersection_dim_mod_p,
    intersection_generators,
    lift_ogr,
    q_eval,
    rst_extract,
    sample_ogr,
    sample_ogr_mod_p,
)
from isoclass.theory import ogr_count


def span(Z: IsotropicSummand):
    q, n = Z.ctx.q, Z.n
    return {
        tuple(sum(int(Z.basis[s, t]) * c[t] for t in range(n)) % q for s in range(2 * n))
        for c in product(range(q), repeat=n)
    }


class TestSpace:
    def test_form(self):
        space = HyperbolicSpace(2, PadicCtx(3, 2))
        assert q_eval([1, 2, 3, 4], space) == (3 + 8) % 9
        assert inner([1, 0, 0, 0], [0, 0, 1, 0], space) == 1

    def test_standard_summands(self):
        space = HyperbolicSpace(3, PadicCtx(2, 4))
        W = space.standard()
        assert W.is_isotropic() and W.is_direct_summand()
        assert intersect(W, space.complement()) == Partition()
        assert intersect(W, W) == Partition([4, 4, 4])

    def test_rejects_non_isotropic(self):
        space = HyperbolicSpace(1, PadicCtx(2, 3))
        with pytest.raises(ValueError):
            IsotropicSummand.from_basis([[1], [1]], space)

    def test_rejects_non_summand(self):
        space = HyperbolicSpace(1, PadicCtx(2, 3))
        with pytest.raises(ValueError):
            IsotropicSummand.from_basis([[2], [0]], space)

    def test_canonical_form_identifies_spans(self):
        ctx = PadicCtx(3, 3)
        space = HyperbolicSpace(2, ctx)
        Z = sample_ogr(space, 1)
        g = np.array([[2, 1], [1, 1]], dtype=object)  # invertible mod 3
        Z2 = IsotropicSummand.from_basis((Z.basis.astype(object) @ g) % ctx.q, space)
        assert Z == Z2 and hash(Z) == hash(Z2)


class TestSampling:
    def test_samples_are_isotropic_summands(self):
        rng = np.random.default_rng(0)
        for n, p, E in [(1, 2, 5), (3, 2, 6), (4, 3, 4), (2, 5, 3)]:
            space = HyperbolicSpace(n, PadicCtx(p, E))
            for _ in range(5):
                Z = sample_ogr(space, rng)
                assert Z.is_isotropic() and Z.is_direct_summand()

    def test_wide_precision_sample(self):
        space = HyperbolicSpace(2, PadicCtx(2, 40))
        Z = sample_ogr(space, 3)
        assert Z.basis.dtype == object and Z.is_isotropic()

    def test_lift_reduces_back(self):
        rng = np.random.default_rng(1)
        space = HyperbolicSpace(3, PadicCtx(3, 1))
        Z = sample_ogr_mod_p(space, rng)
        for _ in range(3):
            Y = lift_ogr(Z, rng)
            assert Y.ctx.E == Z.ctx.E + 1
            assert Y.reduce(Z.ctx.E) == Z
            Z = Y

    def test_mod_p_points_uniform(self):
        rng = np.random.default_rng(2)
        space = HyperbolicSpace(2, PadicCtx(3, 1))
        counts = Counter(sample_ogr_mod_p(space, rng) for _ in range(4000))
        assert len(counts) == ogr_count(2, 3)
        expected = 4000 / ogr_count(2, 3)
        assert max(abs(c - expected) for c in counts.values()) < 4 * np.sqrt(expected)

    def test_backends_agree(self):
        fast, wide = _backend.compiled(), _backend.wide()
        for t in range(20):
            a = fast.ogr_sample(trial_rng(5, t), 3, 2, 6)
            b = wide.ogr_sample(trial_rng(5, t), 3, 2, 6)
            assert [int(x) for x in a.ravel()] == [int(x) for x in b.ravel()]


class TestEnumeration:
    @pytest.mark.parametrize("n,q", [(0, 2), (1, 2), (1, 3), (1, 4), (2, 2), (2, 3), (2, 4), (3, 2)])
    def test_counts(self, n, q):
        points = enumerate_ogr(n, q)
        assert len(points) == ogr_count(n, q)
        assert len(set(points)) == len(points)

    def test_distinct_spans(self):
        points = enumerate_ogr(2, 2)
        spans = {frozenset(span(Z)) for Z in points}
        assert len(spans) == len(points)

    def test_guard(self):
        with pytest.raises(TooLarge):
            enumerate_ogr(4, 9)


class TestIntersections:
    def test_symmetric(self):
        rng = np.random.default_rng(3)
        space = HyperbolicSpace(3, PadicCtx(2, 6))
        for _ in range(10):
            Z, W = sample_ogr(space, rng), sample_ogr(space, rng)
            assert intersect(Z, W) == intersect(W, Z)

    def test_graph_meets_standard_in_kernel(self):
        ctx = PadicCtx(2, 10)
        rng = np.random.default_rng(4)
        space = HyperbolicSpace(5, ctx)
        for _ in range(10):
            A, _ = sample_alt_stratum(StratumSpec(5, 1), ctx, rng)
            shape = cokernel_shape(A, ctx)
            sample = rst_extract(space.graph(A))
            assert sample.resolved
            assert sample.r == shape.free_rank == 1
            assert sample.T == shape.tors

    def test_parity_of_three(self):
        rng = np.random.default_rng(5)
        for n, p in [(3, 2), (4, 3)]:
            space = HyperbolicSpace(n, PadicCtx(p, 1))
            for _ in range(30):
                Z = [sample_ogr_mod_p(space, rng) for _ in range(3)]
                total = (
                    intersection_dim_mod_p(Z[0], Z[1])
                    + intersection_dim_mod_p(Z[1], Z[2])
                    + intersection_dim_mod_p(Z[0], Z[2])
                )
                assert total % 2 == n % 2

    def test_component_sign(self):
        space = HyperbolicSpace(2, PadicCtx(2, 1))
        assert component_sign(space.standard()) == "even"
        assert component_sign(space.complement()) == "even"
        signs = Counter(component_sign(Z) for Z in enumerate_ogr(2, 2))
        assert signs == {"even": 3, "odd": 3}

    def test_rst_needs_precision(self):
        space = HyperbolicSpace(2, PadicCtx(2, 2))
        with pytest.raises(ValueError):
            rst_extract(space.standard())


class TestCasselsTate:
    def _graph_case(self, seed):
        ctx = PadicCtx(2, 12)
        rng = np.random.default_rng(seed)
        space = HyperbolicSpace(4, ctx)
        while True:
            A = sample_alt_haar(4, ctx, rng)
            shape = cokernel_shape(A, ctx)
            if shape.free_rank == 0 and shape.resolved and shape.tors and max(shape.tors) <= 3:
                return ctx, A, space.graph(A), space.standard(), max(shape.tors)

    def test_sign_convention_against_cokernel_pairing(self):
        for seed in range(5):
            ctx, A, Z, W, k = self._graph_case(seed)
            L = alternating_lift(A, ctx)
            vecs, orders, free = intersection_generators(Z, W, k)
            assert not any(free)
            pk = ctx.p**k
            images = []
            for v in vecs:
                x = v[: Z.n]
                Lx = [sum(int(L[i, j]) * x[j] for j in range(Z.n)) for i in range(Z.n)]
                assert all(c % pk == 0 for c in Lx)
                images.append([c // pk for c in Lx])
            for v, a in zip(vecs, images):
                for w, b in zip(vecs, images):
                    ct = ct_pairing(Z, W, v, w, k)
                    ck = cokernel_pairing(A, a, b, ctx)
                    assert (ct + ck) % 1 == 0

    def test_well_defined_and_alternating(self):
        ctx, A, Z, W, k = self._graph_case(10)
        vecs, _, _ = intersection_generators(Z, W, k)
        rng = np.random.default_rng(11)
        for v in vecs:
            assert ct_pairing(Z, W, v, v, k) == 0
            for w in vecs:
                base = ct_pairing(Z, W, v, w, k)
                assert all(ct_pairing(Z, W, v, w, k, rng=rng) == base for _ in range(3))
                assert (base + ct_pairing(Z, W, w, v, k)) % 1 == 0

    def test_values_in_unit_interval(self):
        ctx, A, Z, W, k = self._graph_case(12)
        vecs, _, _ = intersection_generators(Z, W, k)
        for v in vecs:
            for w in vecs:
                val = ct_pairing(Z, W, v, w, k)
                assert isinstance(val, Fraction) and 0 <= val < 1

    def test_not_in_intersection(self):
        ctx = PadicCtx(2, 6)
        space = HyperbolicSpace(2, ctx)
        with pytest.raises(NotInS):
            ct_pairing(space.standard(), space.complement(), [1, 0, 0, 0], [0, 0, 0, 0], 2)

    def test_needs_double_precision(self):
        space = HyperbolicSpace(2, PadicCtx(2, 3))
        W = space.standard()
        with pytest.raises(UnresolvedPrecision):
            ct_pairing(W, W, [1, 0, 0, 0], [1, 0, 0, 0], 2)
