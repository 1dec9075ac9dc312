import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose, assert_array_equal

from aghint import ndiff as nd
from aghint.disparity import (
    DisparityError,
    DisparityMatrix,
    NeighborhoodDisparity,
    bucketize,
    disparity,
    disparity_continuous,
    disparity_discrete,
    disparity_matrix,
    min_max,
    neighborhood_disparity,
)
from aghint.hin import SynthSpec, synth_hin
from aghint.pathsample import LazyDisparity
from conftest import make_graph, random_hin

PROPERTY = settings(max_examples=150, deadline=None)


def binary_pair(max_dim=16):
    return st.integers(1, max_dim).flatmap(
        lambda d: st.tuples(arrays(np.int8, d, elements=st.integers(0, 1)),
                            arrays(np.int8, d, elements=st.integers(0, 1))))


def real_pair(max_dim=8):
    finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
    return st.integers(1, max_dim).flatmap(
        lambda d: st.tuples(arrays(np.float64, d, elements=finite),
                            arrays(np.float64, d, elements=finite))).filter(
        lambda p: np.linalg.norm(p[0]) > 1e-6 and np.linalg.norm(p[1]) > 1e-6)


def _support(ids, d=6):
    x = np.zeros(d)
    x[list(ids)] = 1
    return x


class TestElementOps:
    def test_identical_sets(self):
        assert disparity_discrete(_support({1, 2}), _support({1, 2})) == 0.0

    def test_disjoint_sets(self):
        assert disparity_discrete(_support({0}), _support({3, 4})) == 1.0

    def test_overlapping_sets(self):
        assert disparity_discrete(_support({1, 2, 3}), _support({2, 3, 4})) == pytest.approx(0.5)

    def test_both_empty_and_one_empty(self):
        assert disparity_discrete(np.zeros(4), np.zeros(4)) == 0.0
        assert disparity_discrete(np.zeros(4), _support({1}, 4)) == 1.0

    def test_discrete_errors(self):
        with pytest.raises(DisparityError):
            disparity_discrete(np.ones(3), np.ones(4))
        with pytest.raises(DisparityError):
            disparity_discrete(np.array([0, 2]), np.array([1, 0]))

    def test_cosine_examples(self):
        assert disparity_continuous([2.0, 1.0], [2.0, 1.0]) == pytest.approx(0.0, abs=1e-15)
        assert disparity_continuous([1.0, 0.0], [0.0, 1.0]) == 1.0
        assert disparity_continuous([1.0, 1.0], [1.0, 0.0]) == pytest.approx(1 - 1 / np.sqrt(2))
        assert disparity_continuous([1.0, 1.0], [1.0, 0.0]) == pytest.approx(0.29289, abs=1e-5)

    def test_negative_cosine_clamped(self):
        assert disparity_continuous([1.0, 0.0], [-1.0, 0.0]) == 1.0

    def test_zero_vector_signalled(self):
        with pytest.raises(DisparityError):
            disparity_continuous([0.0, 0.0], [1.0, 0.0])

    def test_dispatch(self):
        assert disparity([1, 0], [1, 0], "discrete") == 0.0
        with pytest.raises(DisparityError):
            disparity([1], [1], "ordinal")


class TestElementProperties:
    @PROPERTY
    @given(binary_pair())
    def test_discrete_symmetric_in_range(self, pair):
        a, b = pair
        d = disparity_discrete(a, b)
        assert d == disparity_discrete(b, a)
        assert 0.0 <= d <= 1.0

    @PROPERTY
    @given(real_pair())
    def test_continuous_symmetric_in_range(self, pair):
        a, b = pair
        d = disparity_continuous(a, b)
        assert d == disparity_continuous(b, a)
        assert 0.0 <= d <= 1.0


class TestMatrix:
    def test_identical_attributes_all_zero(self):
        g = make_graph([0, 0, 0, 1], [(0, 3, 0), (1, 3, 0), (2, 3, 0)], target_attrs=np.ones((3, 4)))
        assert np.all(disparity_matrix(g).values == 0)

    def test_two_disjoint_targets(self):
        g = make_graph([0, 0, 1], [(0, 2, 0), (1, 2, 0)], target_attrs=[[1, 0], [0, 1]])
        assert_array_equal(disparity_matrix(g).values, [[0, 1], [1, 0]])

    def test_matches_element_ops_on_synth(self):
        g = synth_hin(SynthSpec(num_target=300, rho=0.8))
        D = disparity_matrix(g)
        rng = np.random.default_rng(0)
        x = g.target_attributes
        for i, j in rng.integers(0, g.num_targets, size=(20, 2)):
            want = 0.0 if i == j else disparity_discrete(x[i], x[j])
            assert D.values[i, j] == pytest.approx(want, abs=1e-7)

    def test_continuous_kind(self):
        g = random_hin(4, kind="continuous")
        D = disparity_matrix(g)
        x = g.target_attributes
        assert D.kind == "continuous"
        assert D.values[0, 1] == pytest.approx(disparity_continuous(x[0], x[1]), abs=1e-6)

    def test_lazy_rows_equal_dense(self):
        g = synth_hin(SynthSpec(num_target=120))
        D = disparity_matrix(g)
        lazy = LazyDisparity(g)
        for i in (0, 17, 119):
            assert_allclose(lazy.row(i), D.row(i), atol=1e-7)

    @PROPERTY
    @given(st.integers(0, 10_000), st.sampled_from(["discrete", "continuous"]))
    def test_matrix_invariants(self, seed, kind):
        g = random_hin(seed, n=int(seed % 20) + 6, kind=kind)
        v = disparity_matrix(g).values
        assert np.isfinite(v).all()
        assert_array_equal(v, v.T)
        assert np.all(np.diag(v) == 0)
        assert v.min() >= 0 and v.max() <= 1


class TestNeighborhood:
    def test_raw_value_is_mean_over_neighbors(self):
        # target 0 reaches targets 1 and 2 through aux 3; 1 and 2 only reach 0 within k=2
        attrs = np.array([[1, 1, 1, 1, 1], [1, 1, 1, 1, 0], [1, 1, 1, 0, 0]], dtype=float)
        D = np.array([[0, 0.2, 0.4], [0.2, 0, 0.3], [0.4, 0.3, 0]])
        g = make_graph([0, 0, 0, 1], [(0, 3, 0), (1, 3, 0), (2, 3, 0)], target_attrs=attrs)
        nd_ = neighborhood_disparity(g, 2, DisparityMatrix(D, "discrete"))
        assert nd_.raw_values[0] == pytest.approx(0.3)

    def test_one_defined_node_normalizes_to_zero(self):
        g = make_graph([0, 0, 1, 0], [(0, 2, 0), (1, 2, 0)],
                       target_attrs=[[1, 0, 0], [1, 1, 0], [0, 0, 1]])
        nd_ = neighborhood_disparity(g, 2)
        # targets 0 and 1 are defined, target 2 (global 3) is isolated
        assert_array_equal(nd_.defined_mask, [True, True, False])
        assert np.isnan(nd_.values[2])
        assert_array_equal(nd_.values[:2], [0.0, 0.0])

    def test_min_max_examples(self):
        assert_allclose(min_max(np.array([0.1, 0.5])), [0.0, 1.0])
        assert_array_equal(min_max(np.array([0.3, 0.3, 0.3])), [0, 0, 0])
        assert_array_equal(min_max(np.array([0.3])), [0])

    def test_no_defined_node_raises(self):
        g = make_graph([0, 0, 1], [(0, 2, 0)])
        with pytest.raises(DisparityError):
            neighborhood_disparity(g, 3)

    def test_larger_k_never_shrinks_defined_set(self):
        g = random_hin(5, n=40, p=0.05)
        prev = None
        for k in range(1, 6):
            try:
                mask = neighborhood_disparity(g, k).defined_mask
            except DisparityError:
                mask = np.zeros(g.num_targets, dtype=bool)
            if prev is not None:
                assert np.all(mask[prev])
            prev = mask

    def test_matrix_and_row_paths_agree(self):
        g = synth_hin(SynthSpec(num_target=100))
        a = neighborhood_disparity(g, 2)
        b = neighborhood_disparity(g, 2, disparity_matrix(g))
        assert_allclose(a.raw_values, b.raw_values, atol=1e-6)


class TestBucketize:
    def _nd(self, values):
        v = np.asarray(values, dtype=float)
        return NeighborhoodDisparity(v, v, ~np.isnan(v), 2)

    def test_examples(self):
        b = bucketize(self._nd([0.0, 1.0, 0.39, np.nan]), 5)
        assert_array_equal(b.bucket_of, [0, 4, 1, -1])
        assert_allclose(b.boundaries, [0, 0.2, 0.4, 0.6, 0.8, 1.0])
        assert_array_equal(b.counts(), [1, 1, 0, 0, 1])

    def test_needs_two_buckets(self):
        with pytest.raises(ValueError):
            bucketize(self._nd([0.5]), 1)

    @PROPERTY
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.integers(2, 12))
    def test_every_defined_node_in_one_bucket(self, values, B):
        b = bucketize(self._nd(values), B)
        assert b.counts().sum() == len(values)
        lo, hi = b.boundaries[b.bucket_of], b.boundaries[b.bucket_of + 1]
        v = np.asarray(values)
        assert np.all((lo <= v) & ((v < hi) | (b.bucket_of == B - 1)))


class TestSegmentSoftmaxNormalization:
    @PROPERTY
    @given(st.lists(st.integers(1, 6), min_size=1, max_size=12), st.integers(0, 2**31 - 1))
    def test_sums_to_one(self, sizes, seed):
        seg = np.repeat(np.arange(len(sizes)), sizes)
        z = np.random.default_rng(seed).normal(scale=20.0, size=seg.size)
        with nd.precision(64):
            out = nd.segment_softmax(nd.Tensor(z), seg).data
        sums = np.add.reduceat(out, np.concatenate([[0], np.cumsum(sizes)[:-1]]))
        assert np.all(np.abs(sums - 1.0) < 1e-9)
