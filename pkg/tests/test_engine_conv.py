import numpy as np
import pytest

from conftest import naive_dense_conv3d, random_sparse
from svmod.engine import SparseConv, SparseTensor, build_rulebook, flops
from svmod.engine.dense_ref import (dense_conv3d, dense_conv_macs,
                                    dense_transposed_conv3d)
from svmod.errors import ShapeMismatch


def at_coords(dense, coords):
    return dense[coords[:, 0], coords[:, 1], coords[:, 2]]


class TestIdentityAndDegenerate:
    def test_1x1x1_identity(self, rng):
        st = random_sparse(rng, (3, 6, 6), c=4)
        conv = SparseConv(4, 4, kernel=(1, 1, 1), rng=rng, dtype=np.float64)
        conv.w.data = np.eye(4)[None]
        conv.b.data = np.zeros(4)
        out = conv(st)
        assert np.allclose(out.fdata, st.fdata)
        assert np.array_equal(out.coords, st.coords)

    def test_single_site_center_only(self, rng):
        st = SparseTensor(np.array([[1, 2, 2]]), rng.normal(size=(1, 3)),
                          (3, 5, 5))
        conv = SparseConv(3, 2, rng=rng, dtype=np.float64)
        out = conv(st)
        center = 13
        want = st.fdata @ conv.w.data[center] + conv.b.data
        assert np.allclose(out.fdata, want)

    def test_empty_input_empty_output(self):
        st = SparseTensor(np.zeros((0, 3)), np.zeros((0, 3)), (3, 5, 5))
        conv = SparseConv(3, 2, dtype=np.float64)
        out = conv(st)
        assert out.n == 0
        assert out.fdata.shape == (0, 2)

    def test_channel_mismatch(self, rng):
        st = random_sparse(rng, (3, 5, 5), c=3)
        conv = SparseConv(4, 2, dtype=np.float64)
        with pytest.raises(ShapeMismatch):
            conv(st)


class TestNaiveLoopOracle:
    """Triple-loop dense conv on tiny cases, fully independent of slicing."""

    def test_submanifold(self, rng):
        st = random_sparse(rng, (3, 5, 4), c=2, density=0.3)
        conv = SparseConv(2, 3, rng=rng, dtype=np.float64)
        out = conv(st)
        dense = naive_dense_conv3d(st.to_dense(), conv.w.data, conv.b.data)
        assert np.allclose(out.fdata, at_coords(dense, out.coords),
                           rtol=1e-12, atol=1e-12)

    def test_strided(self, rng):
        st = random_sparse(rng, (3, 6, 6), c=2, density=0.25)
        conv = SparseConv(2, 3, stride=(1, 2, 2), mode="strided", rng=rng,
                          dtype=np.float64)
        out = conv(st)
        dense = naive_dense_conv3d(st.to_dense(), conv.w.data, conv.b.data,
                                   stride=(1, 2, 2))
        assert np.allclose(out.fdata, at_coords(dense, out.coords),
                           rtol=1e-12, atol=1e-12)


class TestVectorizedDenseOracle:
    def test_submanifold_random(self, rng):
        for _ in range(20):
            st = random_sparse(rng, (4, 9, 8), c=3, density=0.2)
            conv = SparseConv(3, 4, rng=rng, dtype=np.float64)
            out = conv(st)
            dense = dense_conv3d(st.to_dense(), conv.w.data, conv.b.data)
            assert np.allclose(out.fdata, at_coords(dense, out.coords),
                               rtol=1e-10, atol=1e-12)

    def test_strided_random(self, rng):
        for _ in range(20):
            st = random_sparse(rng, (4, 9, 9), c=2, density=0.2)
            conv = SparseConv(2, 3, stride=(1, 2, 2), mode="strided",
                              rng=rng, dtype=np.float64)
            out = conv(st)
            dense = dense_conv3d(st.to_dense(), conv.w.data, conv.b.data,
                                 stride=(1, 2, 2))
            assert np.allclose(out.fdata, at_coords(dense, out.coords),
                               rtol=1e-10, atol=1e-12)

    def test_transposed_random(self, rng):
        for _ in range(20):
            st = random_sparse(rng, (4, 8, 8), c=2, density=0.2)
            rb, out_coords = build_rulebook(st, (3, 3, 3), (1, 2, 2),
                                            "strided")
            coarse = SparseTensor(out_coords,
                                  rng.normal(size=(out_coords.shape[0], 3)),
                                  rb.out_shape)
            conv = SparseConv(3, 2, stride=(1, 2, 2), mode="transposed",
                              rng=rng, dtype=np.float64)
            out = conv(coarse, record=rb)
            dense = dense_transposed_conv3d(coarse.to_dense(), conv.w.data,
                                            conv.b.data, stride=(1, 2, 2),
                                            fine_shape=st.shape)
            assert np.allclose(out.fdata, at_coords(dense, out.coords),
                               rtol=1e-10, atol=1e-12)

    def test_dense_paths_agree(self, rng):
        # slice-based dense conv vs the naive loop, including strides
        x = rng.normal(size=(3, 6, 5, 2))
        w = rng.normal(size=(27, 2, 3))
        b = rng.normal(size=3)
        for stride in ((1, 1, 1), (1, 2, 2), (2, 2, 2)):
            fast = dense_conv3d(x, w, b, stride=stride)
            slow = naive_dense_conv3d(x, w, b, stride=stride)
            assert np.allclose(fast, slow, rtol=1e-12, atol=1e-12)


class TestFlopAccounting:
    def test_macs_equal_pairs_times_channels(self, rng):
        st = random_sparse(rng, (4, 8, 8), c=3, density=0.2)
        rb, _ = build_rulebook(st, (3, 3, 3))
        conv = SparseConv(3, 5, rng=rng, dtype=np.float64)
        flops.reset()
        conv(st, rb)
        macs, _ = flops.totals()
        assert macs == rb.pair_count() * 3 * 5

    def test_cost_scales_with_active_sites_not_volume(self, rng):
        # same point pattern embedded in a 8x larger volume: identical MACs
        st_small = random_sparse(rng, (4, 8, 8), c=2, density=0.1)
        st_big = SparseTensor(st_small.coords, st_small.fdata, (8, 16, 16))
        conv = SparseConv(2, 4, rng=rng, dtype=np.float64)
        flops.reset()
        conv(st_small)
        macs_small, _ = flops.totals()
        flops.reset()
        conv(st_big)
        macs_big, _ = flops.totals()
        assert macs_small == macs_big

    def test_dense_macs_formula(self):
        assert dense_conv_macs((2, 4, 4), 27, 3, 5) == 2 * 4 * 4 * 27 * 3 * 5
