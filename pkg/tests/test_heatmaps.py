import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tinyalign import tensor as T
from tinyalign.heatmaps import (
    distance_weights,
    gaussian_heatmap,
    gaussian_heatmap_batch,
    heatmap_loss,
    l2_coord_loss,
    nme_percent,
    outside_grid,
    per_landmark_nme,
    soft_argmax,
)
from tinyalign.layout import get_layout
from tinyalign.tensor import NumericError, Tensor

from gradcheck import check_gradients


class TestGaussianHeatmap:
    def test_peak_at_center(self):
        hm = gaussian_heatmap((3.0, 4.0), 8, sigma=1.5)
        assert hm[4, 3] == pytest.approx(1.0)
        assert hm.max() == pytest.approx(1.0)

    def test_value_at_one_sigma(self):
        sigma = 1.5
        hm = gaussian_heatmap((2.0, 2.0), 8, sigma=sigma)
        # move exactly sigma along x: grid point (3.5, 2) is off-grid, use sigma=2
        hm = gaussian_heatmap((2.0, 2.0), 8, sigma=2.0)
        assert hm[2, 4] == pytest.approx(np.exp(-0.5), rel=1e-6)

    def test_tiny_sigma_concentrates(self):
        hm = gaussian_heatmap((4.0, 4.0), 9, sigma=0.25)
        assert hm[4, 4] == pytest.approx(1.0)
        assert hm[4, 5] < 0.001
        assert hm[3, 4] < 0.001

    def test_monotone_decay_along_axes(self):
        hm = gaussian_heatmap((4.0, 4.0), 9, sigma=1.5)
        row = hm[4]
        assert (np.diff(row[:5]) > 0).all() and (np.diff(row[4:]) < 0).all()

    def test_out_of_grid_center_flagged(self):
        hm = gaussian_heatmap((-2.0, 3.0), 8, sigma=1.5)
        assert hm.max() < 1.0  # truncated tail
        assert outside_grid(np.array([-2.0, 3.0]), 8)
        assert not outside_grid(np.array([3.0, 3.0]), 8)

    def test_batch_matches_single(self, rng):
        coords = rng.random((2, 3, 2)) * 7
        batch = gaussian_heatmap_batch(coords, 8, sigma=1.5)
        for n in range(2):
            for l in range(3):
                single = gaussian_heatmap(tuple(coords[n, l]), 8, sigma=1.5)
                np.testing.assert_allclose(batch[n, l], single, atol=1e-7)

    def test_invalid_sigma(self):
        with pytest.raises(ValueError):
            gaussian_heatmap((1.0, 1.0), 8, sigma=0.0)


class TestSoftArgmax:
    def test_single_dominant_pixel(self):
        logits = np.full((8, 8), -14.0, dtype=np.float64)
        logits[5, 3] = 14.0  # row y=5, col x=3
        out = soft_argmax(Tensor(logits))
        np.testing.assert_allclose(out.data, [3.0, 5.0], atol=1e-3)

    def test_uniform_gives_center(self):
        out = soft_argmax(Tensor(np.zeros((8, 8), dtype=np.float64)))
        np.testing.assert_allclose(out.data, [3.5, 3.5], atol=1e-9)

    def test_two_equal_peaks_average(self):
        logits = np.full((8, 8), -14.0, dtype=np.float64)
        logits[1, 1] = 14.0
        logits[3, 5] = 14.0
        out = soft_argmax(Tensor(logits))
        np.testing.assert_allclose(out.data, [3.0, 2.0], atol=1e-3)

    def test_batched_shape(self, rng):
        logits = rng.standard_normal((2, 5, 6, 6))
        out = soft_argmax(Tensor(logits))
        assert out.shape == (2, 5, 2)

    def test_all_negative_infinity_errors(self):
        logits = np.full((4, 4), -2000.0, dtype=np.float32)
        with pytest.raises(NumericError):
            soft_argmax(Tensor(logits))

    def test_softmax_normalizer_shift_invariant(self, rng):
        logits = rng.standard_normal((6, 6))
        a = soft_argmax(Tensor(logits), normalizer="softmax").data
        b = soft_argmax(Tensor(logits + 5.0), normalizer="softmax").data
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_saturated_heatmap_approx_shift_invariant(self):
        # Sigmoid-sum normalization is only approximately shift-invariant.
        # The 1e-5 bound holds when activations are fully saturated (the
        # transition band between on and off pixels is empty); with soft
        # shoulders, shifting the constant reshapes the support and moves
        # the decode by far more, which is why softmax stays available as
        # the exactly-invariant alternative.
        logits = np.full((16, 16), -25.0)
        logits[8, 7] = 25.0
        ref = soft_argmax(Tensor(logits)).data
        np.testing.assert_allclose(ref, [7.0, 8.0], atol=1e-6)
        for c in np.linspace(-2.0, 2.0, 9):
            out = soft_argmax(Tensor(logits + c)).data
            np.testing.assert_allclose(out, ref, atol=1e-5)

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_decode_in_convex_hull(self, seed):
        rng = np.random.default_rng(seed)
        logits = rng.standard_normal((5, 7)) * 5
        out = soft_argmax(Tensor(logits)).data
        assert 0.0 <= out[0] <= 6.0
        assert 0.0 <= out[1] <= 4.0

    def test_flip_equivariance(self, rng):
        logits = rng.standard_normal((9, 9))
        fwd = soft_argmax(Tensor(logits)).data
        flipped = soft_argmax(Tensor(logits[:, ::-1].copy())).data
        assert flipped[0] == pytest.approx(8.0 - fwd[0], abs=1e-9)
        assert flipped[1] == pytest.approx(fwd[1], abs=1e-9)

    def test_gradients(self, rng):
        logits = rng.standard_normal((2, 2, 4, 4))

        def loss(ts):
            out = soft_argmax(ts[0])
            return T.reduce_sum(T.mul(out, out))

        check_gradients(loss, [logits])


class TestDistanceWeights:
    def test_2x2_fixture(self):
        w = distance_weights(np.array([0.0, 0.0]), 2)
        np.testing.assert_allclose(w, [[0.0, 0.25], [0.25, 0.5]])

    def test_zero_at_target_max_at_far_corner(self):
        w = distance_weights(np.array([1.0, 2.0]), 8)
        assert w[2, 1] == 0.0
        assert w.argmax() == np.ravel_multi_index((7, 7), (8, 8))


class TestHeatmapLoss:
    def test_1x1_grid_is_zero(self):
        logits = Tensor(np.array([[[[0.3]]]], dtype=np.float64))
        loss = heatmap_loss(logits, np.array([[[[1.0]]]]), np.zeros((1, 1, 2)))
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_2x2_ln2_fixture(self):
        logits = Tensor(np.zeros((1, 1, 2, 2), dtype=np.float64))
        gt = np.zeros((1, 1, 2, 2))
        gt[0, 0, 0, 0] = 1.0
        loss = heatmap_loss(logits, gt, np.zeros((1, 1, 2)))
        assert loss.item() == pytest.approx(np.log(2.0), abs=1e-6)

    def test_saturated_match_near_zero(self):
        gt = np.zeros((1, 1, 4, 4), dtype=np.float64)
        gt[0, 0, 1, 2] = 1.0
        logits = Tensor(np.where(gt > 0.5, 20.0, -20.0))
        loss = heatmap_loss(logits, gt, np.array([[[2.0, 1.0]]]))
        assert loss.item() < 1e-6

    def test_batch_averaging(self, rng):
        logits = rng.standard_normal((1, 2, 4, 4))
        gt = rng.random((1, 2, 4, 4))
        coords = rng.random((1, 2, 2)) * 3
        single = heatmap_loss(Tensor(logits), gt, coords).item()
        double = heatmap_loss(Tensor(np.concatenate([logits, logits])),
                              np.concatenate([gt, gt]),
                              np.concatenate([coords, coords])).item()
        assert double == pytest.approx(single, rel=1e-6)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            heatmap_loss(Tensor(rng.standard_normal((1, 1, 4, 4))),
                         rng.random((1, 1, 3, 3)), np.zeros((1, 1, 2)))

    def test_gradients(self, rng):
        logits = rng.standard_normal((2, 2, 4, 4))
        gt = gaussian_heatmap_batch(rng.random((2, 2, 2)) * 3, 4, sigma=1.0)
        coords = rng.random((2, 2, 2)) * 3

        def loss(ts):
            return heatmap_loss(ts[0], gt, coords)

        check_gradients(loss, [logits])


class TestL2Loss:
    def test_exact_match(self):
        pred = Tensor(np.ones((1, 3, 2), dtype=np.float64))
        assert l2_coord_loss(pred, np.ones((1, 3, 2))).item() == 0.0

    def test_single_offset(self):
        pred = Tensor(np.array([[[0.3, 0.4]]], dtype=np.float64))
        loss = l2_coord_loss(pred, np.zeros((1, 1, 2)))
        assert loss.item() == pytest.approx(0.25)

    def test_doubling_offsets_quadruples(self, rng):
        gt = rng.random((2, 4, 2))
        off = rng.standard_normal((2, 4, 2)) * 0.1
        l1 = l2_coord_loss(Tensor(gt + off), gt).item()
        l2 = l2_coord_loss(Tensor(gt + 2 * off), gt).item()
        assert l2 == pytest.approx(4 * l1, rel=1e-6)

    def test_gradients(self, rng):
        gt = rng.random((2, 3, 2))

        def loss(ts):
            return l2_coord_loss(ts[0], gt)

        check_gradients(loss, [gt + rng.standard_normal((2, 3, 2)) * 0.3])


class TestNme:
    def _gt(self, rng):
        layout = get_layout("synth65")
        from tinyalign.layout import synth65_template
        return layout, synth65_template().copy()

    def test_perfect_prediction(self, rng):
        layout, gt = self._gt(rng)
        assert nme_percent(gt, gt, layout) == 0.0

    def test_single_displacement_by_ipd(self, rng):
        layout, gt = self._gt(rng)
        ipd = layout.interpupil_distance(gt)
        pred = gt.copy()
        pred[40, 0] += ipd
        assert nme_percent(pred, gt, layout) == pytest.approx(100.0 / 65, rel=1e-9)

    def test_global_translation(self, rng):
        layout, gt = self._gt(rng)
        ipd = layout.interpupil_distance(gt)
        d = 0.05
        pred = gt + np.array([d, 0.0])
        assert nme_percent(pred, gt, layout) == pytest.approx(100.0 * d / ipd, rel=1e-9)

    def test_subsets_partition_overall(self, rng):
        layout, gt = self._gt(rng)
        pred = gt + rng.standard_normal(gt.shape) * 0.01
        inner = nme_percent(pred, gt, layout, "inner")
        contour = nme_percent(pred, gt, layout, "contour")
        overall = nme_percent(pred, gt, layout, "all")
        blended = (inner * 62 + contour * 3) / 65
        assert overall == pytest.approx(blended, rel=1e-9)

    def test_zero_ipd_rejected(self, rng):
        layout, gt = self._gt(rng)
        degenerate = np.full_like(gt, 0.5)
        with pytest.raises(ValueError):
            nme_percent(gt, degenerate, layout)

    def test_per_landmark_table(self, rng):
        layout, gt = self._gt(rng)
        pred = gt.copy()
        pred[3] += 0.02
        table = per_landmark_nme(pred, gt, layout)
        assert table.shape == (65,)
        assert table[3] > 0 and table[4] == 0
