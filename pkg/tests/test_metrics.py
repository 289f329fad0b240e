import numpy as np
import pytest

from normalbridge import metrics
from normalbridge.maps import NormalMap
from normalbridge.tensorcore import SeededRng


def flat_map(h, w, vec=(0.0, 0.0, 1.0), mask=None):
    v = np.broadcast_to(np.asarray(vec, dtype=np.float64), (h, w, 3)).copy()
    return NormalMap(v, mask)


def step_map(h, w, col, left=(0.0, 0.0, 1.0), right=(1.0, 0.0, 0.0)):
    v = np.empty((h, w, 3))
    v[:, :col] = left
    v[:, col:] = right
    return NormalMap(v)


class TestNormalError:
    def test_identical_is_exactly_zero(self):
        a = step_map(8, 8, 4)
        assert metrics.normal_error(a, a) == 0.0

    def test_orthogonal_is_exactly_ninety(self):
        a = flat_map(4, 4, (0, 0, 1))
        b = flat_map(4, 4, (1, 0, 0))
        assert metrics.normal_error(a, b) == 90.0

    def test_antiparallel_is_exactly_180(self):
        a = flat_map(4, 4, (0, 0, 1))
        b = flat_map(4, 4, (0, 0, -1))
        assert metrics.normal_error(a, b) == 180.0

    def test_symmetric(self):
        rng = SeededRng(0)
        v = rng.normal((6, 6, 3))
        v /= np.linalg.norm(v, axis=-1, keepdims=True)
        w = rng.normal((6, 6, 3))
        w /= np.linalg.norm(w, axis=-1, keepdims=True)
        a, b = NormalMap(v), NormalMap(w)
        assert metrics.normal_error(a, b) == metrics.normal_error(b, a)

    def test_empty_mask_rejected(self):
        a = flat_map(4, 4)
        with pytest.raises(ValueError, match="empty mask"):
            metrics.normal_error(a, a, np.zeros((4, 4), bool))

    def test_mask_restricts(self):
        a = flat_map(4, 4, (0, 0, 1))
        v = a.vectors.copy()
        v[0, 0] = (1.0, 0.0, 0.0)
        b = NormalMap(v)
        m = np.zeros((4, 4), bool)
        m[1:, 1:] = True
        assert metrics.normal_error(a, b, m) == 0.0


class TestCanny:
    def test_constant_map_empty(self):
        em = metrics.canny(flat_map(16, 16, (0, 0, 1)))
        assert em.count == 0

    def test_vertical_step_single_column(self):
        col = 16
        em = metrics.canny(step_map(32, 32, col))
        rows_hit = em.mask.any(axis=1)
        assert rows_hit.all()
        cols = np.flatnonzero(em.mask.any(axis=0))
        # a thin vertical line within +-1 px of the discontinuity
        assert cols.min() >= col - 2 and cols.max() <= col + 1
        per_row = em.mask.sum(axis=1)
        assert per_row.max() <= 2

    def test_count_non_increasing_in_high(self):
        rng = SeededRng(3)
        img = rng.uniform(0, 1, (32, 32, 3))
        counts = [metrics.canny(img, 0.05, h).count for h in (0.1, 0.2, 0.4, 0.6, 0.8)]
        assert all(b <= a for a, b in zip(counts, counts[1:]))

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            metrics.canny(flat_map(8, 8), 0.3, 0.2)


class TestDilate:
    def test_single_pixel_radius_one(self):
        m = np.zeros((7, 7), bool)
        m[3, 3] = True
        out = metrics.dilate(metrics.EdgeMask(m), 1)
        want = np.zeros((7, 7), bool)
        want[2:5, 2:5] = True
        np.testing.assert_array_equal(out.mask, want)

    def test_radius_zero_identity(self):
        rng = SeededRng(4)
        m = rng.uniform(0, 1, (16, 16)) > 0.8
        out = metrics.dilate(metrics.EdgeMask(m), 0)
        np.testing.assert_array_equal(out.mask, m)

    def test_semigroup_property(self):
        rng = SeededRng(5)
        for i in range(10):
            m = metrics.EdgeMask(rng.stream_rng(i).uniform(0, 1, (32, 32)) > 0.92)
            for r1, r2 in [(1, 1), (1, 2), (2, 3), (0, 4)]:
                a = metrics.dilate(metrics.dilate(m, r1), r2)
                b = metrics.dilate(m, r1 + r2)
                np.testing.assert_array_equal(a.mask, b.mask)

    def test_negative_radius_rejected(self):
        with pytest.raises(ValueError):
            metrics.dilate(metrics.EdgeMask(np.zeros((4, 4), bool)), -1)


class TestSharpNormalError:
    def test_identical_zero(self):
        gt = step_map(32, 32, 16)
        res = metrics.sharp_normal_error(gt, gt, radius=2)
        assert res.sne_deg == 0.0
        assert res.n_pixels > 0

    def test_edge_band_corruption_drives_sne_above_ne(self):
        gt = step_map(32, 32, 16)
        pred_v = gt.vectors.copy()
        # corrupt only a narrow band around the step
        band = slice(14, 18)
        pred_v[:, band] = np.array([0.0, 1.0, 0.0])
        pred = NormalMap(pred_v)
        ne = metrics.normal_error(pred, gt)
        res = metrics.sharp_normal_error(pred, gt, radius=2)
        assert res.sne_deg > ne

    def test_flat_scene_no_sharp_regions(self):
        flat = flat_map(16, 16)
        res = metrics.sharp_normal_error(flat, flat)
        assert res.no_sharp_regions
        assert res.sne_deg is None
        assert res.n_pixels == 0

    def test_radius_monotone_when_band_clean(self):
        # errors concentrated exactly on the edge; growing the band adds
        # only error-free pixels, so SNE cannot increase
        gt = step_map(32, 32, 16)
        pred_v = gt.vectors.copy()
        pred_v[:, 15:17] = np.array([0.0, 1.0, 0.0])
        pred = NormalMap(pred_v)
        snes = [metrics.sharp_normal_error(pred, gt, radius=r).sne_deg for r in (1, 2, 4, 6)]
        assert all(b <= a for a, b in zip(snes, snes[1:]))


class TestMultiview:
    def _views(self, k=4):
        rng = SeededRng(6)
        out = []
        for i in range(k):
            v = rng.stream_rng(i).normal((16, 16, 3))
            v /= np.linalg.norm(v, axis=-1, keepdims=True)
            out.append(NormalMap(v))
        return out

    def test_identical_views_zero(self):
        views = [step_map(16, 16, 8) for _ in range(4)]
        rep = metrics.multiview_report(views, views, radius=1)
        assert rep.ne_deg == 0.0
        assert rep.sne_deg == 0.0
        assert len(rep.per_view) == 4

    def test_view_permutation_invariance(self):
        gt = self._views()
        pred = [step_map(16, 16, 8) for _ in range(4)]
        r1 = metrics.multiview_report(pred, gt, radius=1)
        perm = [2, 0, 3, 1]
        r2 = metrics.multiview_report([pred[i] for i in perm], [gt[i] for i in perm], radius=1)
        assert r1.ne_deg == pytest.approx(r2.ne_deg, abs=1e-12)

    def test_mismatched_counts_rejected(self):
        v = self._views()
        with pytest.raises(ValueError, match="mismatch"):
            metrics.multiview_report(v[:3], v)

    def test_reproducible(self):
        gt = self._views()
        pred = self._views()
        a = metrics.multiview_report(pred, gt, radius=1)
        b = metrics.multiview_report(pred, gt, radius=1)
        assert a.ne_deg == b.ne_deg and a.sne_deg == b.sne_deg
