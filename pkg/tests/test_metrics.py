import itertools
from unittest import TestCase

import numpy as np
from numpy.testing import assert_array_equal
from scipy import ndimage

from medsamca.errors import DimensionError
from medsamca.errors import ValidationError
from medsamca.metrics import BinaryMask
from medsamca.metrics import MetricsReport
from medsamca.metrics import acc
from medsamca.metrics import binarize
from medsamca.metrics import boundary
from medsamca.metrics import dice
from medsamca.metrics import evaluate_pair
from medsamca.metrics import hd95
from medsamca.metrics import hd95_fast
from medsamca.metrics import iou
from medsamca.metrics import summarize
from medsamca.metrics.hausdorff import boundary_mask
from medsamca.metrics.hausdorff import squared_edt
from medsamca.utils.utils import nearest_rank


def square(size, top, left, side):
    mask = np.zeros((size, size), dtype=np.uint8)
    mask[top:top + side, left:left + side] = 1
    return mask


def brute_hd95(a, b):
    pa, pb = np.argwhere(boundary_mask(a)), np.argwhere(boundary_mask(b))
    d = np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(-1))
    ab, ba = np.sort(d.min(axis=1)), np.sort(d.min(axis=0))
    return max(ab[nearest_rank(95, ab.size) - 1], ba[nearest_rank(95, ba.size) - 1])


class TestOverlap(TestCase):
    def setUp(self):
        # two 2x2 squares sharing a 2x1 strip
        self.a = square(6, 1, 1, 2)
        self.b = square(6, 1, 2, 2)

    def test_half_dice_fixture(self):
        self.assertEqual(dice(self.a, self.b), 0.5)
        self.assertAlmostEqual(iou(self.a, self.b), 1 / 3)

    def test_identity(self):
        self.assertEqual(dice(self.a, self.a), 1.0)
        self.assertEqual(iou(self.a, self.a), 1.0)
        self.assertEqual(acc(self.a, self.a), 1.0)

    def test_disjoint(self):
        self.assertEqual(dice(square(6, 0, 0, 2), square(6, 4, 4, 2)), 0.0)

    def test_both_empty(self):
        empty = np.zeros((4, 4))
        self.assertEqual(dice(empty, empty), 1.0)
        self.assertEqual(iou(empty, empty), 1.0)

    def test_accuracy_single_miss(self):
        b = np.zeros((8, 8))
        b[3, 3] = 1
        self.assertEqual(acc(np.zeros((8, 8)), b), 63 / 64)

    def test_shape_mismatch(self):
        with self.assertRaises(DimensionError):
            dice(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_non_binary_values(self):
        with self.assertRaises(ValidationError):
            BinaryMask([[0, 2]])

    def test_dice_iou_identity_and_symmetry(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            a = (rng.random((9, 11)) < rng.uniform(0.1, 0.9)).astype(np.uint8)
            b = (rng.random((9, 11)) < rng.uniform(0.1, 0.9)).astype(np.uint8)
            d, j = dice(a, b), iou(a, b)
            self.assertAlmostEqual(d, 2 * j / (1 + j), delta=1e-12)
            self.assertEqual(d, dice(b, a))
            self.assertEqual(j, iou(b, a))
            self.assertEqual(acc(a, b), acc(b, a))

    def test_dice_grows_with_overlap(self):
        # |A| and |B| stay 4 while the shared area grows
        a = square(8, 2, 2, 2)
        scores = [dice(a, square(8, 2, left, 2)) for left in (6, 4, 3, 2)]
        self.assertEqual(scores, sorted(scores))
        self.assertEqual(scores[-1], 1.0)


class TestBinarize(TestCase):
    def test_threshold_is_inclusive(self):
        masks = binarize(np.zeros((1, 1, 2, 2)))
        assert_array_equal(masks[0].values, np.ones((2, 2)))

    def test_large_negative(self):
        self.assertTrue(binarize(np.full((2, 1, 3, 3), -1e4))[1].empty())

    def test_elementwise_oracle(self):
        z = np.random.default_rng(0).normal(0, 3, (3, 1, 5, 5))
        expected = (1 / (1 + np.exp(-z[:, 0])) >= 0.5).astype(np.uint8)
        for mask, ref in zip(binarize(z), expected):
            assert_array_equal(mask.values, ref)


class TestBoundary(TestCase):
    def test_single_pixel(self):
        mask = np.zeros((5, 5))
        mask[2, 3] = 1
        assert_array_equal(boundary(mask), [[2, 3]])

    def test_solid_square_perimeter(self):
        bd = boundary_mask(square(8, 2, 2, 4))
        self.assertEqual(int(bd.sum()), 12)
        self.assertFalse(bd[3:5, 3:5].any())

    def test_full_image_border(self):
        bd = boundary_mask(np.ones((4, 5)))
        expected = np.ones((4, 5), dtype=bool)
        expected[1:-1, 1:-1] = False
        assert_array_equal(bd, expected)

    def test_empty(self):
        self.assertEqual(boundary(np.zeros((3, 3))).shape, (0, 2))


class TestHausdorff(TestCase):
    def test_identity(self):
        a = square(10, 2, 3, 4)
        self.assertEqual(hd95(a, a), 0.0)
        self.assertEqual(hd95_fast(a, a), 0.0)

    def test_three_four_five(self):
        a = np.zeros((6, 6))
        b = np.zeros((6, 6))
        a[0, 0] = 1
        b[3, 4] = 1
        self.assertEqual(hd95(a, b), 5.0)
        self.assertEqual(hd95_fast(a, b), 5.0)

    def test_empty_conventions(self):
        empty, full = np.zeros((4, 4)), square(4, 1, 1, 2)
        self.assertEqual(hd95(empty, empty), 0.0)
        self.assertIsNone(hd95(empty, full))
        self.assertIsNone(hd95_fast(full, empty))
        self.assertEqual(hd95_fast(empty, empty), 0.0)

    def test_offset_squares_match_brute_force(self):
        a = square(16, 4, 4, 8)
        b = square(16, 6, 4, 8)
        self.assertEqual(hd95(a, b), brute_hd95(a, b))
        self.assertEqual(hd95_fast(a, b), brute_hd95(a, b))

    def test_backends_agree_on_all_3x3_pairs(self):
        masks = [np.array(bits, dtype=np.uint8).reshape(3, 3)
                 for bits in itertools.product((0, 1), repeat=9)]
        for a in masks:
            for b in masks:
                self.assertEqual(hd95(a, b), hd95_fast(a, b), (a.ravel(), b.ravel()))

    def test_backends_agree_on_random_pairs(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            h, w = rng.integers(3, 33, size=2)
            density = rng.uniform(0.2, 0.8)
            a = rng.random((h, w)) < density
            b = rng.random((h, w)) < density
            if rng.random() < 0.5:
                a, b = ndimage.binary_opening(a), ndimage.binary_opening(b)
            a, b = a.astype(np.uint8), b.astype(np.uint8)
            self.assertEqual(hd95(a, b), hd95_fast(a, b))
            if boundary_mask(a).any() and boundary_mask(b).any():
                self.assertEqual(hd95(a, b), brute_hd95(a, b))

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = (rng.random((12, 10)) < 0.4).astype(np.uint8)
            b = (rng.random((12, 10)) < 0.4).astype(np.uint8)
            self.assertEqual(hd95(a, b), hd95(b, a))
            self.assertEqual(hd95_fast(a, b), hd95_fast(b, a))

    def test_translation_invariant(self):
        a, b = square(20, 2, 3, 5), square(20, 6, 4, 3)
        b[7, 9] = 1
        shifted = [np.roll(np.roll(m, 4, axis=0), 5, axis=1) for m in (a, b)]
        self.assertEqual(hd95(a, b), hd95(*shifted))

    def test_edt_matches_scipy(self):
        rng = np.random.default_rng(2)
        for shape in ((7, 9), (16, 16), (1, 12)):
            sites = rng.random(shape) > 0.8
            sites.flat[0] = True
            expected = ndimage.distance_transform_edt(~sites) ** 2
            np.testing.assert_allclose(squared_edt(sites), expected, rtol=0, atol=1e-9)

    def test_edt_without_sites(self):
        self.assertTrue(np.isinf(squared_edt(np.zeros((3, 3), dtype=bool))).all())


class TestSummary(TestCase):
    def test_evaluate_pair_identity(self):
        a = square(8, 1, 1, 5)
        self.assertEqual(evaluate_pair(a, a), MetricsReport(1.0, 1.0, 1.0, 0.0))

    def test_undefined_hd95_is_counted(self):
        reports = [MetricsReport(1.0, 1.0, 1.0, 2.0), MetricsReport(0.0, 0.0, 0.5, None),
                   MetricsReport(0.5, 0.25, 0.75, 4.0)]
        s = summarize(reports)
        self.assertEqual(s.count, 3)
        self.assertEqual(s.undefinedHd95, 1)
        self.assertEqual(s.hd95, 3.0)
        self.assertEqual(s.dice, 0.5)

    def test_empty_summary(self):
        with self.assertRaises(ValidationError):
            summarize([])
