import os
import tempfile
from unittest import TestCase

import numpy as np
from numpy.testing import assert_allclose
from numpy.testing import assert_array_equal
from PIL import Image
from scipy import stats

from medsamca.errors import ConfigurationError
from medsamca.errors import FormatError
from medsamca.errors import ValidationError
from medsamca.pipeline.dataset import DatasetManifest
from medsamca.pipeline.dataset import iterate_batches
from medsamca.pipeline.dataset import limit_fraction
from medsamca.pipeline.dataset import load_split
from medsamca.pipeline.dataset import split_ids
from medsamca.pipeline.dataset import write_dataset
from medsamca.pipeline.imageio import decode_mask
from medsamca.pipeline.imageio import decode_pgm
from medsamca.pipeline.imageio import encode_mask
from medsamca.pipeline.imageio import encode_pgm
from medsamca.pipeline.imageio import load_image
from medsamca.pipeline.imageio import save_image
from medsamca.pipeline.preprocess import clip_percentiles
from medsamca.pipeline.preprocess import minmax_normalize
from medsamca.pipeline.preprocess import preprocess_volume
from medsamca.pipeline.preprocess import resize
from medsamca.pipeline.preprocess import window_ct
from medsamca.pipeline.prompts import BoxPrompt
from medsamca.pipeline.prompts import box_from_mask
from medsamca.pipeline.prompts import max_perturbation
from medsamca.pipeline.prompts import perturb_box
from medsamca.pipeline.synthetic import gen_synthetic
from medsamca.pipeline.synthetic import synthetic_sample


class TestIntensity(TestCase):
    def test_ct_window(self):
        assert_array_equal(window_ct([-1000, 40, 1000]), [-160, 40, 240])
        with self.assertRaises(ConfigurationError):
            window_ct([0], width=0)

    def test_percentile_clip(self):
        out = clip_percentiles(np.arange(1, 1001))
        self.assertEqual(out.min(), 5)
        self.assertEqual(out.max(), 995)
        assert_array_equal(clip_percentiles(np.arange(10), 0, 100), np.arange(10))
        assert_array_equal(clip_percentiles(np.full(7, 3.0)), np.full(7, 3.0))
        with self.assertRaises(ValidationError):
            clip_percentiles([])

    def test_mri_chain_idempotent(self):
        raw = np.random.default_rng(0).gamma(2.0, 50.0, (4, 10, 10))
        once = minmax_normalize(clip_percentiles(raw))
        twice = minmax_normalize(clip_percentiles(once))
        assert_allclose(twice, once, atol=1e-9)

    def test_minmax(self):
        assert_array_equal(minmax_normalize([0, 1]), [0, 255])
        assert_array_equal(minmax_normalize([7, 7]), [0, 0])
        assert_allclose(minmax_normalize([-160, 40, 240]), [0, 127.5, 255])


class TestResize(TestCase):
    def test_same_size_identity(self):
        image = np.random.default_rng(1).random((6, 6))
        assert_allclose(resize(image, 6), image, rtol=0, atol=1e-12)
        assert_array_equal(resize(image, 6, "nearest"), image)

    def test_bilinear_half_pixel_oracle(self):
        image = np.array([[0.0, 1.0], [2.0, 3.0]])
        coords = np.array([0.0, 0.25, 0.75, 1.0])
        expected = 2 * coords[:, None] + coords[None, :]
        assert_allclose(resize(image, 4), expected, rtol=0, atol=1e-12)

    def test_nearest_keeps_binary(self):
        mask = (np.random.default_rng(2).random((13, 13)) > 0.5).astype(np.uint8)
        out = resize(mask, 32, "nearest")
        self.assertTrue(set(np.unique(out)) <= {0, 1})

    def test_bad_size(self):
        with self.assertRaises(ConfigurationError):
            resize(np.zeros((2, 2)), 0)

    def test_volume_drops_empty_slices(self):
        volume = np.random.default_rng(3).normal(0, 300, (3, 20, 20))
        mask = np.zeros((3, 20, 20))
        mask[1, 5:10, 5:12] = 1
        images, masks, kept = preprocess_volume(volume, "ct", 16, mask)
        self.assertEqual(kept, [1])
        self.assertEqual(images[0].shape, (16, 16))
        self.assertTrue(0 <= images[0].min() and images[0].max() <= 255)
        self.assertTrue(masks[0].any())


class TestBoxes(TestCase):
    def test_single_pixel(self):
        mask = np.zeros((8, 8))
        mask[3, 5] = 1
        self.assertEqual(box_from_mask(mask).astuple(), (5, 3, 6, 4))

    def test_full_image(self):
        self.assertEqual(box_from_mask(np.ones((6, 9))).astuple(), (0, 0, 9, 6))

    def test_blob_oracle(self):
        mask = np.random.default_rng(4).random((20, 20)) > 0.97
        rows, cols = np.nonzero(mask)
        self.assertEqual(box_from_mask(mask).astuple(),
                         (cols.min(), rows.min(), cols.max() + 1, rows.max() + 1))

    def test_empty_mask(self):
        with self.assertRaises(ValidationError):
            box_from_mask(np.zeros((4, 4)))

    def test_degenerate_box(self):
        with self.assertRaises(ValidationError):
            BoxPrompt(3, 3, 3, 5).validate(8, 8)

    def test_max_perturbation(self):
        self.assertEqual(max_perturbation(1024), 20)
        self.assertEqual(max_perturbation(64), 1)
        self.assertEqual(max_perturbation(256), 5)

    def test_zero_perturbation(self):
        box = BoxPrompt(2, 2, 6, 6)
        self.assertIs(perturb_box(box, np.random.default_rng(0), 16, pmax=0), box)

    def test_perturbed_box_contains_and_stays_inside(self):
        rng = np.random.default_rng(5)
        box = BoxPrompt(1, 2, 14, 15)
        for _ in range(200):
            out = perturb_box(box, rng, 16, pmax=4)
            self.assertTrue(out.contains(box))
            out.validate(16, 16)

    def test_edge_offsets_are_uniform(self):
        rng = np.random.default_rng(6)
        box = BoxPrompt(400, 300, 600, 700)
        pmax = max_perturbation(1024)
        self.assertEqual(pmax, 20)
        offsets = []
        for _ in range(10000):
            out = perturb_box(box, rng, 1024)
            self.assertTrue(out.contains(box))
            out.validate(1024, 1024)
            offsets.append((box.x0 - out.x0, box.y0 - out.y0, out.x1 - box.x1, out.y1 - box.y1))
        for edge, shifts in zip(("x0", "y0", "x1", "y1"), np.array(offsets).T):
            counts = np.bincount(shifts, minlength=pmax + 1)
            self.assertEqual(len(counts), pmax + 1, edge)
            self.assertGreater(stats.chisquare(counts).pvalue, 1e-3, edge)


class TestPGM(TestCase):
    def test_size_on_disk(self):
        self.assertEqual(len(encode_pgm(np.zeros((64, 64), dtype=np.uint8))), 4109)

    def test_round_trip(self):
        pixels = np.random.default_rng(7).integers(0, 256, (5, 7)).astype(np.uint8)
        assert_array_equal(decode_pgm(encode_pgm(pixels)), pixels)
        mask = (np.random.default_rng(8).random((9, 4)) > 0.5).astype(np.uint8)
        assert_array_equal(decode_mask(encode_mask(mask)), mask)

    def test_comment_in_header(self):
        blob = b"P5\n# made by hand\n2 1\n255\n\x01\x02"
        assert_array_equal(decode_pgm(blob), [[1, 2]])

    def test_sixteen_bit_rejected(self):
        blob = b"P5\n1 1\n65535\n\x00\x00"
        with self.assertRaises(FormatError) as ctx:
            decode_pgm(blob)
        self.assertEqual(ctx.exception.offset, 7)

    def test_truncated(self):
        with self.assertRaises(FormatError):
            decode_pgm(encode_pgm(np.zeros((4, 4), dtype=np.uint8))[:-1])

    def test_bad_magic(self):
        with self.assertRaises(FormatError) as ctx:
            decode_pgm(b"P2\n1 1\n255\n0")
        self.assertEqual(ctx.exception.offset, 0)

    def test_mask_values(self):
        blob = encode_pgm(np.array([[0, 255, 7]], dtype=np.uint8))
        with self.assertRaises(FormatError) as ctx:
            decode_mask(blob)
        self.assertEqual(ctx.exception.offset, len(blob) - 1)

    def test_header_layout(self):
        blob = encode_pgm(np.full((3, 2), 9, dtype=np.uint8))
        self.assertEqual(blob[:11], b"P5\n2 3\n255\n")
        self.assertEqual(blob[11:], bytes([9] * 6))

    def test_files_from_other_writers(self):
        pixels = np.random.default_rng(10).integers(0, 256, (6, 5)).astype(np.uint8)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "b.pgm")
            Image.fromarray(pixels).save(path)
            assert_allclose(load_image(path), pixels / 255.0)
            save_image(path, pixels / 255.0)
            with Image.open(path) as image:
                assert_array_equal(np.array(image), pixels)

    def test_image_file_precision(self):
        image = np.random.default_rng(9).random((4, 4))
        with tempfile.TemporaryDirectory() as tmp:
            save_image(os.path.join(tmp, "a.tnsr"), image)
            assert_array_equal(load_image(os.path.join(tmp, "a.tnsr")), image)
            save_image(os.path.join(tmp, "a.pgm"), image)
            assert_allclose(load_image(os.path.join(tmp, "a.pgm")), image, atol=0.5 / 255 + 1e-12)


class TestSynthetic(TestCase):
    def test_deterministic(self):
        a, b = synthetic_sample(3, 2, 32), synthetic_sample(3, 2, 32)
        assert_array_equal(a.image, b.image)
        self.assertEqual(a.mask, b.mask)
        self.assertEqual(a.box, b.box)
        self.assertEqual(a.id, "synth-3-00002")

    def test_order_independent(self):
        many = gen_synthetic(1, 4, 16)
        assert_array_equal(many[3].image, synthetic_sample(1, 3, 16).image)

    def test_samples_valid(self):
        for sample in gen_synthetic(0, 10, 32):
            self.assertEqual(sample.image.shape, (3, 32, 32))
            self.assertFalse(sample.mask.empty())
            self.assertTrue(0.0 <= sample.image.min() and sample.image.max() <= 1.0)

    def test_bad_size(self):
        with self.assertRaises(ConfigurationError):
            gen_synthetic(0, 2, 20)


class TestDataset(TestCase):
    def test_split_ratio_and_disjoint(self):
        splits = split_ids(["s{0}".format(i) for i in range(60)], 0)
        self.assertEqual([len(splits[k]) for k in ("train", "val", "test")], [40, 10, 10])
        self.assertEqual(len(set().union(*splits.values())), 60)
        self.assertEqual(split_ids(["s{0}".format(i) for i in range(60)], 0), splits)

    def test_overlap_rejected(self):
        with self.assertRaises(ValidationError):
            DatasetManifest("x", 0, 16, {"train": ["a"], "test": ["a"]}).validate()

    def test_fraction(self):
        samples = list(range(10))
        self.assertEqual(len(limit_fraction(samples, 0.25, 0)), 3)
        self.assertEqual(limit_fraction(samples, 0.25, 0), limit_fraction(samples, 0.25, 0))
        with self.assertRaises(ConfigurationError):
            limit_fraction(samples, 0.0, 0)

    def test_write_and_reload(self):
        samples = gen_synthetic(2, 12, 16)
        with tempfile.TemporaryDirectory() as tmp:
            manifest = write_dataset(tmp, samples, 2, 16)
            loaded = DatasetManifest.load(os.path.join(tmp, "test.txt"))
            self.assertEqual(loaded.splits, manifest.splits)
            self.assertEqual(loaded.size, 16)
            byId = {s.id: s for s in samples}
            for sample in load_split(loaded, "val"):
                self.assertEqual(sample.mask, byId[sample.id].mask)
                self.assertEqual(sample.box, byId[sample.id].box)

    def test_batches(self):
        samples = gen_synthetic(4, 5, 16)
        batches = list(iterate_batches(samples, 2, np.random.default_rng(0)))
        self.assertEqual([len(b.ids) for b in batches], [2, 2, 1])
        self.assertEqual(batches[0].images.shape, (2, 3, 16, 16))
        self.assertEqual(batches[0].masks.shape, (2, 1, 16, 16))
        self.assertEqual(sorted(i for b in batches for i in b.ids), sorted(s.id for s in samples))
        again = list(iterate_batches(samples, 2, np.random.default_rng(0)))
        self.assertEqual([b.digest() for b in batches], [b.digest() for b in again])
        with self.assertRaises(ValidationError):
            next(iterate_batches([], 2, np.random.default_rng(0)))
