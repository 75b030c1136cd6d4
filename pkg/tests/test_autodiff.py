import os
import tempfile
from unittest import TestCase

import numpy as np
from numpy.testing import assert_allclose
from numpy.testing import assert_array_equal

from medsamca.autodiff import functional as F
from medsamca.autodiff.gradcheck import gradcheck
from medsamca.autodiff.tensor import Graph
from medsamca.autodiff.tensor import Tensor
from medsamca.autodiff.tensor import backward
from medsamca.autodiff.tensor import no_grad
from medsamca.autodiff.tensor import record
from medsamca.autodiff.tensor import set_debug
from medsamca.autodiff.tensorio import HEADER
from medsamca.autodiff.tensorio import decode_tensor
from medsamca.autodiff.tensorio import encode_tensor
from medsamca.autodiff.tensorio import load_tensor
from medsamca.autodiff.tensorio import save_tensor
from medsamca.errors import ContractError
from medsamca.errors import DimensionError
from medsamca.errors import FormatError
from medsamca.errors import NumericalError


def naive_conv2d(x, w, b, stride, padding):
    "Direct summation oracle"
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for ni in range(n):
        for oi in range(o):
            for i in range(ho):
                for j in range(wo):
                    total = 0.0
                    for ci in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                total += xp[ni, ci, i * stride + u, j * stride + v] * w[oi, ci, u, v]
                    out[ni, oi, i, j] = total + (0.0 if b is None else b[oi])
    return out


class TestConv2d(TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_center_of_ones(self):
        out = F.conv2d(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), padding=1)
        self.assertEqual(out.data[0, 0, 1, 1], 9.0)

    def test_identity_kernel(self):
        x = self.rng.standard_normal((2, 1, 5, 4))
        out = F.conv2d(x, np.ones((1, 1, 1, 1)))
        assert_array_equal(out.data, x)

    def test_matches_naive_oracle(self):
        x = self.rng.standard_normal((2, 3, 8, 8))
        w = self.rng.standard_normal((4, 3, 3, 3))
        out = F.conv2d(x, w, stride=2, padding=1)
        self.assertEqual(out.shape, (2, 4, 4, 4))
        assert_allclose(out.data, naive_conv2d(x, w, None, 2, 1), rtol=0, atol=1e-12)

    def test_oracle_sweep(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            n, c, h = rng.integers(1, 4), rng.integers(1, 5), int(rng.integers(4, 10))
            x = rng.standard_normal((n, c, h, h + 1))
            w = rng.standard_normal((2, c, 3, 3))
            b = rng.standard_normal(2)
            stride, padding = int(rng.integers(1, 3)), int(rng.integers(0, 2))
            out = F.conv2d(x, w, b, stride=stride, padding=padding)
            assert_allclose(out.data, naive_conv2d(x, w, b, stride, padding), rtol=0, atol=1e-12)

    def test_channel_mismatch(self):
        with self.assertRaises(DimensionError):
            F.conv2d(np.ones((1, 2, 4, 4)), np.ones((1, 3, 3, 3)))

    def test_even_kernel_rejected(self):
        with self.assertRaises(DimensionError):
            F.conv2d(np.ones((1, 1, 4, 4)), np.ones((1, 1, 2, 2)))


class TestPrimitives(TestCase):
    def test_sigmoid_zero(self):
        self.assertEqual(F.sigmoid(Tensor(0.0)).item(), 0.5)

    def test_upsample(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
        expected = [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]
        assert_array_equal(F.upsample_nearest2x(x).data[0, 0], expected)

    def test_softmax_uniform(self):
        assert_allclose(F.softmax_lastdim(Tensor(np.zeros(3))).data, [1 / 3] * 3)

    def test_softmax_empty_axis(self):
        with self.assertRaises(DimensionError):
            F.softmax_lastdim(Tensor(np.zeros((2, 0))))

    def test_layernorm_normalizes(self):
        x = np.random.default_rng(1).standard_normal((4, 6))
        out = F.layernorm_lastdim(x, np.ones(6), np.zeros(6)).data
        assert_allclose(out.mean(axis=-1), 0, atol=1e-12)
        assert_allclose(out.var(axis=-1), 1, atol=1e-4)

    def test_max_pool_tie_goes_first(self):
        x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
        backward(F.sum(F.max_pool2d(x)))
        assert_array_equal(x.grad[0, 0], [[1, 0], [0, 0]])

    def test_broadcast_mismatch(self):
        with self.assertRaises(DimensionError):
            F.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))

    def test_pad(self):
        out = F.pad(Tensor(np.ones((1, 1, 2, 2))), (1, 0, 0, 2))
        self.assertEqual(out.shape, (1, 1, 3, 4))
        self.assertEqual(out.data.sum(), 4)


class TestBackward(TestCase):
    def test_square(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        backward(F.sum(F.mul(x, x)))
        assert_array_equal(x.grad, [2, 4, 6])

    def test_sigmoid_scaled(self):
        w = Tensor(0.0, requires_grad=True)
        backward(F.mul(F.sigmoid(w), 4.0))
        self.assertAlmostEqual(float(w.grad), 1.0, places=12)

    def test_accumulation_matches_duplicated_leaf(self):
        rng = np.random.default_rng(3)
        data = rng.standard_normal(5)
        x = Tensor(data, requires_grad=True)
        backward(F.sum(F.add(F.sigmoid(x), F.mul(x, 3.0))))
        a = Tensor(data, requires_grad=True)
        b = Tensor(data, requires_grad=True)
        backward(F.sum(F.sigmoid(a)))
        backward(F.sum(F.mul(b, 3.0)))
        assert_allclose(x.grad, a.grad + b.grad, rtol=0, atol=1e-15)

    def test_grads_accumulate_across_calls(self):
        x = Tensor([1.0], requires_grad=True)
        backward(F.sum(F.mul(x, 2.0)))
        backward(F.sum(F.mul(x, 2.0)))
        assert_array_equal(x.grad, [4.0])

    def test_non_scalar_loss(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with self.assertRaises(ContractError):
            backward(F.mul(x, 2.0))

    def test_graph_is_topological(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = F.sigmoid(F.mul(x, 2.0))
        loss = F.sum(F.add(y, x))
        graph = Graph.fromOutput(loss)
        seqs = [node.seq for node in graph.operations]
        self.assertEqual(seqs, sorted(seqs))
        self.assertEqual(len(graph), 4)

    def test_no_grad_records_nothing(self):
        x = Tensor([1.0], requires_grad=True)
        with no_grad():
            y = F.mul(x, 2.0)
        self.assertFalse(y.requires_grad)
        self.assertIsNone(y.node)

    def test_debug_mode_flags_non_finite(self):
        set_debug(True)
        try:
            with self.assertRaises(NumericalError):
                F.div(Tensor([1.0]), Tensor([0.0]))
        finally:
            set_debug(False)


class TestGradcheck(TestCase):
    def test_conv2d_passes(self):
        rng = np.random.default_rng(4)
        x = Tensor(rng.standard_normal((1, 2, 5, 5)), requires_grad=True)
        w = Tensor(rng.standard_normal((3, 2, 3, 3)), requires_grad=True)
        proj = rng.standard_normal((1, 3, 5, 5))
        report = gradcheck(lambda: F.sum(F.mul(F.conv2d(x, w, padding=1), proj)),
                           [("x", x), ("w", w)], h=1e-3, tol=1e-4)
        self.assertTrue(report.passed, report.summary())

    def test_smooth_primitives_over_seeds(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            x = Tensor(rng.standard_normal((2, 4)), requires_grad=True)
            g = Tensor(rng.standard_normal(4), requires_grad=True)
            b = Tensor(rng.standard_normal(4), requires_grad=True)
            proj = rng.standard_normal((2, 4))

            def f():
                y = F.softmax_lastdim(F.layernorm_lastdim(x, g, b))
                return F.sum(F.mul(F.sigmoid(y), proj))
            report = gradcheck(f, [x, g, b], h=1e-3, tol=1e-4)
            self.assertTrue(report.passed, report.summary())

    def test_corrupted_backward_fails(self):
        def brokenSquare(t):
            return record(t.data ** 2, (t,), lambda g: (g * t.data,), "broken")
        x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
        report = gradcheck(lambda: F.sum(brokenSquare(x)), [x])
        self.assertFalse(report.passed)
        self.assertEqual(report.failures, ["param0"])

    def test_relu_kink_is_skipped(self):
        x = Tensor(np.array([0.0005, 1.0, -2.0]), requires_grad=True)
        report = gradcheck(lambda: F.sum(F.relu(x)), [("x", x)], h=1e-3, tol=1e-4)
        self.assertTrue(report.passed, report.summary())
        self.assertEqual(report.skipped["x"], 1)
        self.assertEqual(report.checked["x"], 2)

    def test_argmax_switch_is_skipped(self):
        x = Tensor(np.array([[1.0, 1.0005, -1.0]]), requires_grad=True)
        report = gradcheck(lambda: F.sum(F.max_reduce(x, axis=1)), [("x", x)], h=1e-3)
        self.assertTrue(report.passed, report.summary())
        self.assertEqual(report.skipped["x"], 2)

    def test_samples_count_smooth_entries(self):
        x = Tensor(np.concatenate([np.full(10, 1e-5), np.linspace(0.5, 2.0, 40)]),
                   requires_grad=True)
        report = gradcheck(lambda: F.sum(F.relu(x)), [("x", x)], h=1e-3, samples=45, seed=2)
        self.assertEqual(report.checked["x"], 40)
        self.assertEqual(report.skipped["x"], 10)

    def test_error_is_absolute_below_floor(self):
        def tiny(t):
            return record(t.data * 1e-6, (t,), lambda g: (g * 0.0,), "tiny")
        x = Tensor(np.array([1.0]), requires_grad=True)
        self.assertTrue(gradcheck(lambda: F.sum(tiny(x)), [x]).passed)
        self.assertFalse(gradcheck(lambda: F.sum(tiny(x)), [x], floor=1e-8).passed)

    def test_parameters_restored(self):
        x = Tensor(np.array([0.5, 1.5]), requires_grad=True)
        before = x.data.copy()
        gradcheck(lambda: F.sum(F.sigmoid(x)), [x])
        assert_array_equal(x.data, before)
        self.assertIsNone(x.grad)


class TestTensorFormat(TestCase):
    def test_round_trip_float64(self):
        arr = np.random.default_rng(5).standard_normal((2, 3, 4))
        out = decode_tensor(encode_tensor(arr))
        self.assertEqual(out.dtype, np.float64)
        assert_array_equal(out, arr)

    def test_header_layout(self):
        blob = encode_tensor(np.zeros((2, 3), dtype=np.float32))
        self.assertEqual(blob[:4], b"TNSR")
        self.assertEqual(blob[4:7], bytes([1, 0, 2]))
        self.assertEqual(len(blob), HEADER.size + 8 + 6 * 4)

    def test_bad_magic(self):
        blob = b"XXXX" + encode_tensor(np.zeros(2))[4:]
        with self.assertRaises(FormatError) as ctx:
            decode_tensor(blob)
        self.assertEqual(ctx.exception.offset, 0)

    def test_truncated_payload(self):
        blob = encode_tensor(np.zeros(4))
        with self.assertRaises(FormatError):
            decode_tensor(blob[:-3])

    def test_unknown_dtype(self):
        blob = bytearray(encode_tensor(np.zeros(2)))
        blob[5] = 9
        with self.assertRaises(FormatError) as ctx:
            decode_tensor(bytes(blob))
        self.assertEqual(ctx.exception.offset, 5)

    def test_file_round_trip(self):
        arr = np.arange(6, dtype=np.float32).reshape(2, 3)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "a.tnsr")
            save_tensor(path, arr)
            assert_array_equal(load_tensor(path), arr)
