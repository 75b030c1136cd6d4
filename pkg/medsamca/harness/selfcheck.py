# purpose: gradient-check suites behind the `gradcheck` command
# Each suite builds a small 64-bit instance and compares backward() with
# central differences. Stencil points that cross a ReLU kink or an argmax
# switch are skipped by gradcheck and show up in the report.

import logging
from collections import OrderedDict

import numpy as np

from medsamca.autodiff import functional as F
from medsamca.autodiff.gradcheck import GradcheckReport
from medsamca.autodiff.gradcheck import gradcheck
from medsamca.autodiff.tensor import Tensor
from medsamca.errors import ConfigurationError
from medsamca.harness.config import ModelConfig
from medsamca.harness.losses import total_loss
from medsamca.model.atteffb import AtteFFB
from medsamca.model.cbrnet import CBRNet
from medsamca.model.medsamca import MedSAMCA
from medsamca.nn.blocks import CBAM
from medsamca.nn.blocks import ResidualBlock
from medsamca.nn.blocks import TransformerBlock
from medsamca.pipeline.prompts import BoxPrompt

logger = logging.getLogger(__name__)

# the gradcheck default of 1e-3 leaves a truncation term above BLOCK_TOL on
# biases that shift a whole feature map
STEP = 1e-6
BLOCK_TOL = 1e-4
MODEL_TOL = 1e-3


def _leaf(rng, *shape, low=None, high=None):
    if low is not None:
        return Tensor(rng.uniform(low, high, shape), requires_grad=True)
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def _project(out, rng):
    "Scalar loss <out, R> with a fixed random R"
    weights = rng.standard_normal(out.shape)
    return lambda value: F.sum(F.mul(value, weights))


def _check(build, rng, tol, h=STEP, samples=None):
    forward, params = build(rng)
    project = _project(forward(), rng)
    return gradcheck(lambda: project(forward()), params, h=h, tol=tol,
                     samples=samples, seed=int(rng.integers(1 << 31)))


def _unary(op, *shape, low=None, high=None):
    def build(rng):
        x = _leaf(rng, *shape, low=low, high=high)
        return (lambda: op(x)), [("x", x)]
    return build


def _binary(op, shapeA, shapeB, lowB=None, highB=None):
    def build(rng):
        a = _leaf(rng, *shapeA)
        b = _leaf(rng, *shapeB, low=lowB, high=highB)
        return (lambda: op(a, b)), [("a", a), ("b", b)]
    return build


def _conv(rng):
    x, w, b = _leaf(rng, 2, 3, 6, 6), _leaf(rng, 4, 3, 3, 3), _leaf(rng, 4)
    return (lambda: F.conv2d(x, w, b, stride=2, padding=1)), [("x", x), ("w", w), ("b", b)]


def _layernorm(rng):
    x, g, b = _leaf(rng, 2, 3, 5), _leaf(rng, 5), _leaf(rng, 5)
    return (lambda: F.layernorm_lastdim(x, g, b)), [("x", x), ("gamma", g), ("beta", b)]


def _concat(rng):
    a, b = _leaf(rng, 2, 1, 3, 3), _leaf(rng, 2, 2, 3, 3)
    return (lambda: F.concat_channels([a, b])), [("a", a), ("b", b)]


def _bce(rng):
    z = _leaf(rng, 2, 1, 4, 4)
    y = (rng.random((2, 1, 4, 4)) > 0.5).astype(float)
    return (lambda: F.bce_with_logits(z, y)), [("z", z)]


def _reused(rng):
    x = _leaf(rng, 3, 3)
    return (lambda: F.add(F.mul(x, x), F.sigmoid(x))), [("x", x)]


PRIMITIVES = OrderedDict([
    ("conv2d", _conv),
    ("relu", _unary(F.relu, 3, 4)),
    ("sigmoid", _unary(F.sigmoid, 3, 4)),
    ("add", _binary(F.add, (2, 3, 4), (3, 1))),
    ("mul", _binary(F.mul, (2, 3), (2, 3))),
    ("div", _binary(F.div, (2, 3), (2, 3), 1.0, 2.0)),
    ("matmul", _binary(F.matmul, (2, 3, 4), (4, 5))),
    ("matmul_batched", _binary(F.matmul, (2, 3, 4), (2, 4, 2))),
    ("concat_channels", _concat),
    ("softmax_lastdim", _unary(F.softmax_lastdim, 2, 3, 5)),
    ("layernorm_lastdim", _layernorm),
    ("mean", _unary(lambda x: F.mean(x, axis=1, keepdims=True), 2, 3, 4)),
    ("max_pool2d", _unary(F.max_pool2d, 1, 2, 4, 4)),
    ("global_avg_pool", _unary(F.global_avg_pool, 2, 3, 3, 3)),
    ("global_max_pool", _unary(F.global_max_pool, 2, 3, 3, 3)),
    ("upsample_nearest2x", _unary(F.upsample_nearest2x, 1, 2, 3, 3)),
    ("pad", _unary(lambda x: F.pad(x, (1, 0, 2, 1)), 1, 1, 3, 3)),
    ("transpose", _unary(lambda x: F.transpose(x, (0, 2, 1)), 2, 3, 4)),
    ("bce_with_logits", _bce),
    ("reuse", _reused),
])


def _module(factory, inputShape):
    def build(rng):
        module = factory(rng)
        x = _leaf(rng, *inputShape)
        return (lambda: module(x)), [("input", x)] + module.namedParameters()
    return build


def _randomizeAdapters(block, rng):
    if block.adapter is not None:
        block.adapter.up.weight.data[...] = rng.normal(0, 0.3, block.adapter.up.weight.shape)
    return block


def _atteffb(rng):
    fusion = AtteFFB(6, 4, rng=rng)
    fusion.beta.data[...] = rng.normal()
    fSam, fCbr = _leaf(rng, 2, 4, 4, 4), _leaf(rng, 2, 6, 4, 4)
    return ((lambda: fusion(fSam, fCbr)),
            [("f_sam", fSam), ("f_cbr", fCbr)] + fusion.namedParameters())


BLOCKS = OrderedDict([
    ("residual", _module(lambda rng: ResidualBlock(2, stride=2, rng=rng), (2, 2, 8, 8))),
    ("residual_identity", _module(lambda rng: ResidualBlock(3, rng=rng), (1, 3, 6, 6))),
    ("cbam", _module(lambda rng: CBAM(8, rng=rng), (2, 8, 6, 6))),
    ("adapter", _module(lambda rng: _randomizeAdapters(TransformerBlock(8, 2, rng=rng), rng).adapter,
                        (2, 3, 8))),
    ("transformer", _module(lambda rng: _randomizeAdapters(TransformerBlock(8, 2, rng=rng), rng),
                            (2, 3, 8))),
    ("transformer_no_adapter", _module(lambda rng: TransformerBlock(8, 2, adapter=False, rng=rng),
                                       (2, 3, 8))),
    ("atteffb", _atteffb),
    ("cbrnet", _module(lambda rng: _PyramidFlat(CBRNet(8, rng=rng)), (1, 3, 16, 16))),
])


class _PyramidFlat:
    "CBR-Net wrapped so the four pyramid levels feed one scalar"

    def __init__(self, net):
        self.net = net

    def __call__(self, x):
        return F.concat([F.reshape(f, (-1,)) for f in self.net(x)], axis=0)

    def namedParameters(self):
        return self.net.namedParameters()


def model_gradcheck(tol: float = MODEL_TOL, seed: int = 0, samples: int = 3,
                    h: float = STEP) -> GradcheckReport:
    "Full model + total loss on a 32x32 instance"
    rng = np.random.default_rng(seed)
    config = ModelConfig(S=32, c=16, d=32, L=2, heads=4, seed=seed).validate()
    model = MedSAMCA(config)
    for blk in model.vit.blocks:
        _randomizeAdapters(blk, rng)
    images = Tensor(rng.random((2, 3, 32, 32)))
    masks = np.zeros((2, 1, 32, 32))
    masks[0, 0, 8:20, 10:24] = 1
    masks[1, 0, 4:12, 4:30] = 1
    boxes = [BoxPrompt(8, 6, 26, 22), BoxPrompt(2, 2, 31, 14)]
    return gradcheck(lambda: total_loss(model(images, boxes), masks, config.alpha),
                     model.namedParameters(), h=h, tol=tol, samples=samples, seed=seed)


def _merge(target: GradcheckReport, prefix: str, report: GradcheckReport):
    for name, err in report.errors.items():
        target.add(prefix + "." + name, err, report.checked[name],
                   report.skipped[name])


def suite_names() -> list:
    return ["primitives"] + list(BLOCKS) + ["model"]


def run_gradchecks(names=None, tol: float = None, seed: int = 0) -> "OrderedDict[str, GradcheckReport]":
    names = suite_names() if not names else list(names)
    unknown = [n for n in names if n not in suite_names()]
    if unknown:
        raise ConfigurationError(
            "unknown gradcheck module {0!r}; choose from {1}".format(
                unknown[0], ", ".join(suite_names())))
    rng = np.random.default_rng(seed)
    reports = OrderedDict()
    for name in names:
        if name == "primitives":
            report = GradcheckReport(tol or BLOCK_TOL)
            for opName, build in PRIMITIVES.items():
                _merge(report, opName, _check(build, rng, tol or BLOCK_TOL))
        elif name == "model":
            report = model_gradcheck(tol or MODEL_TOL, seed)
        else:
            report = _check(BLOCKS[name], rng, tol or BLOCK_TOL, samples=20)
        logger.info("gradcheck %s seed %d: max rel err %.3e, %d at a kink (%s)", name, seed,
                    report.maxError, report.totalSkipped, "pass" if report.passed else "FAIL")
        reports[name] = report
    return reports
