# purpose: compare backward() against central finite differences

import logging

import numpy as np

from medsamca.autodiff.tensor import Tensor
from medsamca.autodiff.tensor import backward
from medsamca.autodiff.tensor import no_grad
from medsamca.autodiff.tensor import trace_branches

logger = logging.getLogger(__name__)


class GradcheckReport:
    "Per-parameter maximum relative error and the overall verdict"

    def __init__(self, tol: float):
        self.tol = tol
        self.errors = {}
        self.checked = {}
        self.skipped = {}

    def add(self, name: str, maxError: float, count: int, skipped: int = 0):
        self.errors[name] = maxError
        self.checked[name] = count
        self.skipped[name] = skipped

    @property
    def maxError(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def totalSkipped(self) -> int:
        return sum(self.skipped.values())

    @property
    def passed(self) -> bool:
        return all(err <= self.tol for err in self.errors.values())

    @property
    def failures(self) -> list:
        return [name for name, err in self.errors.items() if err > self.tol]

    def summary(self) -> str:
        lines = []
        for name, err in self.errors.items():
            flag = "ok" if err <= self.tol else "FAIL"
            lines.append("{0:<48s} {1:>4d} entries ({2} at a kink)  max rel err {3:.3e}  {4}".format(
                name, self.checked[name], self.skipped[name], err, flag))
        return "\n".join(lines)

    def __bool__(self):
        return self.passed


def _named(params) -> list:
    if isinstance(params, dict):
        return list(params.items())
    named = []
    for i, item in enumerate(params):
        if isinstance(item, Tensor):
            named.append(("param{0}".format(i), item))
        else:
            named.append((item[0], item[1]))
    return named


def _sameBranches(a: list, b: list) -> bool:
    if len(a) != len(b):
        return False
    return all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))


def _evaluate(f):
    with no_grad(), trace_branches() as branches:
        value = f().item()
    return value, branches


def gradcheck(f, params, h: float = 1e-3, tol: float = 1e-4,
              samples: int = None, seed: int = 0,
              floor: float = 1.0) -> GradcheckReport:
    """Check the gradient of the scalar program f() w.r.t. params.

    The error of one entry is |analytic - numeric| / max(|analytic|,
    |numeric|, floor): relative when the gradient is at least `floor` in
    size, absolute below it.

    A stencil point where some ReLU sign or argmax differs between x-h, x
    and x+h straddles a kink; it is skipped and counted in report.skipped.
    When samples is given, entries are visited in a seeded random order
    until that many smooth ones have been checked."""
    named = _named(params)
    for _, p in named:
        p.zeroGrad()
    with trace_branches() as centre:
        loss = f()
    backward(loss)
    analytic = {name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for name, p in named}
    rng = np.random.default_rng(seed)
    report = GradcheckReport(tol)
    for name, p in named:
        if not p.data.flags.c_contiguous:
            p.data = np.ascontiguousarray(p.data)
        flatData = p.data.reshape(-1)
        limit = flatData.size
        indices = np.arange(flatData.size)
        if samples is not None and samples < flatData.size:
            indices = rng.permutation(flatData.size)
            limit = samples
        flatGrad = analytic[name].reshape(-1)
        worst = 0.0
        checked = skipped = 0
        for idx in indices:
            if checked == limit:
                break
            orig = flatData[idx]
            flatData[idx] = orig + h
            plus, plusBranches = _evaluate(f)
            flatData[idx] = orig - h
            minus, minusBranches = _evaluate(f)
            flatData[idx] = orig
            if not (_sameBranches(centre, plusBranches)
                    and _sameBranches(centre, minusBranches)):
                skipped += 1
                continue
            numeric = (plus - minus) / (2 * h)
            ana = float(flatGrad[idx])
            err = abs(ana - numeric) / max(abs(ana), abs(numeric), floor)
            worst = max(worst, err)
            checked += 1
        report.add(name, worst, checked, skipped)
        if skipped:
            logger.info("gradcheck %s: skipped %d entries at a kink", name, skipped)
        if worst > tol:
            logger.debug("gradcheck %s: max rel err %.3e > %.1e", name, worst, tol)
    for _, p in named:
        p.zeroGrad()
    return report
