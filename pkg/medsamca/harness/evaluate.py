# purpose: inference over a split, per-image metrics, CSV output and the
# complexity / timing report

import csv
import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from dataclasses import field

import numpy as np

from medsamca.autodiff.tensor import no_grad
from medsamca.errors import ValidationError
from medsamca.metrics import evaluate_pair
from medsamca.metrics.overlap import binarize
from medsamca.metrics.overlap import summarize
from medsamca.pipeline.dataset import make_batch
from medsamca.pipeline.prompts import BoxPrompt
from medsamca.pipeline.prompts import perturb_box
from medsamca.utils.utils import child_rng

logger = logging.getLogger(__name__)

EVAL_STREAM = 13
CSV_COLUMNS = ("image_id", "dice", "iou", "acc", "hd95")


def eval_boxes(samples, seed: int, pmax: int = None) -> list:
    "Perturbed boxes for a split, fixed by the seed alone"
    rng = child_rng(seed, EVAL_STREAM)
    return [perturb_box(s.box, rng, s.size, pmax) for s in samples]


def _forward(model, images, boxes):
    with no_grad():
        return binarize(model(images, boxes))


def predict(model, samples, boxes=None, batchSize: int = 8, workers: int = 1) -> list:
    """Binarized predictions, one BinaryMask per sample. Batches run in
    worker threads when workers > 1; gradients are never recorded."""
    if boxes is None:
        boxes = [s.box for s in samples]
    chunks = []
    for start in range(0, len(samples), batchSize):
        batch = make_batch(samples[start:start + batchSize])
        chunks.append((batch.images, boxes[start:start + batchSize]))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: _forward(model, *c), chunks))
    else:
        results = [_forward(model, *c) for c in chunks]
    return [mask for chunk in results for mask in chunk]


@dataclass
class EvaluationResult:
    rows: list  # (image_id, MetricsReport)
    summary: object
    biasValues: dict = field(default_factory=dict)


def score(predictions, samples, workers: int = 1) -> list:
    pairs = [(p, s.mask) for p, s in zip(predictions, samples)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(lambda pr: evaluate_pair(*pr), pairs))
    else:
        reports = [evaluate_pair(p, r) for p, r in pairs]
    return [(s.id, r) for s, r in zip(samples, reports)]


def evaluate(model, samples, seed: int = 0, pmax: int = None, batchSize: int = 8,
             workers: int = 1, perturb: bool = True) -> EvaluationResult:
    if not samples:
        raise ValidationError("cannot evaluate an empty split")
    boxes = eval_boxes(samples, seed, pmax) if perturb else None
    predictions = predict(model, samples, boxes, batchSize, workers)
    rows = score(predictions, samples, workers)
    summary = summarize(r for _, r in rows)
    if summary.undefinedHd95:
        logger.info("%d of %d images have an undefined HD95", summary.undefinedHd95, summary.count)
    bias = model.biasValues() if hasattr(model, "biasValues") else {}
    for site, b in bias.items():
        logger.info("fusion site %s: b = %.4f", site, b)
    return EvaluationResult(rows, summary, bias)


def _cell(value) -> str:
    return "" if value is None else "{0:.6f}".format(value)


def format_csv(result: EvaluationResult) -> str:
    "One row per image, then a row of macro means"
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for imageId, r in result.rows:
        writer.writerow([imageId, _cell(r.dice), _cell(r.iou), _cell(r.acc), _cell(r.hd95)])
    s = result.summary
    writer.writerow(["mean", _cell(s.dice), _cell(s.iou), _cell(s.acc), _cell(s.hd95)])
    return out.getvalue()


def write_csv(path, result: EvaluationResult):
    with open(path, "w", newline="") as handle:
        handle.write(format_csv(result))


def bench(model, size, passes: int = 600, warmup: int = 10, seed: int = 0) -> dict:
    "Parameter counts and mean batch-1 inference time; size is S or (H, W)"
    h, w = (size, size) if isinstance(size, int) else size
    rng = np.random.default_rng(seed)
    image = rng.random((1, 3, h, w)).astype(model.dtype)
    box = [BoxPrompt(w // 4, h // 4, 3 * w // 4, 3 * h // 4)]
    with no_grad():
        for _ in range(warmup):
            model(image, box)
        start = time.perf_counter()
        for _ in range(passes):
            model(image, box)
        elapsed = time.perf_counter() - start
    seconds = elapsed / max(passes, 1)
    report = {
        "total_params": model.countParameters(False),
        "trainable_params": model.countParameters(True),
        "passes": passes,
        "mean_seconds": seconds,
        "fps": 1.0 / seconds if seconds > 0 else float("inf"),
    }
    logger.info("bench: %d params (%d trainable), %.2f ms/image, %.1f FPS",
                report["total_params"], report["trainable_params"],
                1000 * seconds, report["fps"])
    return report
