# purpose: component ablation
# Trains the four named configurations on the same data and seed and
# tabulates trainable parameters and test metrics.

import csv
import io
import logging
import os
from dataclasses import dataclass

from medsamca.harness.checkpoint import load_checkpoint
from medsamca.harness.checkpoint import restore_model
from medsamca.harness.config import ABLATION_LABELS
from medsamca.harness.config import ModelConfig
from medsamca.harness.config import named_config
from medsamca.harness.evaluate import evaluate
from medsamca.harness.train import resolve_splits
from medsamca.harness.train import train

logger = logging.getLogger(__name__)

ABLATION_ORDER = ("full", "no_adapter", "no_atteffb", "no_cbrnet")
TABLE_COLUMNS = ("configuration", "trainable_params", "dice", "iou", "acc", "hd95",
                 "hd95_undefined", "data_digest")


@dataclass
class AblationRow:
    name: str
    label: str
    trainableParams: int
    dice: float
    iou: float
    acc: float
    hd95: float
    undefinedHd95: int
    dataDigest: str
    hasCbrnet: bool


def parameter_ordering_ok(rows) -> bool:
    "Full > w/o Adapter > w/o Atte-FFB > w/o CBR-Net & Atte-FFB"
    byName = {r.name: r.trainableParams for r in rows}
    counts = [byName[name] for name in ABLATION_ORDER]
    return all(a > b for a, b in zip(counts, counts[1:]))


def ablate(base: ModelConfig, data, outDir: str = None, names=ABLATION_ORDER) -> list:
    splits = resolve_splits(data)
    testSamples = splits.get("test") or splits.get("val") or []
    rows = []
    for name in names:
        config = named_config(base, name)
        runDir = os.path.join(outDir, name) if outDir else None
        logger.info("ablation run %s (%s)", name, ABLATION_LABELS[name])
        result = train(config, splits, runDir)
        model = result.model
        if runDir and os.path.exists(os.path.join(runDir, "best.ckpt")):
            model = restore_model(load_checkpoint(os.path.join(runDir, "best.ckpt")))
        scores = evaluate(model, testSamples, config.seed, config.perturb_max,
                          config.batch_size, config.workers).summary
        rows.append(AblationRow(name, ABLATION_LABELS[name], result.trainableParams,
                                scores.dice, scores.iou, scores.acc, scores.hd95,
                                scores.undefinedHd95, result.dataDigest,
                                model.cbrnet is not None))
    if len(rows) == len(ABLATION_ORDER):
        if parameter_ordering_ok(rows):
            logger.info("trainable-parameter ordering holds")
        else:
            logger.warning("trainable-parameter ordering violated: %s",
                           [(r.name, r.trainableParams) for r in rows])
    if len({r.dataDigest for r in rows}) > 1:
        logger.warning("ablation runs consumed different data orders")
    return rows


def _num(value) -> str:
    return "" if value is None else "{0:.6f}".format(value)


def format_table(rows) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    for r in rows:
        writer.writerow([r.label, r.trainableParams, _num(r.dice), _num(r.iou), _num(r.acc),
                         _num(r.hd95), r.undefinedHd95, r.dataDigest])
    return out.getvalue()


def write_table(path, rows):
    with open(path, "w", newline="") as handle:
        handle.write(format_table(rows))
