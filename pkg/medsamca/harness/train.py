# purpose: the training loop
# Everything random derives from the run seed: initialization from
# default_rng(seed), each epoch's order and box perturbations from
# child_rng(seed, TRAIN_STREAM, epoch). A resumed run therefore replays the
# same stream from the stored epoch.

import csv
import json
import logging
import math
import os
from dataclasses import dataclass
from dataclasses import field

import numpy as np

from medsamca.autodiff.tensor import Tensor
from medsamca.autodiff.tensor import backward
from medsamca.errors import ConfigurationError
from medsamca.errors import NumericalError
from medsamca.errors import ValidationError
from medsamca.harness.checkpoint import Checkpoint
from medsamca.harness.checkpoint import load_checkpoint
from medsamca.harness.checkpoint import save_checkpoint
from medsamca.harness.config import ModelConfig
from medsamca.harness.evaluate import evaluate
from medsamca.harness.losses import total_loss
from medsamca.harness.optim import AdamW
from medsamca.model.medsamca import MedSAMCA
from medsamca.pipeline.dataset import DatasetManifest
from medsamca.pipeline.dataset import iterate_batches
from medsamca.pipeline.dataset import limit_fraction
from medsamca.pipeline.dataset import load_split
from medsamca.utils.utils import child_rng
from medsamca.utils.utils import digest_strings
from medsamca.utils.utils import moving_average

logger = logging.getLogger(__name__)

TRAIN_STREAM = 17
SELF_CHECK_EPOCHS = 20
SELF_CHECK_WINDOW = 5
LOG_COLUMNS = ("epoch", "train_loss", "val_dice", "val_iou", "batch_digest")


@dataclass
class EpochRecord:
    epoch: int
    trainLoss: float
    valDice: float = None
    valIou: float = None
    digest: str = ""

    def asdict(self) -> dict:
        return {"epoch": self.epoch, "train_loss": self.trainLoss,
                "val_dice": self.valDice, "val_iou": self.valIou,
                "batch_digest": self.digest}

    @classmethod
    def fromdict(cls, d: dict) -> "EpochRecord":
        return cls(d["epoch"], d["train_loss"], d["val_dice"], d["val_iou"],
                   d["batch_digest"])


@dataclass
class TrainResult:
    model: MedSAMCA
    history: list
    bestEpoch: int = -1
    bestValDice: float = None
    selfCheckPassed: bool = True
    trainableParams: int = 0
    stepLosses: list = field(default_factory=list)

    @property
    def dataDigest(self) -> str:
        return digest_strings(r.digest for r in self.history)


def loss_trend_ok(losses, epochs: int = SELF_CHECK_EPOCHS,
                  window: int = SELF_CHECK_WINDOW) -> bool:
    "Moving average of the per-epoch loss never rises over the first epochs"
    head = list(losses)[:epochs]
    if len(head) < 2:
        return True
    return bool(np.all(np.diff(moving_average(head, window)) <= 0))


def resolve_splits(data) -> dict:
    "A manifest (or its path) or an in-memory {split: [Sample]} mapping"
    if isinstance(data, dict):
        return data
    manifest = data if isinstance(data, DatasetManifest) else DatasetManifest.load(data)
    return {name: load_split(manifest, name) for name in manifest.splits}


def _checkpoint(model, optimizer, config, epoch, history, best):
    return Checkpoint(config, model.stateDict(), optimizer.stateDict(), epoch,
                      optimizer.state.t,
                      {"history": [r.asdict() for r in history],
                       "best_epoch": best[0], "best_val_dice": best[1]})


def write_log(path, history):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for r in history:
            writer.writerow([r.epoch, repr(r.trainLoss),
                             "" if r.valDice is None else repr(r.valDice),
                             "" if r.valIou is None else repr(r.valIou), r.digest])


def train(config: ModelConfig, data, outDir: str = None, resume: str = None,
          validate: bool = True) -> TrainResult:
    """Train config on data (see resolve_splits). With outDir, writes
    last.ckpt every epoch, best.ckpt on every new best validation Dice,
    train_log.csv and summary.json."""
    config.validate()
    splits = resolve_splits(data)
    trainSamples = limit_fraction(splits.get("train", []), config.train_fraction, config.seed)
    if not trainSamples:
        raise ValidationError("training split is empty")
    valSamples = splits.get("val", []) if validate else []
    size = trainSamples[0].size
    if (size, size) != config.imageShape:
        raise ConfigurationError(
            "config image shape {0}x{1} but samples are {2}x{2}".format(
                *config.imageShape, size))
    if outDir:
        os.makedirs(outDir, exist_ok=True)

    model = MedSAMCA(config)
    optimizer = AdamW(model.namedParameters(trainableOnly=True), config.lr,
                      config.weight_decay)
    trainable = optimizer.parameterCount
    logger.info("training %d of %d parameters on %d samples",
                trainable, model.countParameters(False), len(trainSamples))

    history = []
    best = (-1, None)
    startEpoch = 0
    if resume:
        ckpt = load_checkpoint(resume)
        model.loadStateDict(ckpt.params)
        optimizer.loadStateDict(ckpt.optimizer, ckpt.step)
        startEpoch = ckpt.epoch
        history = [EpochRecord.fromdict(d) for d in ckpt.extra.get("history", [])]
        best = (ckpt.extra.get("best_epoch", -1), ckpt.extra.get("best_val_dice"))
        logger.info("resumed from %s at epoch %d, step %d", resume, startEpoch, ckpt.step)

    stepLosses = []
    dtype = np.dtype(config.dtype)
    for epoch in range(startEpoch, config.epochs):
        rng = child_rng(config.seed, TRAIN_STREAM, epoch)
        losses, digests = [], []
        for batch in iterate_batches(trainSamples, config.batch_size, rng, config.perturb_max):
            logits = model(Tensor(batch.images.astype(dtype)), batch.boxes)
            loss = total_loss(logits, batch.masks, config.alpha)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericalError(
                    "loss became {0} at epoch {1}, step {2}; last good checkpoint kept".format(
                        value, epoch, optimizer.state.t + 1))
            optimizer.zeroGrad()
            backward(loss)
            optimizer.step()
            losses.append(value)
            digests.append(batch.digest())
        record = EpochRecord(epoch, float(np.mean(losses)), digest=digest_strings(digests))
        stepLosses.extend(losses)
        if valSamples:
            result = evaluate(model, valSamples, config.seed, config.perturb_max,
                              config.batch_size)
            record.valDice, record.valIou = result.summary.dice, result.summary.iou
        history.append(record)
        logger.info("epoch %d: train loss %.5f, val dice %s, val iou %s, data %s",
                    epoch, record.trainLoss, _fmt(record.valDice), _fmt(record.valIou),
                    record.digest)
        improved = record.valDice is not None and (best[1] is None or record.valDice > best[1])
        if improved or not valSamples:
            best = (epoch, record.valDice)
        if outDir:
            ckpt = _checkpoint(model, optimizer, config, epoch + 1, history, best)
            save_checkpoint(os.path.join(outDir, "last.ckpt"), ckpt)
            if improved or not valSamples:
                save_checkpoint(os.path.join(outDir, "best.ckpt"), ckpt)
            write_log(os.path.join(outDir, "train_log.csv"), history)

    # fewer epochs than the smoothing window are not judged
    selfCheck = len(history) < SELF_CHECK_WINDOW or loss_trend_ok([r.trainLoss for r in history])
    if len(history) >= SELF_CHECK_WINDOW:
        if selfCheck:
            logger.info("self-check passed: smoothed train loss non-increasing")
        else:
            logger.warning("self-check failed: smoothed train loss rose within the first %d epochs",
                           SELF_CHECK_EPOCHS)
    result = TrainResult(model, history, best[0], best[1], selfCheck, trainable, stepLosses)
    if outDir:
        with open(os.path.join(outDir, "summary.json"), "w") as handle:
            json.dump({"best_epoch": best[0], "best_val_dice": best[1],
                       "self_check_passed": selfCheck, "trainable_params": trainable,
                       "data_digest": result.dataDigest}, handle, indent=1, sort_keys=True)
    return result


def _fmt(value) -> str:
    return "-" if value is None else "{0:.4f}".format(value)
