# purpose: samples, on-disk dataset layout, splits and batching
#
#   <root>/dataset.cfg        seed and image size (key = value)
#   <root>/{train,val,test}.txt   one sample id per line
#   <root>/images/<id>.pgm    grayscale image
#   <root>/masks/<id>.pgm     {0,255} mask
#   <root>/slices.txt         ids of unlabelled slices (preprocess without masks)

import logging
import math
import os
from dataclasses import dataclass
from dataclasses import field

import numpy as np

from medsamca.errors import ConfigurationError
from medsamca.errors import FormatError
from medsamca.errors import ValidationError
from medsamca.metrics.overlap import BinaryMask
from medsamca.pipeline.imageio import load_image
from medsamca.pipeline.imageio import load_mask
from medsamca.pipeline.imageio import save_image
from medsamca.pipeline.imageio import save_mask
from medsamca.pipeline.prompts import BoxPrompt
from medsamca.pipeline.prompts import box_from_mask
from medsamca.pipeline.prompts import perturb_box
from medsamca.utils.utils import child_rng
from medsamca.utils.utils import digest_strings

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
SPLIT_STREAM = 7
FRACTION_STREAM = 11


@dataclass
class Sample:
    image: np.ndarray  # [3, S, S] in [0, 1]
    mask: BinaryMask
    box: BoxPrompt
    id: str

    def __post_init__(self):
        if not isinstance(self.mask, BinaryMask):
            self.mask = BinaryMask(self.mask)
        if self.mask.empty():
            raise ValidationError("sample {0} has an empty mask".format(self.id))
        if self.image.ndim != 3 or self.image.shape[0] != 3 \
                or self.image.shape[1:] != self.mask.shape:
            raise ValidationError(
                "sample {0}: image {1} does not match mask {2}".format(
                    self.id, self.image.shape, self.mask.shape))
        if not self.box.contains(box_from_mask(self.mask)):
            raise ValidationError(
                "sample {0}: box {1} misses foreground pixels".format(
                    self.id, self.box.astuple()))

    @property
    def size(self) -> int:
        return self.mask.height


def save_sample(root, sample: Sample):
    "Image as PGM (channel 0), mask as {0,255} PGM"
    os.makedirs(os.path.join(root, "images"), exist_ok=True)
    os.makedirs(os.path.join(root, "masks"), exist_ok=True)
    save_image(os.path.join(root, "images", sample.id + ".pgm"), sample.image[0])
    save_mask(os.path.join(root, "masks", sample.id + ".pgm"), sample.mask.values)


def save_slices(root, images, ids) -> list:
    "Unlabelled slices: images/<id>.pgm plus slices.txt listing the ids"
    os.makedirs(os.path.join(root, "images"), exist_ok=True)
    for image, sliceId in zip(images, ids):
        save_image(os.path.join(root, "images", sliceId + ".pgm"), image)
    with open(os.path.join(root, "slices.txt"), "w") as handle:
        for sliceId in ids:
            handle.write(sliceId + "\n")
    logger.info("wrote %d unlabelled slices to %s", len(ids), root)
    return list(ids)


def load_sample(root, sampleId: str) -> Sample:
    gray = load_image(os.path.join(root, "images", sampleId + ".pgm"))
    mask = BinaryMask(load_mask(os.path.join(root, "masks", sampleId + ".pgm")))
    if mask.empty():
        raise ValidationError("sample {0} has an empty mask".format(sampleId))
    return Sample(np.repeat(gray[None], 3, axis=0), mask, box_from_mask(mask), sampleId)


@dataclass
class DatasetManifest:
    root: str
    seed: int
    size: int
    splits: dict = field(default_factory=dict)

    def validate(self):
        seen = {}
        for name, ids in self.splits.items():
            for sampleId in ids:
                if sampleId in seen:
                    raise ValidationError(
                        "sample {0} is in both {1} and {2}".format(
                            sampleId, seen[sampleId], name))
                seen[sampleId] = name
        return self

    def ids(self, split: str) -> list:
        if split not in self.splits:
            raise ConfigurationError("unknown split {0!r}".format(split))
        return list(self.splits[split])

    def save(self):
        os.makedirs(self.root, exist_ok=True)
        with open(os.path.join(self.root, "dataset.cfg"), "w") as handle:
            handle.write("seed = {0}\nsize = {1}\n".format(self.seed, self.size))
        for name in SPLITS:
            with open(os.path.join(self.root, name + ".txt"), "w") as handle:
                for sampleId in self.splits.get(name, []):
                    handle.write(sampleId + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        "path is the dataset directory or any file directly inside it"
        root = path if os.path.isdir(path) else os.path.dirname(os.path.abspath(path))
        values = {}
        with open(os.path.join(root, "dataset.cfg")) as handle:
            for lineno, line in enumerate(handle, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise FormatError(
                        "dataset.cfg line {0}: expected key = value".format(lineno))
                values[key.strip()] = value.strip()
        try:
            seed, size = int(values["seed"]), int(values["size"])
        except (KeyError, ValueError) as error:
            raise FormatError("dataset.cfg needs integer seed and size: {0}".format(error))
        splits = {}
        for name in SPLITS:
            splitPath = os.path.join(root, name + ".txt")
            if os.path.exists(splitPath):
                with open(splitPath) as handle:
                    splits[name] = [l.strip() for l in handle if l.strip()]
        return cls(root, seed, size, splits).validate()


def split_ids(ids, seed: int) -> dict:
    "Seeded shuffle into train/val/test, 4:1:1"
    ids = list(ids)
    order = child_rng(seed, SPLIT_STREAM).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    nVal = nTest = len(ids) // 6
    nTrain = len(ids) - nVal - nTest
    return {"train": shuffled[:nTrain],
            "val": shuffled[nTrain:nTrain + nVal],
            "test": shuffled[nTrain + nVal:]}


def write_dataset(root, samples, seed: int, size: int) -> DatasetManifest:
    for sample in samples:
        save_sample(root, sample)
    manifest = DatasetManifest(root, seed, size,
                               split_ids([s.id for s in samples], seed)).validate()
    manifest.save()
    logger.info("wrote %d samples to %s (%s)", len(samples), root,
                ", ".join("{0}={1}".format(k, len(v)) for k, v in manifest.splits.items()))
    return manifest


def load_split(manifest: DatasetManifest, split: str) -> list:
    return [load_sample(manifest.root, sampleId) for sampleId in manifest.ids(split)]


def limit_fraction(samples: list, fraction: float, seed: int) -> list:
    "First ceil(fraction * n) samples of a seeded shuffle"
    if not 0 < fraction <= 1:
        raise ConfigurationError("train fraction must lie in (0, 1], got {0}".format(fraction))
    if fraction == 1:
        return list(samples)
    order = child_rng(seed, FRACTION_STREAM).permutation(len(samples))
    keep = int(math.ceil(fraction * len(samples)))
    return [samples[i] for i in order[:keep]]


@dataclass
class Batch:
    images: np.ndarray  # [B, 3, S, S]
    masks: np.ndarray   # [B, 1, S, S] in {0, 1}
    boxes: list
    ids: list

    def digest(self) -> str:
        return digest_strings(self.ids)


def make_batch(samples, rng=None, pmax: int = None) -> Batch:
    "Stack samples; boxes are perturbed when an rng is given"
    images = np.stack([s.image for s in samples])
    masks = np.stack([s.mask.values[None].astype(np.float64) for s in samples])
    boxes = [s.box if rng is None else perturb_box(s.box, rng, s.size, pmax)
             for s in samples]
    return Batch(images, masks, boxes, [s.id for s in samples])


def iterate_batches(samples, batchSize: int, rng, pmax: int = None):
    "One shuffled epoch; the same rng draws the order and the perturbations"
    if not samples:
        raise ValidationError("dataset is empty")
    order = rng.permutation(len(samples))
    for start in range(0, len(samples), batchSize):
        chosen = [samples[i] for i in order[start:start + batchSize]]
        yield make_batch(chosen, rng, pmax)
