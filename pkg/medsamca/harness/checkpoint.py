# purpose: checkpoint container
# A zip archive holding manifest.json (version, epoch, step, config text,
# tensor names, run history) and one raw tensor file per parameter, buffer
# and optimizer moment. Entries carry a fixed timestamp so identical state
# gives identical bytes.

import json
import zipfile
from collections import OrderedDict
from dataclasses import dataclass
from dataclasses import field

from medsamca.autodiff.tensorio import decode_tensor
from medsamca.autodiff.tensorio import encode_tensor
from medsamca.errors import CheckpointError
from medsamca.errors import FormatError
from medsamca.harness.config import ModelConfig
from medsamca.harness.config import dump_config
from medsamca.harness.config import parse_config
from medsamca.model.medsamca import MedSAMCA

CHECKPOINT_VERSION = 1
MANIFEST = "manifest.json"
EPOCH_STAMP = (1980, 1, 1, 0, 0, 0)


@dataclass
class Checkpoint:
    config: ModelConfig
    params: "OrderedDict[str, object]"
    optimizer: dict = field(default_factory=dict)
    epoch: int = 0
    step: int = 0
    extra: dict = field(default_factory=dict)


def _write(archive: zipfile.ZipFile, name: str, payload: bytes):
    info = zipfile.ZipInfo(name, date_time=EPOCH_STAMP)
    info.compress_type = zipfile.ZIP_DEFLATED
    archive.writestr(info, payload)


def save_checkpoint(path, ckpt: Checkpoint):
    manifest = {
        "version": CHECKPOINT_VERSION,
        "epoch": ckpt.epoch,
        "step": ckpt.step,
        "config": dump_config(ckpt.config),
        "parameters": list(ckpt.params),
        "optimizer": sorted(ckpt.optimizer),
        "extra": ckpt.extra,
    }
    with zipfile.ZipFile(path, "w") as archive:
        _write(archive, MANIFEST, json.dumps(manifest, indent=1, sort_keys=True).encode("utf-8"))
        for name, array in ckpt.params.items():
            _write(archive, "params/" + name + ".tnsr", encode_tensor(array))
        for name in sorted(ckpt.optimizer):
            _write(archive, "optim/" + name + ".tnsr", encode_tensor(ckpt.optimizer[name]))


def _readTensor(archive: zipfile.ZipFile, entry: str, label: str):
    try:
        return decode_tensor(archive.read(entry))
    except KeyError:
        raise CheckpointError("missing tensor {0}".format(label))
    except FormatError as error:
        raise CheckpointError("tensor {0}: {1}".format(label, error))


def load_checkpoint(path) -> Checkpoint:
    try:
        archive = zipfile.ZipFile(path)
    except zipfile.BadZipFile as error:
        raise CheckpointError("{0} is not a checkpoint archive: {1}".format(path, error))
    with archive:
        try:
            manifest = json.loads(archive.read(MANIFEST).decode("utf-8"))
        except KeyError:
            raise CheckpointError("{0} has no {1}".format(path, MANIFEST))
        except ValueError as error:
            raise CheckpointError("unreadable checkpoint manifest: {0}".format(error))
        version = manifest.get("version")
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                "checkpoint version {0} is not supported (expected {1})".format(
                    version, CHECKPOINT_VERSION))
        params = OrderedDict(
            (name, _readTensor(archive, "params/" + name + ".tnsr", name))
            for name in manifest["parameters"])
        optimizer = {name: _readTensor(archive, "optim/" + name + ".tnsr", name)
                     for name in manifest["optimizer"]}
    return Checkpoint(parse_config(manifest["config"]), params, optimizer,
                      int(manifest["epoch"]), int(manifest["step"]),
                      manifest.get("extra", {}))


def restore_model(ckpt: Checkpoint, config: ModelConfig = None):
    """Build a model for config (default: the checkpoint's own) and load the
    stored parameters into it"""
    model = MedSAMCA(config if config is not None else ckpt.config)
    model.loadStateDict(ckpt.params)
    return model
