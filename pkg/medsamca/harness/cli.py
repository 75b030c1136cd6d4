# purpose: command line
#   medsamca synth-data | preprocess | train | eval | ablate | gradcheck

import argparse
import dataclasses
import json
import logging
import os
import sys

from medsamca.autodiff.tensorio import load_tensor
from medsamca.errors import EXIT_INVALID
from medsamca.errors import EXIT_NUMERICAL
from medsamca.errors import EXIT_OK
from medsamca.errors import MedSAMCAError
from medsamca.errors import ValidationError
from medsamca.errors import exit_code_for
from medsamca.harness.ablate import ablate
from medsamca.harness.ablate import format_table
from medsamca.harness.ablate import write_table
from medsamca.harness.checkpoint import load_checkpoint
from medsamca.harness.checkpoint import restore_model
from medsamca.harness.config import ModelConfig
from medsamca.harness.config import load_config
from medsamca.harness.evaluate import bench
from medsamca.harness.evaluate import evaluate
from medsamca.harness.evaluate import format_csv
from medsamca.harness.evaluate import write_csv
from medsamca.harness.selfcheck import run_gradchecks
from medsamca.harness.selfcheck import suite_names
from medsamca.harness.train import train
from medsamca.pipeline.dataset import DatasetManifest
from medsamca.pipeline.dataset import Sample
from medsamca.pipeline.dataset import load_split
from medsamca.pipeline.dataset import save_slices
from medsamca.pipeline.dataset import write_dataset
from medsamca.pipeline.preprocess import CT_LEVEL
from medsamca.pipeline.preprocess import CT_WIDTH
from medsamca.pipeline.preprocess import MRI_HIGH
from medsamca.pipeline.preprocess import MRI_LOW
from medsamca.pipeline.preprocess import preprocess_volume
from medsamca.pipeline.preprocess import to_channels
from medsamca.pipeline.prompts import box_from_mask
from medsamca.pipeline.synthetic import gen_synthetic
from medsamca.utils.utils import configure_logging

logger = logging.getLogger(__name__)


def cmd_synth_data(args) -> int:
    samples = gen_synthetic(args.seed, args.n, args.size)
    write_dataset(args.out, samples, args.seed, args.size)
    return EXIT_OK


def cmd_preprocess(args) -> int:
    volume = load_tensor(args.input)
    mask = load_tensor(args.mask) if args.mask else None
    images, masks, kept = preprocess_volume(
        volume, args.modality, args.size, mask,
        width=args.window_width, level=args.window_level, lo=args.p_lo, hi=args.p_hi)
    prefix = args.prefix or os.path.splitext(os.path.basename(args.input))[0]
    if masks is None:
        save_slices(args.out, [img / 255.0 for img in images],
                    ["{0}-{1:04d}".format(prefix, z) for z in kept])
        return EXIT_OK
    samples = [Sample(to_channels(img), m, box_from_mask(m), "{0}-{1:04d}".format(prefix, z))
               for img, m, z in zip(images, masks, kept)]
    if not samples:
        raise ValidationError("no slice has a non-empty mask")
    write_dataset(args.out, samples, args.seed, args.size)
    return EXIT_OK


def _config(args) -> ModelConfig:
    config = load_config(args.config) if args.config else ModelConfig()
    overrides = {}
    for name in ("epochs", "seed", "train_fraction", "workers"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return dataclasses.replace(config, **overrides).validate()


def cmd_train(args) -> int:
    result = train(_config(args), args.data, args.out, resume=args.resume)
    print(json.dumps({"best_epoch": result.bestEpoch, "best_val_dice": result.bestValDice,
                      "self_check_passed": result.selfCheckPassed,
                      "trainable_params": result.trainableParams}, sort_keys=True))
    if not result.selfCheckPassed:
        logger.error("self-check failed: smoothed train loss rose; run saved in %s", args.out)
        return EXIT_NUMERICAL
    return EXIT_OK


def _splitSamples(args):
    if args.data:
        manifest, split = DatasetManifest.load(args.data), args.split
    else:
        manifest = DatasetManifest.load(args.split)
        split = os.path.splitext(os.path.basename(args.split))[0]
    return load_split(manifest, split)


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    model = restore_model(ckpt)
    config = ckpt.config
    if args.bench:
        print(json.dumps(bench(model, config.imageShape, args.passes), sort_keys=True))
        if not args.split:
            return EXIT_OK
    samples = _splitSamples(args)
    result = evaluate(model, samples, config.seed, config.perturb_max, config.batch_size,
                      args.workers or config.workers)
    if args.out_csv:
        write_csv(args.out_csv, result)
    else:
        sys.stdout.write(format_csv(result))
    s = result.summary
    print("dice {0:.4f}  iou {1:.4f}  acc {2:.4f}  hd95 {3}  (undefined hd95: {4})".format(
        s.dice, s.iou, s.acc, "-" if s.hd95 is None else "{0:.3f}".format(s.hd95),
        s.undefinedHd95))
    for site, b in result.biasValues.items():
        print("b[{0}] = {1:.4f}".format(site, b))
    return EXIT_OK


def cmd_ablate(args) -> int:
    rows = ablate(_config(args), args.data, args.out)
    if args.out_csv:
        write_table(args.out_csv, rows)
    sys.stdout.write(format_table(rows))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    failed = False
    for seed in range(args.seed, args.seed + args.seeds):
        for name, report in run_gradchecks(args.module, args.tol, seed).items():
            print("[{0} seed {1}] {2}".format(name, seed, "pass" if report.passed else "FAIL"))
            print(report.summary())
            failed = failed or not report.passed
    return EXIT_NUMERICAL if failed else EXIT_OK


class _Parser(argparse.ArgumentParser):
    "Usage errors exit with the invalid-input code"

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, "{0}: error: {1}\n".format(self.prog, message))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="medsamca",
                     description="CNN/ViT hybrid segmentation at desk scale")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic dataset")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("preprocess", help="window/clip a raw volume into a dataset")
    p.add_argument("--modality", choices=("ct", "mri"), required=True)
    p.add_argument("--in", dest="input", required=True, help="raw tensor volume [D,H,W]")
    p.add_argument("--mask", help="raw tensor mask volume [D,H,W]")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prefix")
    p.add_argument("--window-width", type=float, default=CT_WIDTH)
    p.add_argument("--window-level", type=float, default=CT_LEVEL)
    p.add_argument("--p-lo", type=float, default=MRI_LOW)
    p.add_argument("--p-hi", type=float, default=MRI_HIGH)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train one configuration")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", help="split file, or split name with --data")
    p.add_argument("--data")
    p.add_argument("--out-csv", dest="out_csv")
    p.add_argument("--workers", type=int)
    p.add_argument("--bench", action="store_true")
    p.add_argument("--passes", type=int, default=600)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the four component ablations")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out-csv", dest="out_csv")
    p.add_argument("--out", help="directory for per-configuration runs")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--module", action="append", choices=suite_names())
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(1 if args.verbose else (-1 if args.quiet else 0))
    if args.command == "eval" and not args.split and not args.bench:
        logger.error("eval needs --split (or --bench)")
        return exit_code_for(ValidationError("missing split"))
    try:
        return args.func(args)
    except (MedSAMCAError, OSError) as error:
        logger.error("%s", error)
        return exit_code_for(error)
