#!/usr/bin/env python3
"""
Command-line entry point for the spectral-transfer active domain adaptation toolkit
"""

import argparse
import json
import logging
import os
import subprocess
import sys

import numpy as np
import pandas as pd

from core.active_loop import Pool, Strategy, build_featurizer, run_experiment, select_with_scores
from core.benchmark import compare_strategies
from core.calibration_metrics import ece_from_bins, mce, reliability_bins, write_bins_csv
from core.datasets import FeatureSet
from core.margin_model import Featurizer, FeaturizerKind, LinearHead, MarginParams, train_head
from core.prediction_log_manager import PredictionLogManager
from core.spectral_transfer import Image, fda_transfer
from utils.config import (
    BENCH_KINDS,
    configure_logging,
    load_experiment,
    load_json_document,
    load_settings,
    make_bench,
    parse_overrides,
)
from utils.data_io import (
    read_feature_file,
    read_head_file,
    read_image,
    write_feature_file,
    write_head_file,
    write_image,
)
from utils.errors import EXIT_MALFORMED_INPUT, EXIT_OK, EXIT_USAGE, SdmError, UsageError
from utils.formatter import write_experiment_outputs, write_loss_history

logger = logging.getLogger("run")


class CliArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that exits with the usage-error code instead of argparse's 2"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def cmd_fda_transform(args) -> int:
    source = read_image(args.source)
    target = read_image(args.target)
    result = fda_transfer(source, target, args.beta)
    write_image(result, args.out)
    print(f"Wrote spectral transfer of {args.source} (beta={args.beta}) to {args.out}")
    return EXIT_OK


def cmd_simulate(args, settings) -> int:
    setup = load_experiment(args.config, settings)
    history = run_experiment(setup.config, setup.build_data())
    out_dir = args.out_dir or settings.output_dir
    written = write_experiment_outputs(history, out_dir)
    print(f"Average per-class target accuracy: {history.average_accuracy:.2f}%")
    print(f"ECE: {history.ece:.6f}")
    print(f"Labeled target samples: {history.labeled_target_count}")
    print(f"Wrote {len(written)} files to {out_dir}")
    return EXIT_OK


def cmd_train(args, settings) -> int:
    setup = load_experiment(args.config, settings)
    data = setup.build_data()
    featurizer = build_featurizer(setup.config, data)
    raw = data.source.images if data.image_mode else data.source.features
    features = featurizer.forward_batch(raw)
    initial = LinearHead.zeros(data.num_classes, featurizer.output_dim)
    head, history = train_head(initial, features, data.source.labels, setup.config.optimizer_config())
    out_dir = args.out_dir or settings.output_dir
    os.makedirs(out_dir, exist_ok=True)
    write_head_file(head, os.path.join(out_dir, "head.sdmh"))
    write_loss_history(history.epoch_losses, os.path.join(out_dir, "loss_history.csv"))
    print(f"Trained a {head.num_classes} x {head.feature_dim} head for {setup.config.total_epochs} epochs")
    print(f"Final loss: {history.epoch_losses[-1]:.6f}")
    return EXIT_OK


def cmd_select(args) -> int:
    head = read_head_file(args.head)
    feature_set = read_feature_file(args.features)
    if args.k < 0:
        raise UsageError(f"--k must be non-negative, got {args.k}")
    featurizer = Featurizer(FeaturizerKind.EXTERNAL_FEATURES, (feature_set.dim,))
    pool = Pool(FeatureSet(np.zeros((0, feature_set.dim)), np.zeros(0)), feature_set)
    params = MarginParams(m=args.margin, lam=args.lam)
    chosen, scores = select_with_scores(head, featurizer, pool, args.k, args.strategy, params, args.seed,
                                        workers=args.workers)
    frame = pd.DataFrame({"rank": range(len(chosen)), "index": chosen, "score": scores})
    if args.out:
        frame.to_csv(args.out, index=False)
        print(f"Wrote {len(chosen)} selections to {args.out}")
    else:
        print(frame.to_csv(index=False), end="")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    manager = PredictionLogManager(args.log)
    validation = manager.validate_csv_structure()
    for warning in validation['warnings']:
        logger.warning(warning)
    log = manager.load()
    bins = reliability_bins(log, args.bins)
    print(f"ECE: {ece_from_bins(bins):.6f}")
    print(f"MCE: {mce(log, args.bins):.6f}")
    if args.out:
        write_bins_csv(bins, args.out)
        print(f"Wrote reliability bins to {args.out}")
    return EXIT_OK


def cmd_gen_bench(args) -> int:
    if not args.spec:
        spec = {}
    elif os.path.isfile(args.spec):
        spec = load_json_document(args.spec)
    else:
        spec = json.loads(args.spec)
    if not isinstance(spec, dict):
        raise UsageError("--spec must be a JSON object")
    spec["seed"] = args.seed
    source, pool, test = make_bench(args.kind, spec)
    os.makedirs(args.out_dir, exist_ok=True)
    if args.kind == "gaussian":
        for name, feature_set in (("source", source), ("target_pool", pool), ("target_test", test)):
            write_feature_file(feature_set, os.path.join(args.out_dir, f"{name}.feat"))
    else:
        extension = "ppm" if source.images.shape[-1] == 3 else "pgm"
        rows = []
        for name, image_set in (("source", source), ("target_pool", pool), ("target_test", test)):
            folder = os.path.join(args.out_dir, name)
            os.makedirs(folder, exist_ok=True)
            for i, (image, label) in enumerate(zip(image_set.images, image_set.labels)):
                file_name = f"{i:05d}.{extension}"
                write_image(Image(image), os.path.join(folder, file_name))
                rows.append({"split": name, "file": f"{name}/{file_name}", "label": int(label)})
        pd.DataFrame(rows).to_csv(os.path.join(args.out_dir, "labels.csv"), index=False)
    print(f"Wrote {args.kind} bench ({len(source)} source, {len(pool)} pool, {len(test)} test) to {args.out_dir}")
    return EXIT_OK


def cmd_compare(args, settings) -> int:
    if args.seeds < 1:
        raise UsageError(f"--seeds must be positive, got {args.seeds}")
    setup = load_experiment(args.config, settings)
    if setup.bench_kind is None:
        raise UsageError("compare needs a config with a 'bench' section")
    result = compare_strategies(
        setup.config,
        setup.build_data,
        parse_overrides(args.a),
        parse_overrides(args.b),
        list(range(args.first_seed, args.first_seed + args.seeds)),
    )
    if args.out:
        result.frame.to_csv(args.out, index=False)
    print(json.dumps(result.summary(), indent=2))
    return EXIT_OK


def cmd_dashboard(args) -> int:
    """Start the Streamlit dashboard"""
    print("🚀 Starting experiment dashboard...")
    print("Press Ctrl+C to stop the application.\n")
    app_path = os.path.join(os.path.dirname(os.path.abspath(__file__)), "app.py")
    try:
        subprocess.run([
            sys.executable, "-m", "streamlit", "run", app_path,
            "--server.port", str(args.port),
            "--server.address", "localhost"
        ])
    except KeyboardInterrupt:
        print("\n👋 Dashboard stopped by user")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = CliArgumentParser(prog="run.py", description=__doc__.strip())
    parser.add_argument("--log-level", default=None, help="overrides SDM_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliArgumentParser)

    p = sub.add_parser("fda-transform", help="swap the low-frequency amplitude of one image into another")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--beta", type=float, default=0.033)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="run a full training/selection experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None, help="defaults to SDM_OUTPUT_DIR")

    p = sub.add_parser("train", help="train a head on the source set and save it")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None)

    p = sub.add_parser("select", help="rank unlabeled feature rows with a saved head")
    p.add_argument("--head", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default=Strategy.SDM.value)
    p.add_argument("--lambda", dest="lam", type=float, default=0.001)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)

    p = sub.add_parser("calibrate", help="ECE and reliability bins of a prediction-log CSV")
    p.add_argument("--log", required=True)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--out", default=None)

    p = sub.add_parser("gen-bench", help="write a synthetic two-domain bench to disk")
    p.add_argument("--kind", choices=BENCH_KINDS, required=True)
    p.add_argument("--spec", default=None, help="Path to a JSON file of bench spec fields, or the JSON object inline")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("compare", help="paired multi-seed comparison of two config variants")
    p.add_argument("--config", required=True)
    p.add_argument("--a", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--b", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("dashboard", help="launch the Streamlit dashboard")
    p.add_argument("--port", type=int, default=8501)
    return parser


def main(argv=None) -> int:
    """Main function"""
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings()
        configure_logging(args.log_level or settings.log_level)
        if args.command == "fda-transform":
            return cmd_fda_transform(args)
        if args.command == "simulate":
            return cmd_simulate(args, settings)
        if args.command == "train":
            return cmd_train(args, settings)
        if args.command == "select":
            return cmd_select(args)
        if args.command == "calibrate":
            return cmd_calibrate(args)
        if args.command == "gen-bench":
            return cmd_gen_bench(args)
        if args.command == "compare":
            return cmd_compare(args, settings)
        return cmd_dashboard(args)
    except SdmError as e:
        logger.error(f"{args.command} failed: {e}")
        return e.exit_code
    except json.JSONDecodeError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_USAGE
    except OSError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_MALFORMED_INPUT


if __name__ == "__main__":
    sys.exit(main())
