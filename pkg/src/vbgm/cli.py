"""Command-line entry point.

Subcommands: synth, split, run, eval, estimate-k, report. Exit codes:
0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .clustering import estimate_num_classes
from .config import PipelineConfig
from .errors import ConfigError, VbgmError
from .evaluation import MetricsReport
from .features_io import infer_format, read_features, write_features
from .pipeline import classify_batch
from .runner import run_protocol
from .splits import SplitManifest, build_split, split_from_manifest
from .store_io import load_store, save_store
from .synth import generate_synthetic

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--config", type=Path, default=None, help="pipeline config JSON")
    parser.add_argument("--out-dir", type=Path, default=Path("."), help="output directory")


def _load_config(args) -> PipelineConfig:
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        config.seed = args.seed
    return config


def _read_any(path: Path):
    return read_features(path, infer_format(path))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vbgm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p_synth.add_argument("--classes", type=int, default=20)
    p_synth.add_argument("--dim", type=int, default=16)
    p_synth.add_argument("--samples-per-class", type=int, default=200)
    p_synth.add_argument("--separation", type=float, default=8.0)
    p_synth.add_argument("--cov-spread", type=float, default=2.0)
    _add_common(p_synth)

    p_split = sub.add_parser("split", help="build a session-split manifest")
    p_split.add_argument("features", type=Path)
    _add_common(p_split)

    p_run = sub.add_parser("run", help="execute offline plus all online sessions")
    p_run.add_argument("features", type=Path)
    p_run.add_argument("--manifest", type=Path, required=True)
    p_run.add_argument("--det-traces", action="store_true", help="also write per-class log-det traces")
    _add_common(p_run)

    p_eval = sub.add_parser("eval", help="score a saved store on a labeled feature file")
    p_eval.add_argument("features", type=Path)
    p_eval.add_argument("--store", type=Path, required=True)
    _add_common(p_eval)

    p_estimate = sub.add_parser("estimate-k", help="estimate the number of classes")
    p_estimate.add_argument("features", type=Path)
    p_estimate.add_argument("--k-min", type=int, default=None)
    p_estimate.add_argument("--k-max", type=int, default=None)
    _add_common(p_estimate)

    p_report = sub.add_parser("report", help="render a metrics report as a table")
    p_report.add_argument("metrics", type=Path)
    _add_common(p_report)
    return parser


def _cmd_synth(args) -> int:
    config = _load_config(args)
    seed = args.seed if args.seed is not None else config.seed
    dataset = generate_synthetic(
        num_classes=args.classes,
        dim=args.dim,
        samples_per_class=args.samples_per_class,
        separation=args.separation,
        cov_spread=args.cov_spread,
        seed=seed,
    )
    args.out_dir.mkdir(parents=True, exist_ok=True)
    features_path = args.out_dir / "features.fvb1"
    write_features(dataset.features, features_path)
    truth = {
        "seed": seed,
        "separation": args.separation,
        "cov_spread": args.cov_spread,
        "means": dataset.means.tolist(),
        "covariances": [dataset.covariance(c).tolist() for c in range(args.classes)],
    }
    with open(args.out_dir / "ground_truth.json", "w") as handle:
        json.dump(truth, handle)
    print(features_path)
    return EXIT_OK


def _cmd_split(args) -> int:
    config = _load_config(args)
    data = _read_any(args.features)
    _, manifest = build_split(data, config, config.seed)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = args.out_dir / "manifest.json"
    manifest_path.write_text(manifest.to_json())
    print(manifest_path)
    return EXIT_OK


def _cmd_run(args) -> int:
    config = _load_config(args)
    data = _read_any(args.features)
    manifest = SplitManifest.from_json(args.manifest.read_text())
    split = split_from_manifest(data, manifest)
    result = run_protocol(split, config, collect_det_traces=args.det_traces)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    save_store(result.store, args.out_dir / "store.vbgm")
    (args.out_dir / "metrics.json").write_text(result.report.to_json())
    result.report.write_csv(args.out_dir / "metrics.csv")
    if args.det_traces and result.report.det_traces is not None:
        with open(args.out_dir / "det_traces.csv", "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["class_id", "step", "log_det_cov"])
            for cid, series in sorted(result.report.det_traces.items()):
                for step, value in enumerate(series, start=1):
                    writer.writerow([cid, step, repr(value)])
    print(args.out_dir / "metrics.json")
    return EXIT_OK


def _cmd_eval(args) -> int:
    config = _load_config(args)
    store = load_store(args.store)
    data = _read_any(args.features)
    if data.n == 0 or not data.is_fully_labeled:
        raise VbgmError("eval needs a non-empty, fully labeled feature file")
    predicted, _ = classify_batch(store, data.data, config.classifier_metric)
    accuracy = float(np.mean(predicted == data.labels))
    print(f"samples: {data.n}")
    print(f"classes in store: {store.num_classes}")
    print(f"accuracy: {accuracy:.4f}")
    return EXIT_OK


def _cmd_estimate_k(args) -> int:
    config = _load_config(args)
    data = _read_any(args.features)
    k_min = args.k_min if args.k_min is not None else config.k_min
    k_max = args.k_max if args.k_max is not None else config.k_max
    k_max = min(k_max, data.n - 1)
    estimate = estimate_num_classes(data, k_min, k_max, seed=config.seed)
    print(estimate)
    return EXIT_OK


def _cmd_report(args) -> int:
    report = MetricsReport.from_json(args.metrics.read_text())
    print(report.render_table())
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "split": _cmd_split,
    "run": _cmd_run,
    "eval": _cmd_eval,
    "estimate-k": _cmd_estimate_k,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (VbgmError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
