"""Command-line front end: calibrate, generate, learn, classify, evaluate.

Each command is a pure function of its input files, flags, and seed; a run
manifest (config snapshot, input digests, seed, version, wall time) is
written next to the outputs so any run can be replayed byte-identically.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import pandas as pd

from . import __version__
from .classifier import ClassifierConfig, ClassifierModel, classify_all, write_predictions_csv
from .clustering import CalibrationConfig, SignatureLibrary, extract_signatures
from .defaults import build_default_model
from .errors import (
    EndUseError,
    InputFormatError,
    InvalidInput,
    MissingFixtureData,
    ModelStateError,
)
from .evaluation import evaluate, per_class_frame
from .features import FeatureStats, learn_bounds
from .generator import UsageModel, generate
from .timeseries import (
    FEATURE_NAMES,
    FIXTURES,
    extract_events,
    load_labeled_events,
    read_trace_csv,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_STATE = 3


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(path: Path, command: str, params: dict, inputs: list[Path],
                    outputs: list[Path], seed: int | None, started: float) -> None:
    manifest = {
        "command": command,
        "params": params,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs if Path(p).is_file()},
        "outputs": {str(p): _sha256(Path(p)) for p in outputs if Path(p).is_file()},
        "seed": seed,
        "version": __version__,
        "wall_time_s": round(time.monotonic() - started, 3),
    }
    with open(path, "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def cmd_calibrate(args) -> int:
    started = time.monotonic()
    spec = args.k_range.replace("-", ":").split(":")
    if len(spec) != 2:
        raise InputFormatError(f"bad k-range '{args.k_range}', expected LO:HI")
    config = CalibrationConfig(
        k_min=int(spec[0]), k_max=int(spec[1]),
        smooth_degree=args.smooth_degree, seed=args.seed,
    )
    labeled = load_labeled_events(args.labeled_csv, cycle_gap_s=args.cycle_gap)
    series, _ = read_trace_csv(args.labeled_csv)
    library = extract_signatures(labeled, config, resolution_s=series.resolution)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    library.save(out)
    outputs = [out]
    if args.dump_similarity:
        outputs.extend(_dump_similarity(Path(args.dump_similarity), labeled, config))
    for fixture in sorted(library.fixtures):
        _say(args, f"{fixture}: {len(library.fixtures[fixture])} signature(s)")
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "calibrate",
                    {"k_range": args.k_range, "smooth_degree": args.smooth_degree,
                     "cycle_gap": args.cycle_gap},
                    [Path(args.labeled_csv)], outputs, args.seed, started)
    return EXIT_OK


def _dump_similarity(out_dir: Path, labeled, config: CalibrationConfig) -> list[Path]:
    """Debug export: the pairwise DTW matrix each fixture was clustered on."""
    from .clustering import subsample_events
    from .dtw import similarity_matrix

    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for fixture in sorted(labeled):
        raw = subsample_events([e.flows.samples for e in labeled[fixture]], config)
        if len(raw) < 2:
            continue
        matrix = similarity_matrix(raw)
        path = out_dir / f"{fixture}_similarity.csv"
        pd.DataFrame(matrix.values).to_csv(path, index=False, header=False,
                                           float_format="%.9g")
        written.append(path)
    return written


def cmd_generate(args) -> int:
    started = time.monotonic()
    if args.model == "default":
        model = build_default_model(resolution_s=args.resolution)
    else:
        model = UsageModel.load(args.model)
        if args.resolution != model.resolution_s:
            raise InvalidInput("model resolution does not match --resolution")
    dataset = generate(model, days=args.days, seed=args.seed)
    out_dir = Path(args.out_dir)
    paths = dataset.export(out_dir)
    _say(args, f"generated {args.days} day(s), {len(dataset.ledger)} events, "
               f"{dataset.skipped_events} skipped")
    inputs = [] if args.model == "default" else [Path(args.model)]
    _write_manifest(out_dir / "manifest.json", "generate",
                    {"days": args.days, "resolution": args.resolution, "model": args.model},
                    inputs, sorted(paths.values()), args.seed, started)
    return EXIT_OK


def _events_for_learning(source: Path, zero_eps: float):
    """Per-fixture event sets; intermittent fixtures stay at burst level."""
    if source.is_dir():
        by_fixture = {}
        for fixture in FIXTURES:
            path = source / f"{fixture}.csv"
            if not path.is_file():
                raise MissingFixtureData(f"missing fixture trace {path}")
            series, _ = read_trace_csv(path)
            by_fixture[fixture] = extract_events(series, zero_eps=zero_eps)
        return by_fixture
    # Labeled total trace: per-label events without cycle merging.
    series, labels = read_trace_csv(source)
    if labels is None:
        raise InputFormatError("learning from a single CSV requires a label column",
                               path=str(source))
    events = extract_events(series, zero_eps=zero_eps, labels=labels)
    by_fixture = {}
    for event in events:
        if event.label:
            by_fixture.setdefault(event.label, []).append(event)
    return by_fixture


def cmd_learn(args) -> int:
    started = time.monotonic()
    by_fixture = _events_for_learning(Path(args.traces), args.zero_eps)
    stats = learn_bounds(by_fixture)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    stats.save(out)
    if not args.quiet:
        _print_bounds_table(stats)
        for fixture, count in sorted(stats.counts.items()):
            if count < 2:
                print(f"warning: fixture '{fixture}' trained on a single event; "
                      f"bounds degenerate to a point")
    inputs = sorted(Path(args.traces).glob("*.csv")) if Path(args.traces).is_dir() \
        else [Path(args.traces)]
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "learn",
                    {"zero_eps": args.zero_eps}, inputs, [out], args.seed, started)
    return EXIT_OK


def _print_bounds_table(stats: FeatureStats) -> None:
    fixtures = sorted(stats.bounds)
    width = max(len(f) for f in fixtures) + 2
    header = "feature".ljust(14) + "".join(f.rjust(width + 12) for f in fixtures)
    print(header)
    for feature in FEATURE_NAMES:
        cells = []
        for fixture in fixtures:
            lo, hi = stats.interval(fixture, feature)
            cells.append(f"{lo:.3g}-{hi:.3g}".rjust(width + 12))
        print(feature.ljust(14) + "".join(cells))


def _load_model_dir(model_dir: Path, args) -> ClassifierModel:
    library_path = model_dir / "library.json"
    stats_path = model_dir / "stats.json"
    if not library_path.is_file() or not stats_path.is_file():
        raise ModelStateError(
            f"model dir {model_dir} must contain library.json and stats.json")
    config_path = Path(args.config) if args.config else model_dir / "config.json"
    if config_path.is_file():
        try:
            with open(config_path) as handle:
                config = ClassifierConfig.from_document(json.load(handle))
        except (TypeError, ValueError) as exc:
            raise InputFormatError(f"bad classifier config: {exc}",
                                   path=str(config_path)) from exc
    elif args.config:
        raise ModelStateError(f"config file {config_path} not found")
    else:
        config = ClassifierConfig()
    overrides = {}
    if args.variation_threshold is not None:
        overrides["variation_threshold"] = args.variation_threshold
    if args.edge_threshold is not None:
        overrides["edge_split_threshold"] = args.edge_threshold
    if args.dtw_threshold is not None:
        overrides["dtw_accept_threshold"] = args.dtw_threshold
    if args.max_depth is not None:
        overrides["max_decomposition_depth"] = args.max_depth
    if args.full_sliding:
        overrides["full_sliding"] = True
    if overrides:
        config = ClassifierConfig(**{**config.to_document(), **overrides})
    return ClassifierModel(
        library=SignatureLibrary.load(library_path),
        stats=FeatureStats.load(stats_path),
        config=config,
    )


def cmd_classify(args) -> int:
    started = time.monotonic()
    model = _load_model_dir(Path(args.model_dir), args)
    series, _ = read_trace_csv(args.trace_csv)
    predictions = classify_all(series, model)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_predictions_csv(out, predictions)
    _say(args, f"classified {len(predictions)} event(s)")
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "classify",
                    {"config": model.config.to_document(), "model_dir": args.model_dir},
                    [Path(args.trace_csv), Path(args.model_dir) / "library.json",
                     Path(args.model_dir) / "stats.json"],
                    [out], args.seed, started)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    started = time.monotonic()
    try:
        predictions = pd.read_csv(args.predictions_csv, keep_default_na=False)
        ledger = pd.read_csv(args.ledger_csv, keep_default_na=False)
    except (ValueError, pd.errors.ParserError) as exc:
        raise InputFormatError(f"could not parse inputs: {exc}") from exc
    report = evaluate(predictions, ledger, overlap_frac=args.overlap_frac)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.save(out)
    confusion_path = out.with_suffix(".confusion.csv")
    report.confusion.to_csv(confusion_path)
    count_path = out.with_suffix(".by_count.csv")
    per_class_frame(report, "count").to_csv(count_path, index=False, float_format="%.6g")
    volume_path = out.with_suffix(".by_volume.csv")
    per_class_frame(report, "volume").to_csv(volume_path, index=False, float_format="%.6g")

    if not args.quiet:
        _print_report(report)
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "evaluate",
                    {"overlap_frac": args.overlap_frac},
                    [Path(args.predictions_csv), Path(args.ledger_csv)],
                    [out, confusion_path, count_path, volume_path], args.seed, started)
    return EXIT_OK


def _print_report(report) -> None:
    print("single vs combined detection:")
    for category in ("single", "combined"):
        row = report.detection[category]
        print(f"  {category:9s} recall {100 * row['recall']:5.1f}%  "
              f"precision {100 * row['precision']:5.1f}%  f1 {100 * row['f1']:5.1f}%")
    for weighting, table, macro in (
        ("count", report.by_count, report.macro_f1_count),
        ("volume", report.by_volume, report.macro_f1_volume),
    ):
        print(f"per-class ({weighting}-weighted):")
        for name, metrics in sorted(table.items()):
            print(f"  {name:16s} recall {100 * metrics.recall:5.1f}%  "
                  f"precision {100 * metrics.precision:5.1f}%  f1 {100 * metrics.f1:5.1f}%")
        print(f"  macro f1: {100 * macro:.1f}%")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="enduse",
        description="Water end-use signature calibration, synthetic generation, "
                    "and non-intrusive event classification.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    common.add_argument("--config", default=None, metavar="JSON",
                        help="classifier-config JSON overriding built-in defaults")
    common.add_argument("--seed", type=int, default=0,
                        help="master seed for the seeded stages (default 0)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser(name, **kwargs):
        return sub.add_parser(name, parents=[common], **kwargs)

    p = add_parser("calibrate", help="extract a signature library from a labeled trace")
    p.add_argument("labeled_csv")
    p.add_argument("--out", required=True, help="output library JSON")
    p.add_argument("--k-range", default="2:10", help="cluster counts to try (LO:HI)")
    p.add_argument("--smooth-degree", type=int, default=None,
                   help="polynomial smoothing degree (off by default)")
    p.add_argument("--cycle-gap", type=float, default=900.0,
                   help="max pause (s) merged into one intermittent cycle")
    p.add_argument("--dump-similarity", default=None, metavar="DIR",
                   help="also write per-fixture DTW similarity matrices as CSV")
    p.set_defaults(func=cmd_calibrate)

    p = add_parser("generate", help="generate a synthetic labeled dataset")
    p.add_argument("out_dir")
    p.add_argument("--model", default="default", help="usage model JSON, or 'default'")
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--resolution", type=float, default=1.0, help="sampling period (s)")
    p.set_defaults(func=cmd_generate)

    p = add_parser("learn", help="learn per-fixture feature bounds from labeled traces")
    p.add_argument("traces", help="generator output directory or labeled CSV")
    p.add_argument("--out", required=True, help="output stats JSON")
    p.add_argument("--zero-eps", type=float, default=0.0)
    p.set_defaults(func=cmd_learn)

    p = add_parser("classify", help="classify events in a whole-house trace")
    p.add_argument("trace_csv")
    p.add_argument("--model-dir", required=True,
                   help="directory with library.json and stats.json")
    p.add_argument("--out", required=True, help="output predictions CSV")
    p.add_argument("--variation-threshold", type=float, default=None,
                   help="flow-step filter (L/s), default 0.01")
    p.add_argument("--edge-threshold", type=float, default=None,
                   help="edge rise/drop match tolerance (L/s), default 0.005")
    p.add_argument("--dtw-threshold", type=float, default=None,
                   help="DTW acceptance cost per aligned step, default 0.35")
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--full-sliding", action="store_true",
                   help="slide cycle windows sample by sample")
    p.set_defaults(func=cmd_classify)

    p = add_parser("evaluate", help="score predictions against a ground-truth ledger")
    p.add_argument("predictions_csv")
    p.add_argument("ledger_csv")
    p.add_argument("--out", required=True, help="output report JSON")
    p.add_argument("--overlap-frac", type=float, default=0.5)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (InputFormatError, InvalidInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (MissingFixtureData, ModelStateError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STATE
    except EndUseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
