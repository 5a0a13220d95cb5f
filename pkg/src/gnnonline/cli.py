"""Command-line entry point: prepare, run, grid, analyze."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .data import PUBLISHED_STATS, BundleError, build_setting_a, build_setting_b, load_bundle, split_edge_stats
from .harness import DATASETS, PRETRAIN_OPTIONS, SETTINGS, ExperimentConfig, enumerate_grid, read_records, run_grid
from .models import MODEL_KINDS

logger = logging.getLogger("gnnonline")


def _fmt(value, ref):
    if ref is None:
        return f"{value}\t-\t-"
    if isinstance(ref, float):
        return f"{value:.2f}\t{ref:.2f}\t{'ok' if abs(value - ref) <= 0.01 else 'DIFF'}"
    return f"{value}\t{ref}\t{'ok' if value == ref else 'DIFF'}"


def cmd_prepare(args) -> int:
    print("dataset\tsetting\tquantity\tvalue\tpublished\tstatus")
    status = 0
    for name in args.datasets:
        path = Path(args.data_dir) / name
        try:
            bundle = load_bundle(path)
        except (BundleError, OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            status = 1
            continue
        ref = PUBLISHED_STATS.get(name, {})
        g = bundle.graph()
        for key, value in (("nodes", bundle.num_nodes), ("edges", g.num_edges),
                           ("features", bundle.num_features), ("classes", bundle.num_classes),
                           ("avg_degree", g.mean_degree)):
            print(f"{name}\t-\t{key}\t{_fmt(value, ref.get(key))}")
        split_a = build_setting_a(bundle, args.seed)
        for split in (split_a, build_setting_b(split_a)):
            train_e, unseen_e = split_edge_stats(g, split)
            sref = ref.get(split.setting, {})
            for key, value in (("train", split.train.size), ("train_edges", train_e),
                               ("unseen", split.unseen.size), ("unseen_edges", unseen_e),
                               ("test", split.test.size)):
                print(f"{name}\t{split.setting}\t{key}\t{_fmt(int(value), sref.get(key))}")
            print(f"{name}\t{split.setting}\tlabel_rate\t{100 * split.train.size / bundle.num_nodes:.1f}%\t-\t-")
    return status


def _run_configs(args, configs) -> int:
    written, failed = run_grid(configs, args.data_dir, args.out, workers=args.workers,
                               reseed_splits=args.reseed_splits, timing=args.timing)
    logger.info("wrote %d records to %s (%d failed)", written, args.out, failed)
    if failed:
        print(f"error: {failed} run(s) failed; see log", file=sys.stderr)
        return 1
    return 0


def cmd_run(args) -> int:
    config = ExperimentConfig(args.model, args.dataset, args.setting, args.pretrain_epochs,
                              args.inference_epochs, args.reps, args.seed)
    if not (Path(args.data_dir) / args.dataset / "meta.json").is_file():
        print(f"error: no bundle at {Path(args.data_dir) / args.dataset}", file=sys.stderr)
        return 2
    return _run_configs(args, [config])


def cmd_grid(args) -> int:
    configs = enumerate_grid(args.datasets, args.settings, args.models, args.pretrain_options,
                             args.inference_epochs, args.reps, args.seed)
    if args.list:
        print("config_id\tmodel\tdataset\tsetting\tpretrain_epochs\trepetitions")
        for c in configs:
            print(f"{c.config_id}\t{c.model}\t{c.dataset}\t{c.setting}\t{c.pretrain_epochs}\t{c.repetitions}")
        print(f"# {len(configs)} configurations, {len(configs) * args.reps} runs", file=sys.stderr)
        return 0
    missing = [d for d in args.datasets if not (Path(args.data_dir) / d / "meta.json").is_file()]
    if missing:
        print(f"error: missing bundles under {args.data_dir}: {', '.join(missing)}", file=sys.stderr)
        return 2
    return _run_configs(args, configs)


def cmd_analyze(args) -> int:
    from .report import analyze_records, emit_outputs

    try:
        records = read_records(args.records)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not records:
        print("error: no run records found", file=sys.stderr)
        return 1
    try:
        summaries, report = analyze_records(records, args.bins, args.jsd_from)
        paths = emit_outputs(summaries, report, args.out_dir)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print("model\tpretrain_epochs\tn_a\tn_b\tjsd")
    for r in report:
        print(f"{r.model}\t{r.pretrain_epochs}\t{r.n_a}\t{r.n_b}\t{r.jsd:.4f}")
    for p in paths:
        logger.info("wrote %s", p)
    return 0


def _add_run_flags(p):
    p.add_argument("--inference-epochs", type=int, default=50)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-dir", default="data")
    p.add_argument("--out", default="results/records.jsonl")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--reseed-splits", action="store_true",
                   help="draw a fresh split per repetition instead of one per dataset")
    p.add_argument("--timing", action="store_true",
                   help="store wall-clock milliseconds per run (makes record files non-reproducible)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gnnonline", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="validate bundles and compare split statistics with the published table")
    p.add_argument("--data-dir", default="data")
    p.add_argument("--datasets", nargs="+", default=list(DATASETS))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("run", help="repetitions of a single configuration")
    p.add_argument("--dataset", required=True, help="bundle name under --data-dir: cora, citeseer or pubmed")
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--setting", required=True, choices=SETTINGS)
    p.add_argument("--pretrain-epochs", type=int, default=200)
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grid", help="the full 5 models x 3 datasets x 2 settings x 2 pretraining sweep")
    p.add_argument("--datasets", nargs="+", default=list(DATASETS))
    p.add_argument("--models", nargs="+", choices=MODEL_KINDS, default=list(MODEL_KINDS))
    p.add_argument("--settings", nargs="+", choices=SETTINGS, default=list(SETTINGS))
    p.add_argument("--pretrain-options", nargs="+", type=int, default=list(PRETRAIN_OPTIONS))
    p.add_argument("--list", action="store_true", help="print the configurations and exit")
    _add_run_flags(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("analyze", help="curve tables, JSD report and figures from record files")
    p.add_argument("--records", nargs="+", required=True)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--jsd-from", choices=("final", "curve"), default="final",
                   help="final: histograms of final-epoch accuracies; curve: mean curves as distributions over epochs")
    p.add_argument("--out-dir", default="report")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
