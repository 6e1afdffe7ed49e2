"""Command-line entry point: ``l2ral {train-sorter,run,report,check}``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from .alsim import ConfigError, run_experiment
from .config import apply_settings, default_config, dump_config, load_config_file
from .models import ModelError, load_sorter, save_sorter
from .reporting import ReportError, read_metrics_csv, rows_from_results, summarize, write_metrics_csv, write_summary_csv
from .strategies import STRATEGY_NAMES

log = logging.getLogger("l2ral")


def build_parser():
    parser = argparse.ArgumentParser(prog="l2ral", description="Listwise loss-ranking active learning at desk scale.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-sorter", help="fit the differentiable sorter on synthetic sequences")
    p.add_argument("--d", type=int, required=True, help="sequence length (the LPM mini-batch size)")
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--corpus", type=int, default=100_000, help="synthetic training sequences")
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=None, help="stop after this many epochs without held-out gain")
    p.add_argument("--time-budget", type=float, default=None, help="stop after this many seconds")
    p.add_argument("--out", required=True, help="artifact path; a .meta header is written next to it")

    p = sub.add_parser("run", help="run an active-learning experiment")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--strategy", help=f"comma-separated subset of {','.join(STRATEGY_NAMES)}")
    p.add_argument("--cycles", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--init-size", type=int)
    p.add_argument("--subset-size", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seeds", help="comma-separated seeds, e.g. 0,1,2")
    p.add_argument("--dataset", help="blobs-classification, hard-regression, grid-image or csv-tabular")
    p.add_argument("--sorter", help="trained sorter artifact (required for listwise)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="any other configuration key; repeatable")
    p.add_argument("--out", required=True, help="output directory for metrics.csv")

    p = sub.add_parser("report", help="summarize a metrics file and draw learning curves")
    p.add_argument("metrics", help="metrics.csv written by `run`")
    p.add_argument("--out", help="output directory (default: next to the metrics file)")
    p.add_argument("--metric", action="append", help="restrict the figure to these metrics")

    p = sub.add_parser("check", help="gradient and oracle self-tests")
    p.add_argument("--points", type=int, default=3, help="random draws per primitive")
    return parser


def cmd_train_sorter(args):
    from .ranking import train_sorter

    start = time.monotonic()
    rep = train_sorter(
        args.d, epochs=args.epochs, corpus_size=args.corpus, seed=args.seed, hidden=args.hidden,
        batch_size=args.batch_size, lr=args.lr, patience=args.patience, time_budget=args.time_budget,
        callback=lambda r: print(f"epoch {r['epoch']} train_mse {r['train_mse']:.6f} "
                                 f"heldout_mse {r['heldout_mse']:.6f}", flush=True),
    )
    save_sorter(rep.sorter, args.out, seed=args.seed, corpus=args.corpus, epochs_run=rep.epochs_run,
                heldout_spearman=f"{rep.heldout_spearman:.6f}")
    print(f"d={args.d} epochs={rep.epochs_run} heldout_spearman={rep.heldout_spearman:.4f} "
          f"time={time.monotonic() - start:.0f}s -> {args.out}")
    return 0


def _run_settings(args):
    settings = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, _, v = item.partition("=")
        settings[k] = v.strip()
    for key, attr in (("strategy", "strategy"), ("cycles", "cycles"), ("budget", "budget"),
                      ("init_size", "init_size"), ("subset_size", "subset_size"),
                      ("batch_size", "batch_size"), ("epochs", "epochs"), ("seeds", "seeds"),
                      ("dataset", "dataset"), ("sorter", "sorter")):
        value = getattr(args, attr)
        if value is not None:
            settings[key] = str(value)
    return settings


def cmd_run(args):
    config = default_config()
    if args.config:
        config = apply_settings(config, load_config_file(args.config))
    config = apply_settings(config, _run_settings(args))
    sorter = None
    if config.sorter_path:
        if not Path(config.sorter_path).exists():
            raise ConfigError(
                f"sorter artifact {config.sorter_path} not found; create it with "
                f"`l2ral train-sorter --d {config.batch_size} --out {config.sorter_path}`"
            )
        sorter = load_sorter(config.sorter_path).sorter
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_experiment(config, sorter=sorter)
    rows = rows_from_results(results)
    (out / "config.txt").write_text(dump_config(config))
    failed = [r for r in results if r.error]
    if rows:
        path = write_metrics_csv(rows, out / "metrics.csv")
        print(f"wrote {len(rows)} rows to {path}")
    for r in failed:
        print(f"error: {r.strategy} seed {r.seed}: {r.error}", file=sys.stderr)
    return 1 if failed else 0


def cmd_report(args):
    from .plotting import render_curves

    metrics = Path(args.metrics)
    out = Path(args.out) if args.out else metrics.parent
    out.mkdir(parents=True, exist_ok=True)
    rows = read_metrics_csv(metrics)
    if not rows:
        raise ReportError(f"{metrics}: no metric rows")
    summary = summarize(rows)
    write_summary_csv(summary, out / "summary.csv")
    render_curves(metrics, out / "curves.svg", metrics=args.metric)
    for s in summary:
        if s.cycle == max(t.cycle for t in summary if t.strategy == s.strategy and t.metric == s.metric):
            print(f"{s.strategy},{s.metric},labeled={s.labeled},mean={s.mean:.4f},std={s.std:.4f},n={s.n}")
    print(f"wrote {out / 'summary.csv'} and {out / 'curves.svg'}")
    return 0


def cmd_check(args):
    from .selfcheck import run_checks

    ok = True
    for name, passed, detail in run_checks(points=args.points):
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return 0 if ok else 1


COMMANDS = {"train-sorter": cmd_train_sorter, "run": cmd_run, "report": cmd_report, "check": cmd_check}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ReportError, ModelError, FileNotFoundError) as exc:
        print(f"l2ral {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
