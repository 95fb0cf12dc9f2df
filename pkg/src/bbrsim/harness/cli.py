"""Command-line front end: ``bbrsim run | sweep | report``."""

import argparse
import csv
import itertools
import logging
import os
import sys

from .. import metrics
from ..cc import ALGORITHMS
from . import cases as C
from .experiments import (ConfigError, dump_config, load_config, resolve_config, run_experiment,
                          with_duration)

log = logging.getLogger("bbrsim")

OUT_ENV = "BBRSIM_OUT"
DEFAULT_OUT = "results"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits on its own; route errors through our exit-code policy
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _out_root(args):
    return args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT


def _run_dir(root, cfg):
    name = f"{cfg.scenario}_case{cfg.case}_{cfg.algo}"
    if cfg.random_loss_rate:
        name += f"_loss{cfg.random_loss_rate:g}"
    return os.path.join(root, f"{name}_seed{cfg.seed}")


def _print_summary(summary):
    print(f"{summary.scenario} case={summary.case} algo={summary.algo} "
          f"jain={summary.jain_index:.3f} ratio={summary.ratio:.3f} util={summary.utilization:.3f} "
          f"owd={summary.mean_owd_ms:.1f}ms loss={summary.mean_loss_rate:.4f}")
    for fid, rate in summary.rates.items():
        print(f"  flow {fid}: {rate * 8 / 1e6:.3f} Mbps")


def cmd_run(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        if args.scenario is None:
            raise ConfigError("--scenario is required without --config")
        cfg = resolve_config(args.scenario, args.case, args.algo, loss=args.loss or 0.0,
                             seed=args.seed, duration_s=args.duration)
    if args.config:
        if args.seed is not None:
            cfg.seed = args.seed
        if args.duration is not None:
            cfg = with_duration(cfg, args.duration)
        cfg.validate()
    if args.print_config:
        sys.stdout.write(dump_config(cfg))
        return 0
    cfg.output_dir = _run_dir(_out_root(args), cfg)
    log.info("running %s -> %s", cfg.scenario, cfg.output_dir)
    summary = run_experiment(cfg)
    _print_summary(summary)
    print(f"wrote {cfg.output_dir}")
    return 0


def _sweep_points(scenario, algos, seeds, cases=None):
    if scenario == "responsiveness":
        grid = [(None, 0.0)]
    elif scenario == "utilization":
        grid = list(itertools.product(cases or C.UTILIZATION_CASES, C.UTILIZATION_LOSS_RATES))
    else:
        grid = [(c, 0.0) for c in (cases or C.CASE_TABLES[scenario])]
    return [(case, loss, algo, seed) for algo in algos for case, loss in grid for seed in seeds]


def _sweep_one(point):
    scenario, case, loss, algo, seed, root, duration = point
    cfg = resolve_config(scenario, case, algo, loss=loss, seed=seed, duration_s=duration)
    cfg.output_dir = _run_dir(root, cfg)
    summary = run_experiment(cfg)
    return cfg.output_dir, summary.utilization


def cmd_sweep(args):
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    for algo in algos:
        if algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHMS)}")
    if args.scenario not in C.SCENARIOS:
        raise ConfigError(f"unknown scenario {args.scenario!r}")
    seeds = [int(s) for s in args.seeds.split(",")]
    cases = [c.strip() for c in args.cases.split(",")] if args.cases else None
    root = _out_root(args)
    points = [(args.scenario, case, loss, algo, seed, root, args.duration)
              for case, loss, algo, seed in _sweep_points(args.scenario, algos, seeds, cases)]
    # validate everything before spending time on simulation
    for p in points:
        resolve_config(p[0], p[1], p[3], loss=p[2], seed=p[4], duration_s=p[6])
    print(f"sweep: {len(points)} runs -> {root}")
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, points))
    else:
        results = [_sweep_one(p) for p in points]
    for out, util in results:
        print(f"  {out}  util={util:.3f}")
    return 0


def collect(directory):
    """Rows of every summary.csv under ``directory``, one list per run."""
    runs = []
    for dirpath, _, files in sorted(os.walk(directory)):
        if "summary.csv" in files:
            runs.append(metrics.read_summary_csv(os.path.join(dirpath, "summary.csv")))
    return [r for r in runs if r]


def report_table(runs):
    """One line per run: per-flow rates (kbps), jain, ratio, util, owd, loss."""
    out = []
    for run in sorted(runs, key=lambda r: (r[0]["scenario"], r[0]["case"], r[0]["algo"])):
        head = run[0]
        rates = ", ".join(f"{float(r['avg_rate_bps']) / 1000:.0f}" for r in run)
        algos = "+".join(dict.fromkeys(r["algo"] for r in run))
        out.append([head["scenario"], head["case"], algos, rates, f"{float(head['jain']):.2f}",
                    f"{float(head['ratio']):.2f}", f"{float(head['util']):.2f}",
                    f"{float(head['mean_owd_ms']):.1f}", f"{float(head['loss_rate']):.4f}"])
    return out


REPORT_HEADER = ["scenario", "case", "algo", "rates_kbps", "jain", "ratio", "util",
                 "mean_owd_ms", "loss_rate"]


def cmd_report(args):
    if not os.path.isdir(args.dir):
        raise ConfigError(f"no such directory: {args.dir}")
    runs = collect(args.dir)
    if not runs:
        raise ConfigError(f"no summary.csv files under {args.dir}")
    table = report_table(runs)
    if args.csv:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        w.writerows(table)
        return 0
    widths = [max(len(str(r[i])) for r in table + [REPORT_HEADER]) for i in range(len(REPORT_HEADER))]
    for r in [REPORT_HEADER] + table:
        print("  ".join(str(v).ljust(w) for v, w in zip(r, widths)))
    return 0


def build_parser():
    p = _Parser(prog="bbrsim", description="Packet-level BBR-family congestion control experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    r = sub.add_parser("run", help="run one scenario/case/algorithm")
    r.add_argument("--scenario", choices=C.SCENARIOS)
    r.add_argument("--case")
    r.add_argument("--algo", default="bbr")
    r.add_argument("--loss", type=float, help="random loss rate on the bottleneck (0..1)")
    r.add_argument("--seed", type=int)
    r.add_argument("--duration", type=float, help="override simulated seconds")
    r.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    r.add_argument("--config", help="INI file overriding the scenario defaults")
    r.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run every case of a scenario for several algorithms")
    s.add_argument("--scenario", required=True)
    s.add_argument("--algos", required=True, help="comma-separated algorithm names")
    s.add_argument("--cases", help="comma-separated subset of cases")
    s.add_argument("--seeds", default="1")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--duration", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="aggregate summary.csv files into one table")
    rep.add_argument("--dir", required=True)
    rep.add_argument("--csv", action="store_true", help="emit CSV instead of aligned text")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "seed", None) is None and args.command == "run" and not args.config:
        args.seed = 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"bbrsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
