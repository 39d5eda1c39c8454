"""Command-line entry points: train, eval, compare, plot."""

import argparse
import os
import sys

from .harness import SchemeSpec, run
from .metrics import compare as compare_runs
from .metrics import format_compare
from .scenario import Scenario


def _load_scenario(spec: str) -> Scenario:
    if spec == "paper" or spec == "default":
        return Scenario()
    if spec == "tiny":
        return Scenario.tiny()
    if not os.path.exists(spec):
        raise FileNotFoundError(f"scenario file {spec!r} not found")
    return Scenario.from_config(spec)


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", default="paper",
                   help="config file path, or 'paper'/'tiny'")
    p.add_argument("--scheme", default="d3qn-cup",
                   help="association-beamforming pair, e.g. d3qn-cup, dcd-wmmse")
    p.add_argument("--slots", type=int, default=None,
                   help="override the scenario's slot count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--checkpoint", default=None, help="checkpoint to load")
    p.add_argument("--force", action="store_true",
                   help="overwrite existing outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catnsim",
        description="Spectrum-sharing aerial-terrestrial network simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run with learning enabled")
    _add_run_args(p_train)
    p_eval = sub.add_parser("eval", help="run with frozen parameters")
    _add_run_args(p_eval)

    p_cmp = sub.add_parser("compare", help="tabulate finished runs")
    p_cmp.add_argument("runs", nargs="+", help="run output directories")

    p_plot = sub.add_parser("plot", help="render line charts from plot data")
    p_plot.add_argument("runs", nargs="+", help="run output directories")
    p_plot.add_argument("--out", default=None,
                        help="directory for images (default: inside each run)")
    return parser


def _cmd_run(args, mode: str) -> int:
    scn = _load_scenario(args.scenario)
    scheme = SchemeSpec.parse(args.scheme, mode=mode)
    summary = run(scn, scheme, seed=args.seed, out_dir=args.out,
                  slots=args.slots, checkpoint_in=args.checkpoint,
                  force=args.force)
    m = summary["metrics"]
    print(f"{scheme} seed={args.seed} slots={summary['slots']} "
          f"mean_sum_rate={m['mean_sum_rate']:.4f} "
          f"handover_pct={m['handover_pct']:.2f} -> {args.out}")
    return 0


def _cmd_compare(args) -> int:
    rows = compare_runs(args.runs)
    print(format_compare(rows))
    return 0


def _cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series_by_metric = {}
    for run_dir in args.runs:
        plot_dir = os.path.join(run_dir, "plotdata")
        for fname in sorted(os.listdir(plot_dir)):
            if not fname.endswith(".csv"):
                continue
            metric = fname[:-4]
            xs, ys = [], []
            with open(os.path.join(plot_dir, fname)) as fh:
                fh.readline()
                for line in fh:
                    s, v = line.strip().split(",")
                    xs.append(int(s))
                    ys.append(float(v))
            series_by_metric.setdefault(metric, []).append(
                (os.path.basename(os.path.normpath(run_dir)), xs, ys))
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    for metric, series in series_by_metric.items():
        fig, ax = plt.subplots(figsize=(7, 4))
        for label, xs, ys in series:
            ax.plot(xs, ys, label=label)
        ax.set_xlabel("slot")
        ax.set_ylabel(metric)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(out_dir, f"{metric}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            return _cmd_run(args, "train")
        if args.command == "eval":
            return _cmd_run(args, "eval")
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "plot":
            return _cmd_plot(args)
        raise ValueError(f"unknown command {args.command!r}")
    except Exception as exc:  # one-line machine-parsable failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
