"""Run a grid of methods x tasks and write one results file per cell plus a combined report.

    python3 scripts/benchmark.py --tasks toy-quadratic separable --methods grad-mean cma-es --out runs/
    python3 scripts/benchmark.py --quick      # reduced training budget, every method and task
"""
import argparse
from pathlib import Path

from mbo.harness import RunConfig, apply_options, emit_report, resolve_method, run
from mbo.optimizers import METHODS
from mbo.tasks import TASKS

QUICK_OPTIONS = ["train.epochs=5"]


def method_config(name: str, quick: bool, options: list[str]):
    cfg = resolve_method(name).default_config()
    opts = list(options)
    if quick and hasattr(cfg, "train"):
        opts = QUICK_OPTIONS + opts
    if quick and name == "autofocused-cbas":
        opts.append("refit_epochs=1")
    return apply_options(cfg, opts)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tasks", nargs="+", default=list(TASKS))
    ap.add_argument("--methods", nargs="+", default=list(METHODS))
    ap.add_argument("--trials", type=int, default=8)
    ap.add_argument("--k", type=int, default=128)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--quick", action="store_true", help="5 surrogate epochs per fit")
    ap.add_argument("--method-opt", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--out", type=Path, default=Path("runs"))
    ap.add_argument("--format", choices=["markdown", "json"], default="markdown")
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    reports = {}
    for task in args.tasks:
        for name in args.methods:
            cfg = method_config(name, args.quick, args.method_opt)
            path = args.out / f"{task}__{name}.json"
            rec = run(RunConfig(task, name, cfg, args.k, args.trials, args.seed, str(path)))
            reports[f"{name} ({task})" if len(args.tasks) > 1 else name] = rec.report
            print(f"{task:18s} {name:18s} p100 {rec.report.p100.mean:.3f}", flush=True)
    text = emit_report(reports, args.format)
    (args.out / f"report.{'md' if args.format == 'markdown' else 'json'}").write_text(text)
    print()
    print(text, end="")


if __name__ == "__main__":
    main()
