"""Command-line entry point (``mbo``).

Exit codes: 0 on success, 1 on a usage error, 2 when a command fails at runtime.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import MBOError
from .harness import RunConfig, apply_options, emit_report, load_results, resolve_method, run
from .optimizers import METHODS
from .tasks import TASKS, build_dataset, get_task, resample_histogram, slice_drop, slice_scan

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_list_tasks(args) -> None:
    for name, make in TASKS.items():
        t = make()
        print(f"{name}\t{t.space.kind}\t{(make.__doc__ or '').strip().splitlines()[0]}")


def cmd_list_methods(args) -> None:
    for name, m in METHODS.items():
        print(f"{name}\t{m.description}")


def cmd_run(args) -> None:
    try:
        task = get_task(args.task)
        method = resolve_method(args.method)
        cfg = apply_options(method.default_config(), args.method_opt or [])
        config = RunConfig(task.name, method.name, cfg, args.k, args.trials, args.seed, args.out)
    except (KeyError, MBOError, TypeError) as e:
        raise UsageError(str(e)) from e
    rec = run(config)
    sys.stdout.write(emit_report({method.name: rec.report}, args.format, config.to_dict()))


def cmd_histogram(args) -> None:
    try:
        task = get_task(args.task)
    except KeyError as e:
        raise UsageError(str(e)) from e
    dataset = build_dataset(task, args.seed)
    h = resample_histogram(task, dataset, args.n, args.bins, args.seed)
    body = {"task": task.name, "n": args.n, "bins": args.bins, "seed": args.seed, **h.to_dict()}
    _write(json.dumps(body, indent=2) + "\n", args.out)
    print(f"dataset mean {h.dataset_mean:.4f}  uniform-resample mean {h.resampled_mean:.4f}", file=sys.stderr)


def cmd_slice(args) -> None:
    try:
        task = get_task(args.task)
    except KeyError as e:
        raise UsageError(str(e)) from e
    dataset = build_dataset(task, args.seed)
    design = dataset.designs[dataset.top_k(1)[0]]
    ts, values = slice_scan(task, design, args.coord, args.n)
    drop = slice_drop(ts, values, args.window)
    body = {"task": task.name, "coord": args.coord, "window": args.window, "drop": drop,
            "t": ts.tolist(), "score": values.tolist()}
    _write(json.dumps(body, indent=2) + "\n", args.out)
    print(f"drop within +-{args.window}: {drop:.3f}", file=sys.stderr)


def cmd_report(args) -> None:
    reports = {}
    for path in args.inputs:
        rec = load_results(path)
        label = rec.config.method
        if label in reports:
            label = f"{label} ({rec.config.task})"
        reports[label] = rec.report
    sys.stdout.write(emit_report(reports, args.format))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mbo", description="Offline model-based optimization benchmark")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("list-tasks", help="list registered tasks").set_defaults(fn=cmd_list_tasks)
    sub.add_parser("list-methods", help="list registered methods").set_defaults(fn=cmd_list_methods)

    r = sub.add_parser("run", help="run seeded trials of one method on one task")
    r.add_argument("--task", required=True)
    r.add_argument("--method", required=True)
    r.add_argument("--k", type=int, default=128)
    r.add_argument("--trials", type=int, default=8)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", help="write the full run record (JSON) here")
    r.add_argument("--format", choices=["json", "markdown"], default="markdown")
    r.add_argument("--method-opt", action="append", metavar="KEY=VALUE",
                   help="override a method option; dotted keys reach nested configs (train.epochs=20)")
    r.set_defaults(fn=cmd_run)

    h = sub.add_parser("histogram", help="dataset vs uniform-resample score histograms")
    h.add_argument("--task", required=True)
    h.add_argument("--n", type=int, default=3200)
    h.add_argument("--bins", type=int, default=40)
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--out")
    h.set_defaults(fn=cmd_histogram)

    s = sub.add_parser("slice", help="1-D oracle scan through the best training design")
    s.add_argument("--task", required=True)
    s.add_argument("--coord", type=int, default=0)
    s.add_argument("--n", type=int, default=401)
    s.add_argument("--window", type=float, default=0.2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_slice)

    rep = sub.add_parser("report", help="tabulate saved run records")
    rep.add_argument("--in", dest="inputs", nargs="+", required=True)
    rep.add_argument("--format", choices=["json", "markdown"], default="markdown")
    rep.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.fn(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except (MBOError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
