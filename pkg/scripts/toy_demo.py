"""Gradient ascent on the toy quadratic: learned model vs the best training design.

    python3 scripts/toy_demo.py --trials 3
"""
import argparse

from mbo.harness import RunConfig, emit_report, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--method", default="grad-mean")
    ap.add_argument("--trials", type=int, default=3)
    ap.add_argument("--k", type=int, default=128)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rec = run(RunConfig("toy-quadratic", args.method, K=args.k, trials=args.trials, base_seed=args.seed))
    for t in rec.trials:
        print(f"seed {t.seed}: p100 {t.p100:.4f}  p50 {t.p50:.4f}  dataset best {t.dataset_best:.4f}")
    print()
    print(emit_report({args.method: rec.report}), end="")


if __name__ == "__main__":
    main()
