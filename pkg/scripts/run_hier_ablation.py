#!/usr/bin/env python3
"""Hierarchy ablation: policies trained with the oracle planner versus the
null planner, compared on the hard stratum (SR and SPL), paired over seeds."""
from __future__ import annotations

import argparse
import time
from pathlib import Path

from navlab.experiments import (EVAL_SAMPLER, TRAIN_SAMPLER, load_suite,
                                run_arm, suite_episodes, write_results)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--maps-dir", default=Path(__file__).parent.parent / "maps")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--out", default="runs/hier_ablation")
    args = ap.parse_args()

    maps = load_suite(args.maps_dir)
    train_eps = suite_episodes(maps, TRAIN_SAMPLER)
    eval_eps = suite_episodes(maps, EVAL_SAMPLER)
    out = Path(args.out)
    results = []
    for seed in range(args.seeds):
        for arm in ("wsp", "null_wsp"):
            t0 = time.time()
            r = run_arm(maps, train_eps, eval_eps, arm, seed,
                        out / f"{arm}-s{seed}", args.steps)
            results.append(r)
            print(f"{arm:8s} seed={seed}  hard SR={r.hard_sr:.4f} "
                  f"SPL={r.hard_spl:.4f}  ({time.time() - t0:.0f}s)")
    write_results(out / "results.jsonl", results)

    def mean(xs):
        return sum(xs) / len(xs)

    oracle = [r for r in results if r.arm == "wsp"]
    null = [r for r in results if r.arm == "null_wsp"]
    print(f"\noracle planner  hard SR {mean([r.hard_sr for r in oracle]):.4f}  "
          f"SPL {mean([r.hard_spl for r in oracle]):.4f}")
    print(f"null planner    hard SR {mean([r.hard_sr for r in null]):.4f}  "
          f"SPL {mean([r.hard_spl for r in null]):.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
