#!/usr/bin/env python3
"""Wandering-penalty ablation: train with both penalty terms versus neither
(null planner so the reward does the steering), paired over seeds, and test
whether the penalty improves pooled eval SPL."""
from __future__ import annotations

import argparse
import time
from pathlib import Path

from navlab.experiments import (EVAL_SAMPLER, TRAIN_SAMPLER, load_suite,
                                paired_one_sided_p, run_arm, suite_episodes,
                                write_results)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--maps-dir", default=Path(__file__).parent.parent / "maps")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--out", default="runs/wsp_ablation")
    args = ap.parse_args()

    maps = load_suite(args.maps_dir)
    train_eps = suite_episodes(maps, TRAIN_SAMPLER)
    eval_eps = suite_episodes(maps, EVAL_SAMPLER)
    out = Path(args.out)
    results = []
    for seed in range(args.seeds):
        for arm in ("null_wsp", "null_no_wsp"):
            t0 = time.time()
            r = run_arm(maps, train_eps, eval_eps, arm, seed,
                        out / f"{arm}-s{seed}", args.steps)
            results.append(r)
            print(f"{arm:11s} seed={seed}  SPL={r.overall_spl:.4f} "
                  f"SR={r.overall_sr:.4f}  ({time.time() - t0:.0f}s)")
    write_results(out / "results.jsonl", results)

    with_wsp = [r.overall_spl for r in results if r.arm == "null_wsp"]
    without = [r.overall_spl for r in results if r.arm == "null_no_wsp"]
    p = paired_one_sided_p(with_wsp, without)
    print(f"\nmean SPL with penalty    {sum(with_wsp) / len(with_wsp):.4f}")
    print(f"mean SPL without penalty {sum(without) / len(without):.4f}")
    print(f"paired one-sided p       {p:.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
