#!/usr/bin/env python3
"""Sweep the wandering-penalty weight over the standard grid on the suite,
one short training run per value, reporting final probe SR/SPL per weight."""
from __future__ import annotations

import argparse
import time
from dataclasses import replace
from pathlib import Path

from navlab.cli import LAMBDA_W_GRID
from navlab.experiments import (ARMS, EVAL_SAMPLER, NET_CONFIG, TRAIN_SAMPLER,
                                load_suite, suite_episodes, train_config)
from navlab.policy.train import train


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--maps-dir", default=Path(__file__).parent.parent / "maps")
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/lambda_sweep")
    args = ap.parse_args()

    maps = load_suite(args.maps_dir)
    train_eps = suite_episodes(maps, TRAIN_SAMPLER)
    eval_eps = suite_episodes(maps, EVAL_SAMPLER)
    reward_base, hier_cfg = ARMS["wsp"]
    out = Path(args.out)
    for lw in LAMBDA_W_GRID:
        rcfg = replace(reward_base, lambda_w=lw)
        t0 = time.time()
        res = train(maps, train_eps, eval_eps, rcfg, hier_cfg, NET_CONFIG,
                    train_config(args.seed, args.steps), out / f"lambda_w_{lw:g}")
        print(f"lambda_w={lw:<4g} probe SR={res.final_probe_sr:.4f} "
              f"SPL={res.final_probe_spl:.4f}  ({time.time() - t0:.0f}s)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
