#!/usr/bin/env python3
"""Generate the synthetic annotation corpus used by the validator checks.

Emits, under --out:
  manifest.jsonl        trajectory records
  annotations/<id>.txt  one grounding block per trajectory
  truth.json            ids of the injected format and temporal defects
  judge.json            semantic fixture marking every judged interval consistent

The corpus is deterministic for a fixed seed. Format defects and temporal
defects are injected into disjoint trajectory sets; temporally broken blocks
still parse cleanly so they fail at exactly one stage.
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from navlab.annot import check_temporal, parse_grounding

PHRASES = (
    "exit the bedroom", "cross the hallway", "enter the kitchen",
    "approach the table", "turn toward the window", "follow the corridor",
    "pass the couch", "stop near the plant", "walk along the shelves",
    "go through the doorway",
)
TARGETS = ("red chair", "potted plant", "kitchen sink", "corner lamp",
           "wooden table", "bay window")
ACTION_NAMES = ("MoveForward", "TurnLeft", "TurnRight", "Stop")


def make_intervals(rng: np.random.Generator, num_frames: int, n_subs: int):
    cuts = sorted(rng.choice(np.arange(1, num_frames), size=n_subs - 1,
                             replace=False).tolist()) if n_subs > 1 else []
    bounds = [0] + cuts + [num_frames]
    return [(i + 1, bounds[i], bounds[i + 1]) for i in range(n_subs)]


def clean_block(rng: np.random.Generator, intervals, num_frames: int) -> str:
    lines = []
    for index, s, e in intervals:
        if e == num_frames and rng.random() < 0.3:
            lines.append(f"# Instruction{index}: from frame {s} onwards;")
        else:
            lines.append(f"# Instruction{index}: from frame {s} to frame {e};")
    return "\n".join(lines) + "\n"


def format_defect_block(kind: int, intervals, num_frames: int) -> str:
    lines = [f"# Instruction{i}: from frame {s} to frame {e};"
             for i, s, e in intervals]
    if kind == 0:      # keyword typo
        lines[0] = lines[0].replace("from frame", "form frame")
    elif kind == 1:    # missing leading marker
        lines[-1] = lines[-1].lstrip("# ")
    elif kind == 2:    # duplicate index
        i, s, e = intervals[-1]
        lines.append(f"# Instruction{intervals[0][0]}: from frame {s} to frame {e};")
    elif kind == 3:    # skipped index
        i, s, e = intervals[-1]
        lines[-1] = f"# Instruction{i + 1}: from frame {s} to frame {e};"
    elif kind == 4:    # non-integer frame
        i, s, e = intervals[0]
        lines[0] = f"# Instruction{i}: from frame {s} to frame {e}.five;"
    else:              # missing colon
        lines[0] = lines[0].replace(":", "", 1)
    return "\n".join(lines) + "\n"


def temporal_defect_block(kind: int, intervals, num_frames: int) -> str:
    ivs = [list(iv) for iv in intervals]
    if kind == 0 and len(ivs) >= 2:      # overlap: extend first into second
        ivs[0][2] = min(num_frames, ivs[1][2])
    elif kind == 1 and len(ivs) >= 2:    # start order: swap starts
        ivs[0][1], ivs[1][1] = ivs[1][1], ivs[0][1]
    elif kind == 2:                      # out of range
        ivs[-1][2] = num_frames + 3
    else:                                # empty interval
        ivs[0][2] = ivs[0][1]
    return "\n".join(f"# Instruction{i}: from frame {s} to frame {e};"
                     for i, s, e in ivs) + "\n"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--format-defects", type=int, default=68)
    ap.add_argument("--temporal-defects", type=int, default=50)
    ap.add_argument("--seed", type=int, default=20250823)
    args = ap.parse_args()
    if args.format_defects + args.temporal_defects > args.n:
        ap.error("more defects than trajectories")

    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    (out / "annotations").mkdir(parents=True, exist_ok=True)

    ids = [f"synt-{i:04d}" for i in range(args.n)]
    defective = rng.choice(args.n, size=args.format_defects + args.temporal_defects,
                           replace=False)
    format_ids = {ids[i] for i in defective[:args.format_defects]}
    temporal_ids = {ids[i] for i in defective[args.format_defects:]}

    judge = {}
    with open(out / "manifest.jsonl", "w") as mf:
        for tid in ids:
            num_frames = int(rng.integers(12, 41))
            n_subs = int(rng.integers(2, 6))
            intervals = make_intervals(rng, num_frames, n_subs)
            subs = [str(rng.choice(PHRASES)) for _ in range(n_subs)]
            record = {
                "id": tid,
                "num_frames": num_frames,
                "actions": [str(rng.choice(ACTION_NAMES))
                            for _ in range(num_frames)],
                "instruction": f"go to the {rng.choice(TARGETS)}",
                "sub_instructions": subs,
            }
            mf.write(json.dumps(record, sort_keys=True) + "\n")

            if tid in format_ids:
                block = format_defect_block(int(rng.integers(0, 6)),
                                            intervals, num_frames)
            elif tid in temporal_ids:
                kind = int(rng.integers(0, 4))
                if len(intervals) < 2 and kind in (0, 1):
                    kind = 3
                block = temporal_defect_block(kind, intervals, num_frames)
            else:
                block = clean_block(rng, intervals, num_frames)
                for index, _, _ in intervals:
                    judge[f"{tid}:{index}"] = {
                        "consistent": True,
                        "confidence": round(float(rng.uniform(0.7, 1.0)), 3),
                        "evidence_frames": [],
                        "reason": "fixture",
                    }
            (out / "annotations" / f"{tid}.txt").write_text(block)

            # self-check: every block fails exactly at its intended stage
            try:
                parsed = parse_grounding(block, num_frames)
            except Exception:
                assert tid in format_ids, f"{tid} unexpectedly fails format"
                continue
            assert tid not in format_ids, f"{tid} should fail format"
            ok = check_temporal(parsed, num_frames).ok
            assert ok != (tid in temporal_ids), f"{tid} temporal mismatch"

    (out / "truth.json").write_text(json.dumps({
        "format_defect_ids": sorted(format_ids),
        "temporal_defect_ids": sorted(temporal_ids),
    }, indent=2) + "\n")
    (out / "judge.json").write_text(json.dumps(judge, sort_keys=True) + "\n")
    print(f"wrote {args.n} trajectories ({len(format_ids)} format defects, "
          f"{len(temporal_ids)} temporal defects) under {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
