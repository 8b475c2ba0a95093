"""Line-JSON stub planner for bridge tests and latency benchmarks.

Reads PlannerRequest lines on stdin, answers one response line each, with an
optional fixed delay standing in for a slow model. Run as
`python -m navlab.stub_planner --delay-ms 374`.
"""
from __future__ import annotations

import argparse
import json
import sys
import time


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--delay-ms", type=float, default=0.0)
    ap.add_argument("--delay-first-ms", type=float, default=0.0,
                    help="extra delay applied to the first request only")
    ap.add_argument("--token", default="Explore")
    ap.add_argument("--text", default="stub")
    ap.add_argument("--echo-step", action="store_true",
                    help="answer with text set to the request's step (testing)")
    ap.add_argument("--malformed-every", type=int, default=0,
                    help="emit a garbage line for every Nth request (testing)")
    args = ap.parse_args(argv)
    n = 0
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        n += 1
        try:
            req = json.loads(line)
        except json.JSONDecodeError:
            sys.stdout.write("not json\n")
            sys.stdout.flush()
            continue
        if args.delay_ms > 0:
            time.sleep(args.delay_ms / 1000.0)
        if n == 1 and args.delay_first_ms > 0:
            time.sleep(args.delay_first_ms / 1000.0)
        if args.malformed_every and n % args.malformed_every == 0:
            sys.stdout.write("this is not a planner response\n")
        else:
            text = str(req.get("step", "")) if args.echo_step else args.text
            resp = {"token": args.token, "waypoint": None, "text": text}
            sys.stdout.write(json.dumps(resp) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
