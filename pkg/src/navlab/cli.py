"""Command line front end.

Subcommands:
  run              roll out an agent over evaluation episodes
  train            optimize the recurrent policy (optionally a lambda_w sweep)
  validate         run the three-stage annotation checks over a corpus
  make-dataset     extract per-frame planning samples from clean annotations
  bench            measure amortized fast/slow step latency across plan periods
  render           draw one logged episode as an SVG
  sample-episodes  draw stratified episode sets from maps

Exit codes: 0 success, 2 configuration or input problem, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from collections import deque
from dataclasses import replace
from pathlib import Path
from time import perf_counter

import numpy as np

from .annot import (GroundingFormatError, IntervalGap, StubJudge, check_temporal,
                    label_samples, parse_grounding, quality_metrics, run_tqcm,
                    TrajectoryRecord)
from .configio import (ConfigError, ENV_OUT, canonical_hash, load_maps,
                       load_run_config, resolve_episodes)
from .env import (Difficulty, EmptyMap, EmptyViews, GridMap, Pose,
                  PositionInObstacle, RaggedRows, UnknownGlyph,
                  geodesic_distance, load_map, load_map_file, local_patch,
                  sample_episodes)
from .hier import (BridgePlanner, Plan, build_planner, make_request, null_plan,
                   should_plan)
from .metrics import LatencyProfile, amortized_latency, stratified_report
from .policy.net import PolicyNet, PolicyNetConfig, policy_step
from .policy.features import build_features
from .policy.train import load_checkpoint, train
from .render import render_to_file
from .rollout import GreedyAgent, PolicyAgent, evaluate
from .trajlog import TrajectoryWriter, read_log

LAMBDA_W_GRID = (1.0, 0.8, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1)

INPUT_ERRORS = (ConfigError, GroundingFormatError, RaggedRows, EmptyMap,
                UnknownGlyph, PositionInObstacle, EmptyViews,
                FileNotFoundError, IsADirectoryError, PermissionError,
                json.JSONDecodeError)


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path, columns, rows, config_hash: str) -> None:
    lines = [f"# config_hash={config_hash}", ",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def _environ_with_out(out_flag: str | None) -> dict:
    environ = dict(os.environ)
    if out_flag:
        environ[ENV_OUT] = out_flag
    return environ


def _build_agent(spec: dict, base: Path):
    kind = spec.get("type", "greedy")
    if kind == "greedy":
        return GreedyAgent()
    if kind == "policy":
        ckpt = spec.get("checkpoint")
        if not ckpt:
            raise ConfigError("policy agent needs a 'checkpoint' path")
        path = Path(ckpt)
        net, _ = load_checkpoint(path if path.is_absolute() else base / path)
        mode = spec.get("mode", "argmax")
        rng = (np.random.default_rng(int(spec.get("seed", 0)))
               if mode == "sample" else None)
        return PolicyAgent(net, mode=mode, rng=rng)
    raise ConfigError(f"unknown agent type {kind!r}")


# run ------------------------------------------------------------------------

def _cmd_run(args) -> int:
    cfg = load_run_config(args.config, _environ_with_out(args.out))
    base = Path(args.config).resolve().parent
    h = cfg.config_hash()
    maps = load_maps(cfg, base)
    episodes = resolve_episodes(cfg.episodes, maps, base)
    if not episodes:
        raise ConfigError("no evaluation episodes resolved")
    agent = _build_agent(cfg.agent, base)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    planner = build_planner(cfg.hier)
    try:
        with TrajectoryWriter(out / "trajectories.jsonl", config_hash=h,
                              extra={"command": "run"}) as writer:
            results = evaluate(maps, episodes, cfg.reward, cfg.hier, agent,
                               planner=planner, writer=writer)
    finally:
        close = getattr(planner, "close", None)
        if close is not None:
            close()
    report = stratified_report(results)
    rows = []
    for key in [d.value for d in Difficulty] + ["macro", "overall"]:
        if key in report:
            r = report[key]
            rows.append(("eval", key, r["n"], r["sr"], r["spl"]))
    _write_csv(out / "results.csv", ("split", "difficulty", "n", "SR", "SPL"),
               rows, h)
    print(f"run: {len(results)} episodes  SR={report['overall']['sr']:.3f}  "
          f"SPL={report['overall']['spl']:.3f}  out={out}")
    return 0


# train ----------------------------------------------------------------------

def _cmd_train(args) -> int:
    if args.sweep_lambda_w and args.resume:
        raise ConfigError("--sweep-lambda-w and --resume are mutually exclusive")
    cfg = load_run_config(args.config, _environ_with_out(args.out))
    base = Path(args.config).resolve().parent
    maps = load_maps(cfg, base)
    train_spec = cfg.train_episodes or cfg.episodes
    train_eps = resolve_episodes(train_spec, maps, base)
    probe_spec = cfg.probe_episodes or cfg.episodes
    probe_eps = resolve_episodes(probe_spec, maps, base) if probe_spec else train_eps

    if args.sweep_lambda_w:
        rows = []
        for lw in LAMBDA_W_GRID:
            sub = replace(cfg, reward=replace(cfg.reward, lambda_w=lw),
                          out_dir=str(Path(cfg.out_dir) / f"lambda_w_{lw:g}"))
            res = train(maps, train_eps, probe_eps, sub.reward, sub.hier,
                        sub.net, sub.train, sub.out_dir,
                        config_hash=sub.config_hash())
            rows.append((lw, res.final_probe_sr, res.final_probe_spl,
                         res.env_steps))
            print(f"lambda_w={lw:g}: SR={res.final_probe_sr:.3f} "
                  f"SPL={res.final_probe_spl:.3f}")
        _write_csv(Path(cfg.out_dir) / "sweep.csv",
                   ("lambda_w", "SR", "SPL", "env_steps"), rows,
                   cfg.config_hash())
        return 0

    res = train(maps, train_eps, probe_eps, cfg.reward, cfg.hier, cfg.net,
                cfg.train, cfg.out_dir, config_hash=cfg.config_hash(),
                resume_from=args.resume)
    print(f"train: {res.iterations} iterations, {res.env_steps} env steps, "
          f"probe SR={res.final_probe_sr:.3f} SPL={res.final_probe_spl:.3f}")
    print(f"  curve:      {res.curve_path}")
    print(f"  checkpoint: {res.checkpoint_path}")
    return 0


# validate / make-dataset ----------------------------------------------------

def _read_corpus(manifest, annotations) -> list[tuple[TrajectoryRecord, str]]:
    """Manifest: JSONL of trajectory records. Annotations: directory holding
    one <trajectory_id>.txt block per record."""
    records = []
    with open(manifest) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if obj.get("type") == "header":
                continue
            records.append(TrajectoryRecord.from_json(obj))
    adir = Path(annotations)
    if not adir.is_dir():
        raise ConfigError(f"annotations path {adir} is not a directory")
    if not any(adir.iterdir()):
        raise ConfigError(f"annotations directory {adir} is empty")
    out = []
    for record in records:
        path = adir / f"{record.trajectory_id}.txt"
        if not path.exists():
            raise ConfigError(f"no annotation block for {record.trajectory_id!r} "
                              f"under {adir}")
        out.append((record, path.read_text()))
    return out


def _cmd_validate(args) -> int:
    corpus = _read_corpus(args.manifest, args.annotations)
    judge = StubJudge.from_file(args.judge) if args.judge else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    h = canonical_hash({"command": "validate",
                        "manifest": Path(args.manifest).name,
                        "annotations": Path(args.annotations).name,
                        "judge": Path(args.judge).name if args.judge else None,
                        "frames_per_interval": args.frames_per_interval})
    reports = []
    with open(out / "tqcm_reports.jsonl", "w") as f:
        f.write(json.dumps({"type": "header", "config_hash": h},
                           sort_keys=True) + "\n")
        for record, annotation in corpus:
            rep = run_tqcm(record, annotation, judge, args.frames_per_interval)
            reports.append(rep)
            f.write(json.dumps(rep.to_json(), sort_keys=True) + "\n")
    qm = quality_metrics(reports)
    _write_csv(out / "quality.csv",
               ("samples", "format", "temporal", "semantic", "retained"),
               [(qm.n, qm.format_pct, qm.temporal_pct, qm.semantic_pct,
                 qm.retained)], h)
    print(f"validate: {qm.n} annotations, {qm.retained} retained  out={out}")
    return 0


def _cmd_make_dataset(args) -> int:
    if args.window < 0:
        raise ConfigError(f"--window must be >= 0, got {args.window}")
    if args.history_len < 0:
        raise ConfigError(f"--history-len must be >= 0, got {args.history_len}")
    corpus = _read_corpus(args.manifest, args.annotations)
    h = canonical_hash({"command": "make-dataset",
                        "manifest": Path(args.manifest).name,
                        "annotations": Path(args.annotations).name,
                        "window": args.window, "history_len": args.history_len})
    n_samples = kept = skipped = 0
    with open(args.out, "w") as f:
        f.write(json.dumps({"type": "header", "config_hash": h},
                           sort_keys=True) + "\n")
        for record, annotation in corpus:
            try:
                intervals = parse_grounding(annotation, record.num_frames)
            except GroundingFormatError:
                skipped += 1
                continue
            if not check_temporal(intervals, record.num_frames).ok:
                skipped += 1
                continue
            try:
                samples = label_samples(record, intervals, window=args.window,
                                        history_len=args.history_len)
            except (IntervalGap, ValueError):
                skipped += 1
                continue
            kept += 1
            for s in samples:
                f.write(json.dumps(s.to_json(), sort_keys=True) + "\n")
                n_samples += 1
    print(f"make-dataset: {kept} trajectories -> {n_samples} samples "
          f"({skipped} skipped)  out={args.out}")
    return 0


# bench ----------------------------------------------------------------------

def _bench_map() -> GridMap:
    rows = ["#" * 13] + ["#" + "." * 11 + "#" for _ in range(11)] + ["#" * 13]
    return load_map("\n".join(rows), {"cell_size_m": 0.25, "agent_radius_m": 0.1,
                                      "name": "bench"})


def _bench_one(gmap: GridMap, net: PolicyNet, goal: Pose,
               planner: BridgePlanner, k: int, steps: int) -> LatencyProfile:
    pose = Pose(1.625, 1.625, 0)
    hidden = net.zero_hidden(1)
    plan = null_plan(0)
    prev = None
    history: deque = deque(maxlen=15)
    fast_s = model_s = slow_s = 0.0
    n_slow = 0
    t_loop = perf_counter()
    for t in range(steps):
        if should_plan(t, k):
            t0 = perf_counter()
            patch = local_patch(gmap, pose)
            d = geodesic_distance(gmap, pose.position, goal.position)
            req = make_request(f"bench-k{k}", t, patch, pose, goal, d,
                               list(history))
            resp = planner.request(req)
            plan = Plan(resp.token, resp.waypoint, None, t, resp.text)
            slow_s += perf_counter() - t0
            n_slow += 1
        t0 = perf_counter()
        d = geodesic_distance(gmap, pose.position, goal.position)
        feats = build_features(gmap, pose, goal, d, plan, t, k, prev)
        t1 = perf_counter()
        _, _, hidden = policy_step(net, feats, hidden)
        t2 = perf_counter()
        fast_s += t2 - t0
        model_s += t2 - t1
        history.append((pose.x, pose.y, pose.heading))
        pose = Pose(pose.x, pose.y, pose.heading + 30)
    total_s = perf_counter() - t_loop
    return LatencyProfile(
        k=k,
        t_fast_ms=1000.0 * fast_s / steps,
        t_slow_ms=1000.0 * slow_s / max(n_slow, 1),
        model_ms=1000.0 * model_s / steps,
        measured_ms=1000.0 * total_s / steps,
    )


def _cmd_bench(args) -> int:
    try:
        k_values = tuple(int(v) for v in args.k_values.split(","))
    except ValueError as e:
        raise ConfigError(f"bad --k-values {args.k_values!r}: {e}") from e
    if not k_values or any(k < 1 for k in k_values):
        raise ConfigError("--k-values entries must be >= 1")
    if args.steps < 1:
        raise ConfigError("--steps must be >= 1")
    h = canonical_hash({"command": "bench", "t_slow_ms": args.t_slow_ms,
                        "k_values": list(k_values), "steps": args.steps,
                        "seed": args.seed})
    gmap = _bench_map()
    goal = Pose(2.625, 1.625, 0)
    net = PolicyNet.init(PolicyNetConfig(), seed=args.seed)
    planner = BridgePlanner(
        [sys.executable, "-m", "navlab.stub_planner",
         "--delay-ms", str(args.t_slow_ms)],
        timeout_s=args.t_slow_ms / 1000.0 * 5 + 5.0)
    profiles = []
    try:
        # spawn the subprocess and warm numpy outside the timed region
        warm = _bench_one(gmap, net, goal, planner, k=1, steps=2)
        del warm
        for k in k_values:
            profiles.append(_bench_one(gmap, net, goal, planner, k, args.steps))
    finally:
        planner.close()
    rows = [(p.k, p.t_fast_ms, p.t_slow_ms, p.model_ms, p.measured_ms, p.fps)
            for p in profiles]
    _write_csv(args.out, ("k", "t_fast_ms", "t_slow_ms", "model_ms",
                          "measured_ms", "fps"), rows, h)
    for p in profiles:
        predicted = amortized_latency(p.t_fast_ms, p.t_slow_ms, p.k)
        print(f"k={p.k:>3}  fast={p.t_fast_ms:.3f}ms  slow={p.t_slow_ms:.1f}ms  "
              f"model={p.model_ms:.3f}ms  measured={p.measured_ms:.3f}ms  "
              f"predicted={predicted:.3f}ms  fps={p.fps:.1f}")
    print(f"bench: wrote {args.out}")
    return 0


# render / sample-episodes ---------------------------------------------------

def _cmd_render(args) -> int:
    header, episodes = read_log(args.log)
    if args.episode:
        matches = [e for e in episodes if e.episode_id == args.episode]
        if not matches:
            raise ConfigError(f"episode {args.episode!r} not in {args.log}")
        ep = matches[0]
    else:
        ep = episodes[0] if episodes else None    # empty log: map-only image
    gmap = load_map_file(args.map)
    render_to_file(args.out, gmap, ep, revisit_radius=args.revisit_radius,
                   config_hash=header.get("config_hash", ""))
    what = ep.episode_id if ep is not None else "map only"
    print(f"render: {what} -> {args.out}")
    return 0


def _cmd_sample_episodes(args) -> int:
    h = canonical_hash({"command": "sample-episodes",
                        "maps": [Path(m).name for m in args.map],
                        "n_per_stratum": args.n_per_stratum, "seed": args.seed,
                        "max_steps": args.max_steps})
    episodes = []
    for idx, mpath in enumerate(args.map):
        gmap = load_map_file(mpath)
        episodes.extend(sample_episodes(gmap, n_per_stratum=args.n_per_stratum,
                                        seed=(args.seed, idx),
                                        max_steps=args.max_steps))
    with open(args.out, "w") as f:
        f.write(json.dumps({"type": "header", "config_hash": h},
                           sort_keys=True) + "\n")
        for ep in episodes:
            f.write(json.dumps(ep.to_json(), sort_keys=True) + "\n")
    print(f"sample-episodes: {len(episodes)} episodes -> {args.out}")
    return 0


# parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="navlab",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="roll out an agent over evaluation episodes")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override out_dir (same effect as NAVLAB_OUT)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("train", help="optimize the recurrent policy")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override out_dir (same effect as NAVLAB_OUT)")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--sweep-lambda-w", action="store_true",
                   help=f"train once per weight in {LAMBDA_W_GRID}")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("validate", help="run annotation quality control")
    p.add_argument("--manifest", required=True,
                   help="JSONL of trajectory records")
    p.add_argument("--annotations", required=True,
                   help="directory of <trajectory_id>.txt annotation blocks")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--judge", help="JSON fixture of semantic verdicts")
    p.add_argument("--frames-per-interval", type=int, default=4)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("make-dataset", help="extract planning samples")
    p.add_argument("--manifest", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True, help="output JSONL path")
    p.add_argument("--window", type=int, default=4)
    p.add_argument("--history-len", type=int, default=15)
    p.set_defaults(func=_cmd_make_dataset)

    p = sub.add_parser("bench", help="measure amortized step latency")
    p.add_argument("--t-slow-ms", type=int, default=374,
                   help="stub planner response delay")
    p.add_argument("--k-values", default="5,10,15,30,60")
    p.add_argument("--steps", type=int, default=5000,
                   help="timed steps per plan period")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="latency.csv")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("render", help="draw one logged episode as SVG")
    p.add_argument("--log", required=True, help="trajectories.jsonl path")
    p.add_argument("--map", required=True, help="map file the log was run on")
    p.add_argument("--out", required=True, help="output SVG path")
    p.add_argument("--episode", help="episode id (default: first in log)")
    p.add_argument("--revisit-radius", type=float, default=0.25)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("sample-episodes", help="draw stratified episode sets")
    p.add_argument("--map", action="append", required=True,
                   help="map file (repeatable)")
    p.add_argument("--n-per-stratum", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=500)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample_episodes)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except INPUT_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
