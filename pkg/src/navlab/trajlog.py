"""Trajectory logs: JSON lines, one file per run.

Line types:
  header    {"type": "header", "config_hash": ..., "map": ...}
  start     {"type": "start", "episode_id", "t": 0, pose, d_t, alpha_t_deg}
  step      {"type": "step", "episode_id", "t", pose, action, d_t,
             alpha_t_deg, seven reward components, plan_token, plan_step,
             voxel_key, revisit, collided}
  terminal  {"type": "terminal", "episode_id", "success", "l_i", "p_i",
             "steps"}

Floats are written with repr round-tripping, so replaying a log reproduces
the logged reward components bit for bit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .env import Pose
from .reward import RewardBreakdown

REWARD_FIELDS = ("distance_term", "view_term", "slack_term", "success_term",
                 "wsp_path_term", "wsp_revisit_term", "total")


@dataclass
class EpisodeLog:
    episode_id: str
    start: dict
    steps: list[dict] = field(default_factory=list)
    terminal: dict | None = None


def start_record(episode_id: str, pose: Pose, d0: float, alpha0_deg: float,
                 goal: Pose | None = None) -> dict:
    rec = {
        "type": "start", "episode_id": episode_id, "t": 0,
        "x": pose.x, "y": pose.y, "heading": pose.heading,
        "d_t": d0, "alpha_t_deg": alpha0_deg,
    }
    if goal is not None:
        rec["goal"] = [goal.x, goal.y, goal.heading]
    return rec


def step_record(episode_id: str, t: int, pose: Pose, action: str, d_t: float,
                alpha_t_deg: float, breakdown: RewardBreakdown, plan_token: str,
                plan_step: int, voxel_key: tuple[int, ...] | None, revisit: bool,
                collided: bool) -> dict:
    rec = {
        "type": "step", "episode_id": episode_id, "t": t,
        "x": pose.x, "y": pose.y, "heading": pose.heading,
        "action": action, "d_t": d_t, "alpha_t_deg": alpha_t_deg,
    }
    for name in REWARD_FIELDS:
        rec[name] = getattr(breakdown, name)
    rec["plan_token"] = plan_token
    rec["plan_step"] = plan_step
    rec["voxel_key"] = list(voxel_key) if voxel_key is not None else None
    rec["revisit"] = revisit
    rec["collided"] = collided
    return rec


def terminal_record(episode_id: str, success: bool, l_i: float, p_i: float,
                    steps: int) -> dict:
    return {"type": "terminal", "episode_id": episode_id, "success": success,
            "l_i": l_i, "p_i": p_i, "steps": steps}


class TrajectoryWriter:
    def __init__(self, path: str | Path, config_hash: str = "", extra: dict | None = None):
        self.path = Path(path)
        self._f = open(self.path, "w")
        header = {"type": "header", "config_hash": config_hash}
        if extra:
            header.update(extra)
        self.write(header)

    def write(self, record: dict) -> None:
        self._f.write(json.dumps(record) + "\n")

    def close(self) -> None:
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_log(path: str | Path) -> tuple[dict, list[EpisodeLog]]:
    """Parse a trajectory log into (header, per-episode logs)."""
    header = {}
    episodes: dict[str, EpisodeLog] = {}
    order: list[str] = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            kind = rec.get("type")
            if kind == "header":
                header = rec
                continue
            eid = rec["episode_id"]
            if kind == "start":
                episodes[eid] = EpisodeLog(episode_id=eid, start=rec)
                order.append(eid)
            elif kind == "step":
                episodes[eid].steps.append(rec)
            elif kind == "terminal":
                episodes[eid].terminal = rec
    return header, [episodes[eid] for eid in order]
