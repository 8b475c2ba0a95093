"""Navigation metrics: SR, SPL, stratified reports, amortized latency,
wandering diagnostics."""
from __future__ import annotations

from dataclasses import dataclass

from .env import Action, Difficulty


class EmptyResultSet(ValueError):
    """Metric requested over zero episodes."""


class ZeroShortestPath(ValueError):
    """An episode carries a non-positive shortest path length."""


@dataclass(frozen=True)
class EpisodeResult:
    episode_id: str
    success: bool
    shortest_path_length: float   # l_i, metres
    path_length: float            # p_i, realized displacement sum
    steps: int
    revisit_steps: int = 0
    planner_calls: int = 0
    difficulty: Difficulty | None = None


def sr(results: list[EpisodeResult]) -> float:
    if not results:
        raise EmptyResultSet("sr over zero episodes")
    return sum(1.0 for r in results if r.success) / len(results)


def spl(results: list[EpisodeResult]) -> float:
    """Success weighted by shortest-path ratio: mean S_i * l_i / max(p_i, l_i)."""
    if not results:
        raise EmptyResultSet("spl over zero episodes")
    total = 0.0
    for r in results:
        if r.shortest_path_length <= 0:
            raise ZeroShortestPath(f"episode {r.episode_id} has l_i <= 0")
        if r.success:
            total += r.shortest_path_length / max(r.path_length, r.shortest_path_length)
    return total / len(results)


def stratified_report(results: list[EpisodeResult]) -> dict:
    """Per-stratum and overall SR/SPL.

    'overall' is the pooled mean over all episodes; 'macro' is the unweighted
    mean of per-stratum values and is reported alongside because the two
    disagree on unequal strata.
    """
    if not results:
        raise EmptyResultSet("report over zero episodes")
    report = {"overall": {"n": len(results), "sr": sr(results), "spl": spl(results)}}
    per = {}
    for diff in Difficulty:
        sub = [r for r in results if r.difficulty is diff]
        if sub:
            per[diff.value] = {"n": len(sub), "sr": sr(sub), "spl": spl(sub)}
    report.update(per)
    if per:
        report["macro"] = {
            "n": len(per),
            "sr": sum(v["sr"] for v in per.values()) / len(per),
            "spl": sum(v["spl"] for v in per.values()) / len(per),
        }
    return report


def amortized_latency(t_fast_ms: float, t_slow_ms: float, k: int) -> float:
    """Mean per-step latency when the slow path runs once every k steps."""
    if k <= 0:
        raise ValueError("k must be >= 1")
    return t_fast_ms + t_slow_ms / k


@dataclass(frozen=True)
class LatencyProfile:
    k: int
    t_fast_ms: float
    t_slow_ms: float
    model_ms: float
    measured_ms: float

    @property
    def fps(self) -> float:
        return 1000.0 / self.measured_ms


def oscillation_count(actions: list[Action]) -> int:
    """Heading reversals: turn, opposite turn, original turn within 3 steps."""
    n = 0
    for a, b, c in zip(actions, actions[1:], actions[2:]):
        if (a, b, c) in ((Action.TurnLeft, Action.TurnRight, Action.TurnLeft),
                         (Action.TurnRight, Action.TurnLeft, Action.TurnRight)):
            n += 1
    return n


def wandering_diagnostics(episode_log, shortest_path_length: float) -> dict:
    """Diagnostics from one parsed trajectory episode (trajlog.EpisodeLog).

    revisit_rate: fraction of action steps flagged revisit.
    path_ratio: realized path length / shortest path length.
    oscillation_count: left-right-left (or mirrored) action patterns.
    """
    steps = episode_log.steps
    if not steps:
        raise EmptyResultSet("diagnostics over zero steps")
    if shortest_path_length <= 0:
        raise ZeroShortestPath("shortest_path_length must be > 0")
    revisits = sum(1 for s in steps if s["revisit"])
    path_len = 0.0
    prev = (episode_log.start["x"], episode_log.start["y"])
    for s in steps:
        path_len += ((s["x"] - prev[0]) ** 2 + (s["y"] - prev[1]) ** 2) ** 0.5
        prev = (s["x"], s["y"])
    actions = [Action(s["action"]) for s in steps]
    return {
        "revisit_rate": revisits / len(steps),
        "path_ratio": path_len / shortest_path_length,
        "oscillation_count": oscillation_count(actions),
    }
