"""Fast-slow control split: a slow planner refreshes a Plan every k steps,
the fast executor consumes it as features on every step.

Planners: Oracle (geodesic lookahead waypoints), Null (always Explore),
Scripted (responses replayed from a file), Bridge (line-delimited JSON over
a subprocess; wire format pinned in docs/protocol.md).
"""
from __future__ import annotations

import json
import math
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .env import GridMap, Pose

DEFAULT_PLAN_PERIOD = 15
DEFAULT_LOOKAHEAD_M = 2.0
DEFAULT_STOP_DISTANCE_M = 1.0
DEFAULT_BRIDGE_TIMEOUT_S = 2.0
PLAN_FEATURE_WIDTH = 10


class PlanToken(Enum):
    GoToWaypoint = "GoToWaypoint"
    ExitRoom = "ExitRoom"
    FollowCorridor = "FollowCorridor"
    ApproachGoal = "ApproachGoal"
    Explore = "Explore"
    StopNearGoal = "StopNearGoal"


PLAN_TOKENS = tuple(PlanToken)


class Unreachable(RuntimeError):
    """Oracle planner asked to plan toward a disconnected goal."""


class ProtocolError(RuntimeError):
    """Malformed bridge request or response line."""


class PlannerTimeout(RuntimeError):
    """Bridge planner did not answer within the deadline."""


class ProcessExited(RuntimeError):
    """Bridge subprocess terminated."""


@dataclass(frozen=True)
class Plan:
    token: PlanToken
    waypoint: tuple[float, float] | None
    heading_hint: int | None
    issued_at_step: int
    text: str = ""


@dataclass(frozen=True)
class HierConfig:
    k: int = DEFAULT_PLAN_PERIOD
    planner: str = "oracle"            # oracle | null | scripted | bridge
    planner_arg: str | None = None     # scripted: path, bridge: command line
    lookahead_m: float = DEFAULT_LOOKAHEAD_M
    stop_distance_m: float = DEFAULT_STOP_DISTANCE_M
    bridge_timeout_s: float = DEFAULT_BRIDGE_TIMEOUT_S
    history_len: int = 15

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("plan period k must be >= 1")
        if self.planner not in ("oracle", "null", "scripted", "bridge"):
            raise ValueError(f"unknown planner {self.planner!r}")


def should_plan(step: int, k: int) -> bool:
    """Slow path fires on step 0 and every k steps after."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return step % k == 0


# Wire codec -----------------------------------------------------------------

DISTANCE_BANDS = ("within_1m", "1_to_3m", "3_to_5m", "5_to_10m", "beyond_10m", "unknown")


def distance_band(d: float) -> str:
    if not math.isfinite(d):
        return "unknown"
    if d <= 1.0:
        return "within_1m"
    if d <= 3.0:
        return "1_to_3m"
    if d <= 5.0:
        return "3_to_5m"
    if d <= 10.0:
        return "5_to_10m"
    return "beyond_10m"


def bearing_octant(rel_bearing_deg: float) -> int:
    """Octant of an egocentric bearing: 0 is ahead, increasing CCW."""
    return int(((rel_bearing_deg + 22.5) % 360.0) // 45.0)


@dataclass(frozen=True)
class PlannerRequest:
    episode_id: str
    step: int
    patch: tuple[int, ...]             # 121 ints, row-major 11x11
    goal_bearing_octant: int
    goal_distance_band: str
    history: tuple[tuple[float, float, int], ...]

    def to_wire(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "step": self.step,
            "patch": list(self.patch),
            "goal_bearing_octant": self.goal_bearing_octant,
            "goal_distance_band": self.goal_distance_band,
            "history": [[x, y, h] for x, y, h in self.history],
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "PlannerRequest":
        return cls(
            episode_id=str(obj["episode_id"]),
            step=int(obj["step"]),
            patch=tuple(int(v) for v in obj["patch"]),
            goal_bearing_octant=int(obj["goal_bearing_octant"]),
            goal_distance_band=str(obj["goal_distance_band"]),
            history=tuple((float(p[0]), float(p[1]), int(p[2])) for p in obj["history"]),
        )


@dataclass(frozen=True)
class PlannerResponse:
    token: PlanToken
    waypoint: tuple[float, float] | None
    text: str = ""

    def to_wire(self) -> dict:
        return {
            "token": self.token.value,
            "waypoint": None if self.waypoint is None else [self.waypoint[0], self.waypoint[1]],
            "text": self.text,
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "PlannerResponse":
        try:
            token = PlanToken(obj["token"])
            wp = obj.get("waypoint")
            waypoint = None if wp is None else (float(wp[0]), float(wp[1]))
            return cls(token=token, waypoint=waypoint, text=str(obj.get("text", "")))
        except (KeyError, ValueError, TypeError, IndexError) as e:
            raise ProtocolError(f"bad planner response {obj!r}: {e}") from e


# Planning context ------------------------------------------------------------

@dataclass
class PlanningContext:
    """Everything a planner may look at. Oracle uses the privileged fields;
    wire planners only see the encoded request."""

    request: PlannerRequest
    pose: Pose
    goal: Pose | None = None
    gmap: GridMap | None = None
    dist_field: np.ndarray | None = None


def make_request(episode_id: str, step: int, patch: np.ndarray, pose: Pose,
                 goal: Pose, geodesic_d: float,
                 history: list[tuple[float, float, int]]) -> PlannerRequest:
    bearing = math.degrees(math.atan2(goal.y - pose.y, goal.x - pose.x)) - pose.heading
    return PlannerRequest(
        episode_id=episode_id,
        step=step,
        patch=tuple(int(v) for v in np.asarray(patch).reshape(-1)),
        goal_bearing_octant=bearing_octant(bearing),
        goal_distance_band=distance_band(geodesic_d),
        history=tuple(history),
    )


# Planners -------------------------------------------------------------------

def null_plan(step: int = 0) -> Plan:
    return Plan(PlanToken.Explore, None, None, step, "explore")


def _descent_path(gmap: GridMap, field_: np.ndarray,
                  start_cell: tuple[int, int]) -> list[tuple[int, int]]:
    """Steepest-descent cell path to the field's zero; ties broken by the
    fixed neighbour order, so the path is deterministic."""
    from .env import NEIGHBOURS_8
    path = [start_cell]
    cur = start_cell
    while field_[cur] > 0.0:
        best = None
        best_d = field_[cur]
        for dr, dc in NEIGHBOURS_8:
            nb = (cur[0] + dr, cur[1] + dc)
            if gmap.in_bounds(nb) and field_[nb] < best_d:
                best_d = field_[nb]
                best = nb
        if best is None:
            break
        path.append(best)
        cur = best
    return path


def oracle_plan(gmap: GridMap, pose: Pose, goal: Pose, step: int,
                lookahead_m: float = DEFAULT_LOOKAHEAD_M,
                stop_distance_m: float = DEFAULT_STOP_DISTANCE_M,
                dist_field: np.ndarray | None = None) -> Plan:
    """Privileged plan from the geodesic field.

    Within stop_distance of the goal: StopNearGoal. When the remaining path
    is within the lookahead budget: ApproachGoal with the goal as waypoint.
    Otherwise GoToWaypoint at the farthest line-of-sight path point within
    the lookahead.
    """
    if dist_field is None:
        dist_field = gmap.distance_field(gmap.cell_of(goal.x, goal.y))
    cell = gmap.cell_of(pose.x, pose.y)
    d = float(dist_field[cell])
    if math.isinf(d):
        raise Unreachable(f"goal unreachable from cell {cell}")
    if d <= stop_distance_m:
        return _with_hint(PlanToken.StopNearGoal, (goal.x, goal.y), pose, step,
                          "stop near goal")
    if d <= lookahead_m:
        return _with_hint(PlanToken.ApproachGoal, (goal.x, goal.y), pose, step,
                          "approach goal")
    path = _descent_path(gmap, dist_field, cell)
    cum = 0.0
    candidates = []
    for prev, nxt in zip(path, path[1:]):
        stepped = math.dist(gmap.center(prev), gmap.center(nxt))
        cum += stepped
        if cum > lookahead_m:
            break
        candidates.append(nxt)
    waypoint = None
    for cand in reversed(candidates):
        if gmap.segment_free(pose.position, gmap.center(cand)):
            waypoint = gmap.center(cand)
            break
    if waypoint is None and candidates:
        waypoint = gmap.center(candidates[0])
    if waypoint is None:
        waypoint = gmap.center(path[1]) if len(path) > 1 else pose.position
    return _with_hint(PlanToken.GoToWaypoint, waypoint, pose, step,
                      f"waypoint ({waypoint[0]:.2f}, {waypoint[1]:.2f})")


def _with_hint(token: PlanToken, waypoint: tuple[float, float], pose: Pose,
               step: int, text: str) -> Plan:
    bearing = math.degrees(math.atan2(waypoint[1] - pose.y, waypoint[0] - pose.x))
    hint = int(round(bearing / 30.0)) * 30 % 360
    return Plan(token, waypoint, hint, step, text)


class OraclePlanner:
    def __init__(self, cfg: HierConfig):
        self.cfg = cfg

    def plan(self, ctx: PlanningContext) -> Plan:
        return oracle_plan(ctx.gmap, ctx.pose, ctx.goal, ctx.request.step,
                           self.cfg.lookahead_m, self.cfg.stop_distance_m,
                           ctx.dist_field)


class NullPlanner:
    def __init__(self, cfg: HierConfig | None = None):
        pass

    def plan(self, ctx: PlanningContext) -> Plan:
        return null_plan(ctx.request.step)


class ScriptedPlanner:
    """Replays PlannerResponse lines from a JSONL file; the n-th planning
    call uses line n, clamped to the final line."""

    def __init__(self, path: str):
        self.responses: list[PlannerResponse] = []
        with open(path) as f:
            for line in f:
                line = line.strip()
                if line:
                    self.responses.append(PlannerResponse.from_wire(json.loads(line)))
        if not self.responses:
            raise ValueError(f"scripted planner file {path} is empty")
        self.calls = 0

    def plan(self, ctx: PlanningContext) -> Plan:
        resp = self.responses[min(self.calls, len(self.responses) - 1)]
        self.calls += 1
        return Plan(resp.token, resp.waypoint, None, ctx.request.step, resp.text)


class BridgePlanner:
    """Slow planner behind a subprocess speaking line-delimited JSON.

    One request line per planning call, one response line expected back.
    After a timeout the pending response may still arrive; stale lines are
    drained before the next request is written.
    """

    def __init__(self, cmd: str | list[str], timeout_s: float = DEFAULT_BRIDGE_TIMEOUT_S):
        self.cmd = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        self.timeout_s = timeout_s
        self.proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()

    def _ensure_started(self) -> None:
        if self.proc is not None:
            return
        self.proc = subprocess.Popen(
            self.cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True)
        t = threading.Thread(target=self._reader, daemon=True)
        t.start()

    def _reader(self) -> None:
        assert self.proc is not None and self.proc.stdout is not None
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)   # EOF sentinel

    def _drain_stale(self) -> None:
        while True:
            try:
                item = self._lines.get_nowait()
            except queue.Empty:
                return
            if item is None:
                self._lines.put(None)
                return

    def request(self, req: PlannerRequest, timeout_s: float | None = None) -> PlannerResponse:
        self._ensure_started()
        assert self.proc is not None and self.proc.stdin is not None
        self._drain_stale()
        try:
            self.proc.stdin.write(json.dumps(req.to_wire(), sort_keys=True) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, ValueError) as e:
            raise ProcessExited(f"bridge stdin closed: {e}") from e
        try:
            line = self._lines.get(timeout=timeout_s if timeout_s is not None else self.timeout_s)
        except queue.Empty:
            raise PlannerTimeout(f"no response within {self.timeout_s}s") from None
        if line is None:
            code = self.proc.poll()
            raise ProcessExited(f"bridge exited with code {code}")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ProtocolError(f"undecodable response line {line!r}") from e
        return PlannerResponse.from_wire(obj)

    def plan(self, ctx: PlanningContext) -> Plan:
        resp = self.request(ctx.request)
        return Plan(resp.token, resp.waypoint, None, ctx.request.step, resp.text)

    def close(self) -> None:
        if self.proc is None:
            return
        try:
            if self.proc.stdin:
                self.proc.stdin.close()
            self.proc.wait(timeout=2.0)
        except Exception:
            self.proc.kill()
        self.proc = None


def bridge_plan(planner: BridgePlanner, request: PlannerRequest,
                timeout_s: float | None = None) -> Plan:
    resp = planner.request(request, timeout_s)
    return Plan(resp.token, resp.waypoint, None, request.step, resp.text)


def build_planner(cfg: HierConfig):
    if cfg.planner == "oracle":
        return OraclePlanner(cfg)
    if cfg.planner == "null":
        return NullPlanner(cfg)
    if cfg.planner == "scripted":
        return ScriptedPlanner(cfg.planner_arg)
    return BridgePlanner(cfg.planner_arg, cfg.bridge_timeout_s)


@dataclass
class PlannerEvent:
    step: int
    kind: str      # timeout | protocol_error
    detail: str


class FastSlowController:
    """Holds the current Plan; refreshes it on the k-step boundary.

    Timeouts and protocol errors keep the previous plan and are recorded as
    events; a dead bridge process propagates.
    """

    def __init__(self, cfg: HierConfig, planner=None):
        self.cfg = cfg
        self.planner = planner if planner is not None else build_planner(cfg)
        self.current_plan: Plan = null_plan(0)
        self.events: list[PlannerEvent] = []
        self.planner_calls = 0

    def reset(self) -> None:
        self.current_plan = null_plan(0)
        self.events = []
        self.planner_calls = 0

    def step(self, ctx: PlanningContext) -> Plan:
        t = ctx.request.step
        if should_plan(t, self.cfg.k):
            self.planner_calls += 1
            try:
                self.current_plan = self.planner.plan(ctx)
            except PlannerTimeout as e:
                self.events.append(PlannerEvent(t, "timeout", str(e)))
            except ProtocolError as e:
                self.events.append(PlannerEvent(t, "protocol_error", str(e)))
        return self.current_plan


def plan_feature(plan: Plan, pose: Pose, step: int, k: int) -> np.ndarray:
    """Fixed-width plan encoding for the executor.

    Layout: token one-hot (6) | waypoint range, bearing sin, bearing cos in
    the agent frame (zeros when absent) | plan age / k. Width 10.
    """
    feat = np.zeros(PLAN_FEATURE_WIDTH)
    feat[PLAN_TOKENS.index(plan.token)] = 1.0
    if plan.waypoint is not None:
        dx = plan.waypoint[0] - pose.x
        dy = plan.waypoint[1] - pose.y
        rng = math.hypot(dx, dy)
        feat[6] = rng
        if rng > 0.0:
            bearing = math.atan2(dy, dx) - math.radians(pose.heading)
            feat[7] = math.sin(bearing)
            feat[8] = math.cos(bearing)
    feat[9] = (step - plan.issued_at_step) / k
    return feat
