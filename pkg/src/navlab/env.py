"""Deterministic 2-D navigation world on an ASCII occupancy grid.

Geometry is metric: cell (r, c) spans x in [c*s, (c+1)*s) and y in
[r*s, (r+1)*s) for cell size s; row 0 is the first line of the map text.
Headings are integer degrees, multiples of 30, measured CCW from +x.
Obstacles are inflated by the agent radius before any free-space query,
so the agent is a point in the inflated map.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

MOVE_STEP_M = 0.25
TURN_STEP_DEG = 30
DEFAULT_MAX_STEPS = 500
SQRT2 = math.sqrt(2.0)

# 8-connected lattice neighbourhood, fixed order for determinism.
NEIGHBOURS_8 = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
)


class RaggedRows(ValueError):
    """Map rows are not all the same length."""


class EmptyMap(ValueError):
    """Map has no rows or no columns."""


class UnknownGlyph(ValueError):
    """Map contains a character outside '#', '.', 'S', 'G'."""


class PositionInObstacle(ValueError):
    """A queried position lies in an inflated-obstacle cell."""


class EmptyViews(ValueError):
    """view_angle_diff called with no goal views."""


class StratumUnsatisfiable(RuntimeError):
    """Episode sampling exhausted its attempt budget for one stratum."""

    def __init__(self, stratum: "Difficulty", attempts: int):
        super().__init__(f"no {stratum.value} episode found in {attempts} attempts")
        self.stratum = stratum
        self.attempts = attempts


class Action(Enum):
    MoveForward = "MoveForward"
    TurnLeft = "TurnLeft"
    TurnRight = "TurnRight"
    Stop = "Stop"


ACTIONS = tuple(Action)


class TerminationReason(Enum):
    NotTerminated = "not_terminated"
    Stopped = "stopped"
    MaxSteps = "max_steps"


class Difficulty(Enum):
    Easy = "easy"
    Medium = "medium"
    Hard = "hard"


# Geodesic start-goal distance bands in metres. Hard includes its upper edge.
STRATA = {
    Difficulty.Easy: (1.5, 3.0),
    Difficulty.Medium: (3.0, 5.0),
    Difficulty.Hard: (5.0, 10.0),
}


def in_stratum(distance: float, difficulty: Difficulty) -> bool:
    lo, hi = STRATA[difficulty]
    if difficulty is Difficulty.Hard:
        return lo <= distance <= hi
    return lo <= distance < hi


def classify_difficulty(distance: float) -> Difficulty | None:
    for diff in Difficulty:
        if in_stratum(distance, diff):
            return diff
    return None


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: int  # degrees, multiple of 30, in [0, 360)

    def __post_init__(self):
        if self.heading % TURN_STEP_DEG != 0:
            raise ValueError(f"heading {self.heading} not a multiple of {TURN_STEP_DEG}")
        object.__setattr__(self, "heading", self.heading % 360)

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


def _inflation_offsets(cell_size: float, agent_radius: float) -> list[tuple[int, int]]:
    """Cell offsets whose square region lies within agent_radius of a cell centre.

    A candidate cell is blocked when the distance from its centre to the
    nearest point of an obstacle cell's square is <= agent_radius.
    """
    reach = int(math.ceil(agent_radius / cell_size)) + 1
    offsets = []
    for di in range(-reach, reach + 1):
        for dj in range(-reach, reach + 1):
            dy = max(0.0, (abs(di) - 0.5) * cell_size)
            dx = max(0.0, (abs(dj) - 0.5) * cell_size)
            if math.hypot(dx, dy) <= agent_radius:
                offsets.append((di, dj))
    return offsets


def _inflate(cells: np.ndarray, cell_size: float, agent_radius: float) -> np.ndarray:
    rows, cols = cells.shape
    inflated = cells.copy()
    for di, dj in _inflation_offsets(cell_size, agent_radius):
        if di == 0 and dj == 0:
            continue
        a, b = max(0, di), rows + min(0, di)
        c, d = max(0, dj), cols + min(0, dj)
        if a >= b or c >= d:
            continue
        inflated[a:b, c:d] |= cells[a - di:b - di, c - dj:d - dj]
    return inflated


@dataclass
class GridMap:
    """Immutable-by-convention occupancy grid with inflated free space."""

    cells: np.ndarray           # bool, True = raw obstacle
    cell_size: float
    agent_radius: float
    name: str = "map"
    start_hint: tuple[int, int] | None = None
    goal_hint: tuple[int, int] | None = None
    inflated: np.ndarray = field(init=False)
    _field_cache: dict = field(init=False, default_factory=dict, repr=False)

    def __post_init__(self):
        if self.cells.size == 0:
            raise EmptyMap("map has no cells")
        if self.cell_size <= 0 or self.agent_radius < 0:
            raise ValueError("cell_size must be > 0 and agent_radius >= 0")
        self.inflated = _inflate(self.cells, self.cell_size, self.agent_radius)

    @property
    def rows(self) -> int:
        return self.cells.shape[0]

    @property
    def cols(self) -> int:
        return self.cells.shape[1]

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor(y / self.cell_size)), int(math.floor(x / self.cell_size)))

    def center(self, cell: tuple[int, int]) -> tuple[float, float]:
        r, c = cell
        return ((c + 0.5) * self.cell_size, (r + 0.5) * self.cell_size)

    def in_bounds(self, cell: tuple[int, int]) -> bool:
        r, c = cell
        return 0 <= r < self.rows and 0 <= c < self.cols

    def cell_free(self, cell: tuple[int, int]) -> bool:
        return self.in_bounds(cell) and not self.inflated[cell]

    def position_free(self, x: float, y: float) -> bool:
        return self.cell_free(self.cell_of(x, y))

    def free_cells(self) -> list[tuple[int, int]]:
        return [tuple(rc) for rc in np.argwhere(~self.inflated)]

    def segment_free(self, p0: tuple[float, float], p1: tuple[float, float]) -> bool:
        """Swept check: sample the segment at intervals <= cell_size / 2."""
        dist = math.dist(p0, p1)
        n = max(1, int(math.ceil(dist / (self.cell_size / 2.0))))
        for i in range(n + 1):
            t = i / n
            x = p0[0] + (p1[0] - p0[0]) * t
            y = p0[1] + (p1[1] - p0[1]) * t
            if not self.position_free(x, y):
                return False
        return True

    def distance_field(self, goal_cell: tuple[int, int]) -> np.ndarray:
        """Geodesic distance (metres) from every cell to goal_cell.

        Dijkstra on the 8-connected inflated-free lattice; axial edges cost
        cell_size, diagonal edges cost sqrt(2) * cell_size. Unreachable and
        obstacle cells hold +inf.
        """
        goal_cell = (int(goal_cell[0]), int(goal_cell[1]))
        cached = self._field_cache.get(goal_cell)
        if cached is not None:
            return cached
        if not self.cell_free(goal_cell):
            raise PositionInObstacle(f"goal cell {goal_cell} not in free space")
        dist = np.full(self.cells.shape, np.inf)
        dist[goal_cell] = 0.0
        heap = [(0.0, goal_cell)]
        axial = self.cell_size
        diag = SQRT2 * self.cell_size
        free = ~self.inflated
        while heap:
            d, (r, c) = heapq.heappop(heap)
            if d > dist[r, c]:
                continue
            for dr, dc in NEIGHBOURS_8:
                nr, nc = r + dr, c + dc
                if 0 <= nr < self.rows and 0 <= nc < self.cols and free[nr, nc]:
                    nd = d + (diag if dr and dc else axial)
                    if nd < dist[nr, nc]:
                        dist[nr, nc] = nd
                        heapq.heappush(heap, (nd, (nr, nc)))
        self._field_cache[goal_cell] = dist
        return dist


GLYPHS = {"#": True, ".": False, "S": False, "G": False}


def load_map(text: str, meta: dict) -> GridMap:
    """Parse ASCII map text with sidecar metadata.

    Glyphs: '#' obstacle, '.' free, optional 'S'/'G' free hint cells.
    """
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise EmptyMap("map text has no rows")
    width = len(lines[0])
    if width == 0:
        raise EmptyMap("map text has zero-width rows")
    start_hint = goal_hint = None
    grid = np.zeros((len(lines), width), dtype=bool)
    for r, line in enumerate(lines):
        if len(line) != width:
            raise RaggedRows(f"row {r} has length {len(line)}, expected {width}")
        for c, ch in enumerate(line):
            if ch not in GLYPHS:
                raise UnknownGlyph(f"unknown glyph {ch!r} at row {r} col {c}")
            grid[r, c] = GLYPHS[ch]
            if ch == "S":
                start_hint = (r, c)
            elif ch == "G":
                goal_hint = (r, c)
    return GridMap(
        cells=grid,
        cell_size=float(meta["cell_size_m"]),
        agent_radius=float(meta["agent_radius_m"]),
        name=str(meta.get("name", "map")),
        start_hint=start_hint,
        goal_hint=goal_hint,
    )


def load_map_file(path: str | Path) -> GridMap:
    """Load '<stem>.map' plus its '<stem>.json' sidecar."""
    path = Path(path)
    meta_path = path.with_suffix(".json")
    meta = json.loads(meta_path.read_text())
    gmap = load_map(path.read_text(), meta)
    return gmap


def geodesic_distance(gmap: GridMap, from_pos: tuple[float, float],
                      to_pos: tuple[float, float]) -> float:
    """Lattice geodesic between the cells containing two metric positions.

    Returns +inf when the cells are disconnected (the Unreachable sentinel).
    """
    a = gmap.cell_of(*from_pos)
    b = gmap.cell_of(*to_pos)
    for cell, which in ((a, "from"), (b, "to")):
        if not gmap.cell_free(cell):
            raise PositionInObstacle(f"{which} position {cell} in inflated obstacle")
    if a == b:
        return 0.0
    return float(gmap.distance_field(b)[a])


def wrapped_angle_diff(a_deg: float, b_deg: float) -> float:
    """|a - b| wrapped into [0, 180] degrees."""
    return abs((a_deg - b_deg + 180.0) % 360.0 - 180.0)


def view_angle_diff(pose: Pose, goal_views: list[float]) -> float:
    """Smallest wrapped angular distance from heading to any goal view, degrees."""
    if not goal_views:
        raise EmptyViews("goal_views must be non-empty")
    return min(wrapped_angle_diff(pose.heading, v) for v in goal_views)


@dataclass(frozen=True)
class StepOutcome:
    pose: Pose
    collided: bool
    terminated: bool
    reason: TerminationReason


def step(gmap: GridMap, pose: Pose, action: Action, step_index: int,
         max_steps: int = DEFAULT_MAX_STEPS) -> StepOutcome:
    """Apply one action. step_index is 1-based for the action being applied.

    MoveForward advances 0.25 m along the heading iff the swept segment stays
    in inflated-free space; a blocked move is a no-op flagged collided.
    """
    collided = False
    new_pose = pose
    if action is Action.TurnLeft:
        new_pose = replace(pose, heading=(pose.heading + TURN_STEP_DEG) % 360)
    elif action is Action.TurnRight:
        new_pose = replace(pose, heading=(pose.heading - TURN_STEP_DEG) % 360)
    elif action is Action.MoveForward:
        h = math.radians(pose.heading)
        target = (pose.x + MOVE_STEP_M * math.cos(h), pose.y + MOVE_STEP_M * math.sin(h))
        if gmap.segment_free(pose.position, target):
            new_pose = replace(pose, x=target[0], y=target[1])
        else:
            collided = True
    if action is Action.Stop:
        reason = TerminationReason.Stopped
    elif step_index >= max_steps:
        reason = TerminationReason.MaxSteps
    else:
        reason = TerminationReason.NotTerminated
    return StepOutcome(new_pose, collided, reason is not TerminationReason.NotTerminated, reason)


@dataclass(frozen=True)
class Episode:
    episode_id: str
    map_ref: str
    start: Pose
    goal: Pose
    goal_views: tuple[float, ...]
    shortest_path_length: float
    max_steps: int
    difficulty: Difficulty

    def to_json(self) -> dict:
        return {
            "id": self.episode_id,
            "map_ref": self.map_ref,
            "start": [self.start.x, self.start.y, self.start.heading],
            "goal": [self.goal.x, self.goal.y, self.goal.heading],
            "goal_views": list(self.goal_views),
            "shortest_path_length": self.shortest_path_length,
            "max_steps": self.max_steps,
            "difficulty": self.difficulty.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Episode":
        return cls(
            episode_id=str(obj["id"]),
            map_ref=str(obj["map_ref"]),
            start=Pose(float(obj["start"][0]), float(obj["start"][1]), int(obj["start"][2])),
            goal=Pose(float(obj["goal"][0]), float(obj["goal"][1]), int(obj["goal"][2])),
            goal_views=tuple(float(v) for v in obj["goal_views"]),
            shortest_path_length=float(obj["shortest_path_length"]),
            max_steps=int(obj["max_steps"]),
            difficulty=Difficulty(obj["difficulty"]),
        )


def write_episode_file(path: str | Path, episodes: list[Episode]) -> None:
    with open(path, "w") as f:
        for ep in episodes:
            f.write(json.dumps(ep.to_json()) + "\n")


def read_episode_file(path: str | Path) -> list[Episode]:
    episodes = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if obj.get("type") == "header":    # provenance line, not an episode
                continue
            episodes.append(Episode.from_json(obj))
    return episodes


def sample_episodes(gmap: GridMap, n_per_stratum: int, seed: int,
                    max_steps: int = DEFAULT_MAX_STEPS,
                    strata: tuple[Difficulty, ...] = tuple(Difficulty),
                    attempt_budget: int | None = None) -> list[Episode]:
    """Rejection-sample start/goal pairs per difficulty stratum.

    For each accepted goal one distance field is computed and several starts
    are tried against it before redrawing the goal; deterministic for a fixed
    seed. Raises StratumUnsatisfiable when a stratum exhausts its budget.
    """
    rng = np.random.default_rng(seed)
    free = gmap.free_cells()
    if not free:
        raise EmptyMap("map has no free cells after inflation")
    budget = attempt_budget if attempt_budget is not None else max(2000, 400 * n_per_stratum)
    episodes = []
    for diff in strata:
        found = 0
        attempts = 0
        while found < n_per_stratum:
            if attempts >= budget:
                raise StratumUnsatisfiable(diff, attempts)
            attempts += 1
            goal_cell = free[int(rng.integers(len(free)))]
            goal_heading = int(rng.integers(12)) * TURN_STEP_DEG
            field_ = gmap.distance_field(goal_cell)
            for _ in range(32):
                start_cell = free[int(rng.integers(len(free)))]
                start_heading = int(rng.integers(12)) * TURN_STEP_DEG
                d = float(field_[start_cell])
                if start_cell != goal_cell and in_stratum(d, diff):
                    sx, sy = gmap.center(start_cell)
                    gx, gy = gmap.center(goal_cell)
                    episodes.append(Episode(
                        episode_id=f"{gmap.name}-{diff.value}-{found:03d}",
                        map_ref=gmap.name,
                        start=Pose(sx, sy, start_heading),
                        goal=Pose(gx, gy, goal_heading),
                        goal_views=(float(goal_heading),),
                        shortest_path_length=d,
                        max_steps=max_steps,
                        difficulty=diff,
                    ))
                    found += 1
                    if found >= n_per_stratum:
                        break
    return episodes


# Egocentric occupancy patch ------------------------------------------------

PATCH_SIZE = 11

_HALF = PATCH_SIZE // 2
# (forward, left) offsets in patch-cell units; row 0 is farthest ahead,
# centre column is the heading axis.
_PATCH_F = np.array([[_HALF - i for _ in range(PATCH_SIZE)] for i in range(PATCH_SIZE)], dtype=float)
_PATCH_L = np.array([[_HALF - j for j in range(PATCH_SIZE)] for _ in range(PATCH_SIZE)], dtype=float)


def local_patch(gmap: GridMap, pose: Pose, resolution: float | None = None) -> np.ndarray:
    """11x11 egocentric occupancy patch, rotated so the heading points up.

    Entry 1 marks inflated-obstacle or out-of-bounds. resolution defaults to
    2 * cell_size.
    """
    res = 2.0 * gmap.cell_size if resolution is None else resolution
    if res <= 0:
        raise ValueError("patch resolution must be > 0")
    h = math.radians(pose.heading)
    fx, fy = math.cos(h), math.sin(h)
    lx, ly = -math.sin(h), math.cos(h)
    xs = pose.x + res * (_PATCH_F * fx + _PATCH_L * lx)
    ys = pose.y + res * (_PATCH_F * fy + _PATCH_L * ly)
    rr = np.floor(ys / gmap.cell_size).astype(int)
    cc = np.floor(xs / gmap.cell_size).astype(int)
    patch = np.ones((PATCH_SIZE, PATCH_SIZE), dtype=np.int8)
    inb = (rr >= 0) & (rr < gmap.rows) & (cc >= 0) & (cc < gmap.cols)
    patch[inb] = gmap.inflated[rr[inb], cc[inb]].astype(np.int8)
    return patch
