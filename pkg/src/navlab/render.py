"""SVG rendering of one logged episode: obstacles, inflation ring, the
trajectory colored by plan token, revisited voxels hatched, start/goal
markers. Pure string assembly, no drawing dependencies."""
from __future__ import annotations

import math
from pathlib import Path

from .env import GridMap
from .trajlog import EpisodeLog

PX_PER_M = 100.0

TOKEN_COLORS = {
    "GoToWaypoint": "#1f77b4",
    "ExitRoom": "#9467bd",
    "FollowCorridor": "#8c564b",
    "ApproachGoal": "#2ca02c",
    "Explore": "#ff7f0e",
    "StopNearGoal": "#d62728",
}
FALLBACK_COLOR = "#333333"


def _px(v: float) -> str:
    return f"{v * PX_PER_M:.1f}"


def render_trajectory(gmap: GridMap, episode: EpisodeLog | None,
                      revisit_radius: float = 0.25,
                      config_hash: str = "") -> str:
    """Render one episode (or just the map when episode is None)."""
    s = gmap.cell_size
    width = gmap.cols * s
    height = gmap.rows * s
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_px(width)}" '
        f'height="{_px(height)}" viewBox="0 0 {_px(width)} {_px(height)}">',
        f"<!-- config_hash={config_hash} -->",
        '<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" '
        'patternTransform="rotate(45)"><line x1="0" y1="0" x2="0" y2="6" '
        'stroke="#d62728" stroke-width="1.5"/></pattern></defs>',
        f'<rect width="{_px(width)}" height="{_px(height)}" fill="#fdfdfd"/>',
    ]
    for r in range(gmap.rows):
        for c in range(gmap.cols):
            if gmap.cells[r, c]:
                fill = "#222222"
            elif gmap.inflated[r, c]:
                fill = "#c8c8c8"
            else:
                continue
            parts.append(
                f'<rect x="{_px(c * s)}" y="{_px(r * s)}" width="{_px(s)}" '
                f'height="{_px(s)}" fill="{fill}"/>')
    if episode is not None:
        seen = set()
        for rec in episode.steps:
            if rec.get("revisit") and rec.get("voxel_key"):
                seen.add(tuple(rec["voxel_key"]))
        for kx, ky in sorted(seen):
            parts.append(
                f'<rect x="{_px(kx * revisit_radius)}" y="{_px(ky * revisit_radius)}" '
                f'width="{_px(revisit_radius)}" height="{_px(revisit_radius)}" '
                f'fill="url(#hatch)" fill-opacity="0.7"/>')
        points = [(episode.start["x"], episode.start["y"], None)]
        points += [(rec["x"], rec["y"], rec.get("plan_token")) for rec in episode.steps]
        for (x0, y0, _), (x1, y1, token) in zip(points, points[1:]):
            color = TOKEN_COLORS.get(token, FALLBACK_COLOR)
            parts.append(
                f'<line x1="{_px(x0)}" y1="{_px(y0)}" x2="{_px(x1)}" y2="{_px(y1)}" '
                f'stroke="{color}" stroke-width="2" stroke-linecap="round"/>')
        sx, sy = episode.start["x"], episode.start["y"]
        parts.append(f'<circle cx="{_px(sx)}" cy="{_px(sy)}" r="5" fill="#2ca02c" '
                     'stroke="#fff" stroke-width="1.5"/>')
        goal = episode.start.get("goal")
        if goal is not None:
            gx, gy, gh = goal
            parts.append(f'<circle cx="{_px(gx)}" cy="{_px(gy)}" r="6" fill="none" '
                         'stroke="#d62728" stroke-width="2.5"/>')
            hx = gx + 0.18 * math.cos(math.radians(gh))
            hy = gy + 0.18 * math.sin(math.radians(gh))
            parts.append(f'<line x1="{_px(gx)}" y1="{_px(gy)}" x2="{_px(hx)}" '
                         f'y2="{_px(hy)}" stroke="#d62728" stroke-width="2"/>')
        if episode.terminal is not None:
            outcome = "success" if episode.terminal.get("success") else "failure"
            parts.append(
                f'<title>{episode.episode_id}: {outcome}, '
                f'{episode.terminal.get("steps", "?")} steps</title>')
    parts.append("</svg>")
    return "\n".join(parts)


def render_to_file(path: str | Path, gmap: GridMap, episode: EpisodeLog | None,
                   revisit_radius: float = 0.25, config_hash: str = "") -> None:
    Path(path).write_text(render_trajectory(gmap, episode, revisit_radius, config_hash))
