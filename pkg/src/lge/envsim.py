"""Continuous point-mass maze.

The arena is a square centred on the origin. Actions are per-axis clipped
displacements; a move whose path crosses a wall segment is reverted in full,
while leaving the arena is prevented by clamping the endpoint to the bounds
(no collision flag). Geometry runs in float64 throughout.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Maze", "MazeEnv", "StepResult", "parse_maze", "load_maze",
           "dumps_maze", "default_maze", "segment_blocked"]

# walls behave as if thickened by this much, so grazing contact counts
WALL_EPS = 1e-9


@dataclass(frozen=True)
class Maze:
    """Square arena [-half_extent, half_extent]^2 with wall segments."""

    half_extent: float
    start: tuple[float, float]
    walls: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))

    def __post_init__(self):
        walls = np.asarray(self.walls, dtype=np.float64).reshape(-1, 4)
        object.__setattr__(self, "walls", walls)
        if self.half_extent <= 0:
            raise ValueError("half_extent must be positive")
        h = self.half_extent
        if abs(self.start[0]) > h or abs(self.start[1]) > h:
            raise ValueError("start lies outside the arena")


def parse_maze(text: str) -> Maze:
    """Parse the maze text format.

    One directive per line: ``bounds H`` (arena is [-H, H]^2), ``start X Y``,
    and ``wall X1 Y1 X2 Y2`` per segment. ``#`` starts a comment.
    """
    half_extent = None
    start = None
    walls: list[list[float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        word, args = fields[0], fields[1:]
        try:
            values = [float(v) for v in args]
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad number in {raw!r}") from exc
        if word == "bounds":
            if len(values) != 1:
                raise ValueError(f"line {lineno}: bounds takes one value")
            half_extent = values[0]
        elif word == "start":
            if len(values) != 2:
                raise ValueError(f"line {lineno}: start takes two values")
            start = (values[0], values[1])
        elif word == "wall":
            if len(values) != 4:
                raise ValueError(f"line {lineno}: wall takes four values")
            walls.append(values)
        else:
            raise ValueError(f"line {lineno}: unknown directive {word!r}")
    if half_extent is None:
        raise ValueError("maze text missing 'bounds' line")
    if start is None:
        raise ValueError("maze text missing 'start' line")
    return Maze(half_extent=half_extent, start=start,
                walls=np.asarray(walls, dtype=np.float64).reshape(-1, 4))


def load_maze(path) -> Maze:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_maze(fh.read())


def dumps_maze(maze: Maze) -> str:
    lines = [f"bounds {maze.half_extent:g}", f"start {maze.start[0]:g} {maze.start[1]:g}"]
    for x1, y1, x2, y2 in maze.walls:
        lines.append(f"wall {x1:g} {y1:g} {x2:g} {y2:g}")
    return "\n".join(lines) + "\n"


def default_maze() -> Maze:
    """The bundled benchmark maze."""
    data = importlib.resources.files("lge.data").joinpath("default_maze.txt")
    return parse_maze(data.read_text(encoding="utf-8"))


@dataclass(frozen=True)
class StepResult:
    obs: np.ndarray
    collided: bool
    truncated: bool
    t: int


def segment_blocked(p: np.ndarray, q: np.ndarray, walls: np.ndarray) -> bool:
    """True when segment p->q touches any wall segment (within WALL_EPS)."""
    if walls.shape[0] == 0:
        return False
    if p[0] == q[0] and p[1] == q[1]:
        return False
    a = walls[:, 0:2]
    b = walls[:, 2:4]
    ab = b - a
    pq = q - p
    # cross products locating each endpoint against the other segment's line
    d1 = ab[:, 0] * (p[1] - a[:, 1]) - ab[:, 1] * (p[0] - a[:, 0])
    d2 = ab[:, 0] * (q[1] - a[:, 1]) - ab[:, 1] * (q[0] - a[:, 0])
    d3 = pq[0] * (a[:, 1] - p[1]) - pq[1] * (a[:, 0] - p[0])
    d4 = pq[0] * (b[:, 1] - p[1]) - pq[1] * (b[:, 0] - p[0])
    eps = WALL_EPS
    proper = (
        ((d1 > eps) & (d2 < -eps) | (d1 < -eps) & (d2 > eps))
        & ((d3 > eps) & (d4 < -eps) | (d3 < -eps) & (d4 > eps))
    )
    if proper.any():
        return True
    # touching or collinear cases: any endpoint within eps of the other segment
    touch = (
        (np.abs(d1) <= eps) & _within(p, a, b)
        | (np.abs(d2) <= eps) & _within(q, a, b)
        | (np.abs(d3) <= eps) & _within_pt(a, p, q)
        | (np.abs(d4) <= eps) & _within_pt(b, p, q)
    )
    return bool(touch.any())


def _within(point: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Point within the axis-aligned box of each segment a->b (eps-padded)."""
    lo = np.minimum(a, b) - WALL_EPS
    hi = np.maximum(a, b) + WALL_EPS
    return (point[0] >= lo[:, 0]) & (point[0] <= hi[:, 0]) & \
           (point[1] >= lo[:, 1]) & (point[1] <= hi[:, 1])


def _within_pt(points: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    lo = np.minimum(p, q) - WALL_EPS
    hi = np.maximum(p, q) + WALL_EPS
    return (points[:, 0] >= lo[0]) & (points[:, 0] <= hi[0]) & \
           (points[:, 1] >= lo[1]) & (points[:, 1] <= hi[1])


class MazeEnv:
    """Point-mass navigation with full-move revert on wall contact."""

    def __init__(self, maze: Maze, horizon: int = 100):
        if horizon < 1:
            raise ValueError("horizon must be at least 1")
        self.maze = maze
        self.horizon = horizon
        self._pos = np.asarray(maze.start, dtype=np.float64).copy()
        self._t = 0

    @property
    def observation_dim(self) -> int:
        return 2

    @property
    def action_dim(self) -> int:
        return 2

    def reset(self) -> np.ndarray:
        self._pos = np.asarray(self.maze.start, dtype=np.float64).copy()
        self._t = 0
        return self._pos.copy()

    def step(self, action: np.ndarray) -> StepResult:
        if self._t >= self.horizon:
            raise RuntimeError("episode already over; call reset()")
        action = np.clip(np.asarray(action, dtype=np.float64).reshape(2), -1.0, 1.0)
        h = self.maze.half_extent
        candidate = np.clip(self._pos + action, -h, h)
        collided = segment_blocked(self._pos, candidate, self.maze.walls)
        if not collided:
            self._pos = candidate
        self._t += 1
        return StepResult(obs=self._pos.copy(), collided=collided,
                          truncated=self._t >= self.horizon, t=self._t)
