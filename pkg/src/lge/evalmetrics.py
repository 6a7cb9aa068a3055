"""Coverage accounting, run logs, and aggregate statistics.

Exploration quality is the fraction of *reachable* half-unit grid cells an
algorithm has visited. Reachability comes from a flood fill over the grid:
two edge-adjacent cells connect when the segment between their centres
crosses no wall. Aggregates use the interquartile mean with percentile
bootstrap confidence intervals.

All on-disk artefacts share one shape: ``# key: value`` header lines, a
``# columns: ...`` declaration, then space-separated numeric rows.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .envsim import Maze, segment_blocked

__all__ = [
    "CoverageGrid",
    "CoverageTracker",
    "RunLog",
    "write_run_log",
    "read_run_log",
    "coverage_at_steps",
    "iqm",
    "bootstrap_iqm_ci",
    "performance_profile",
    "write_table",
    "read_table",
]

CELL_WIDTH = 0.5


class CoverageGrid:
    """Fixed grid of half-unit cells over the arena with reachability."""

    def __init__(self, maze: Maze, cell_width: float = CELL_WIDTH):
        self.maze = maze
        self.cell_width = cell_width
        self.size = int(round(2.0 * maze.half_extent / cell_width))
        if self.size < 1 or abs(self.size * cell_width - 2.0 * maze.half_extent) > 1e-9:
            raise ValueError("cell width must evenly divide the arena")
        self.start_cell = self.cell_index(np.asarray(maze.start))
        self._reachable = self._flood_fill()

    def cell_index(self, obs: np.ndarray) -> tuple[int, int]:
        h = self.maze.half_extent
        i = int((obs[0] + h) // self.cell_width)
        j = int((obs[1] + h) // self.cell_width)
        last = self.size - 1
        return (min(max(i, 0), last), min(max(j, 0), last))

    def cell_center(self, cell: tuple[int, int]) -> np.ndarray:
        h = self.maze.half_extent
        return np.array([
            -h + (cell[0] + 0.5) * self.cell_width,
            -h + (cell[1] + 0.5) * self.cell_width,
        ])

    def _flood_fill(self) -> np.ndarray:
        reachable = np.zeros((self.size, self.size), dtype=bool)
        queue = deque([self.start_cell])
        reachable[self.start_cell] = True
        walls = self.maze.walls
        while queue:
            cell = queue.popleft()
            center = self.cell_center(cell)
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ni, nj = cell[0] + di, cell[1] + dj
                if not (0 <= ni < self.size and 0 <= nj < self.size):
                    continue
                if reachable[ni, nj]:
                    continue
                if segment_blocked(center, self.cell_center((ni, nj)), walls):
                    continue
                reachable[ni, nj] = True
                queue.append((ni, nj))
        return reachable

    @property
    def reachable(self) -> np.ndarray:
        return self._reachable

    @property
    def reachable_count(self) -> int:
        return int(self._reachable.sum())


class CoverageTracker:
    """Incremental visited-cell accounting against one grid."""

    def __init__(self, grid: CoverageGrid):
        self.grid = grid
        self._visited = np.zeros((grid.size, grid.size), dtype=bool)
        self._covered = 0

    def visit(self, obs: np.ndarray) -> bool:
        """Record one observation; True when it opens a new reachable cell."""
        cell = self.grid.cell_index(obs)
        if self._visited[cell]:
            return False
        self._visited[cell] = True
        if self.grid.reachable[cell]:
            self._covered += 1
            return True
        return False

    @property
    def cells_covered(self) -> int:
        return self._covered

    @property
    def coverage(self) -> float:
        return self._covered / self.grid.reachable_count

    @property
    def visited_mask(self) -> np.ndarray:
        return self._visited.copy()


# -- run logs ----------------------------------------------------------------


@dataclass
class RunLog:
    meta: dict[str, str]
    steps: np.ndarray
    cells: np.ndarray
    coverage: np.ndarray

    @property
    def final_coverage(self) -> float:
        return float(self.coverage[-1]) if len(self.coverage) else 0.0


def write_run_log(path, meta: dict[str, str], rows) -> None:
    """Write change-point rows (step, cells, coverage) with a header."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# format: run-log v1\n")
        for key, value in meta.items():
            fh.write(f"# {key}: {value}\n")
        fh.write("# columns: step cells coverage\n")
        for step, cells, coverage in rows:
            fh.write(f"{int(step)} {int(cells)} {coverage!r}\n")


def read_run_log(path) -> RunLog:
    meta: dict[str, str] = {}
    steps: list[int] = []
    cells: list[int] = []
    coverage: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    key, value = body.split(":", 1)
                    meta[key.strip()] = value.strip()
                continue
            fields = line.split()
            if len(fields) != 3:
                raise ValueError(f"bad run-log row: {raw!r}")
            steps.append(int(fields[0]))
            cells.append(int(fields[1]))
            coverage.append(float(fields[2]))
    if meta.get("format") != "run-log v1":
        raise ValueError("not a run-log file")
    arr_steps = np.asarray(steps, dtype=np.int64)
    if len(arr_steps) and np.any(np.diff(arr_steps) < 0):
        raise ValueError("run-log steps must be non-decreasing")
    return RunLog(meta=meta, steps=arr_steps,
                  cells=np.asarray(cells, dtype=np.int64),
                  coverage=np.asarray(coverage, dtype=np.float64))


def coverage_at_steps(log: RunLog, query_steps) -> np.ndarray:
    """Evaluate the (monotone, piecewise-constant) coverage curve."""
    query = np.atleast_1d(np.asarray(query_steps, dtype=np.int64))
    idx = np.searchsorted(log.steps, query, side="right") - 1
    out = np.where(idx >= 0, log.coverage[np.maximum(idx, 0)], 0.0)
    return out


# -- statistics ----------------------------------------------------------------


def iqm(values) -> float:
    """Interquartile mean: drop floor(n/4) smallest and largest, average rest."""
    values = np.sort(np.asarray(values, dtype=np.float64))
    n = len(values)
    if n == 0:
        raise ValueError("iqm of empty sequence")
    drop = n // 4
    return float(values[drop:n - drop].mean())


def bootstrap_iqm_ci(values, rng: np.random.Generator,
                     n_resamples: int = 2000, level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap confidence interval for the IQM."""
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if n == 0:
        raise ValueError("bootstrap of empty sequence")
    stats = np.empty(n_resamples)
    for b in range(n_resamples):
        stats[b] = iqm(values[rng.integers(0, n, size=n)])
    alpha = 100.0 * (1.0 - level) / 2.0
    return float(np.percentile(stats, alpha)), float(np.percentile(stats, 100.0 - alpha))


def performance_profile(final_values, taus) -> np.ndarray:
    """Fraction of runs whose final value reaches each threshold."""
    finals = np.asarray(final_values, dtype=np.float64)
    if len(finals) == 0:
        raise ValueError("profile of empty sequence")
    return np.array([float(np.mean(finals >= tau)) for tau in np.asarray(taus)])


# -- generic header/row tables -------------------------------------------------


def write_table(path, fmt: str, meta: dict[str, str], columns: list[str], rows) -> None:
    """Write the shared header + space-separated-rows file shape."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# format: {fmt}\n")
        for key, value in meta.items():
            fh.write(f"# {key}: {value}\n")
        fh.write(f"# columns: {' '.join(columns)}\n")
        for row in rows:
            fh.write(" ".join(_format_field(v) for v in row) + "\n")


def _format_field(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_table(path, expect_format: str | None = None):
    """Read the shared file shape; rows come back as lists of strings."""
    meta: dict[str, str] = {}
    columns: list[str] = []
    rows: list[list[str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    key, value = body.split(":", 1)
                    if key.strip() == "columns":
                        columns = value.split()
                    else:
                        meta[key.strip()] = value.strip()
                continue
            rows.append(line.split())
    if expect_format is not None and meta.get("format") != expect_format:
        raise ValueError(f"expected {expect_format!r}, found {meta.get('format')!r}")
    return meta, columns, rows


def resolved_config_json(config: dict) -> str:
    """Canonical JSON for config hashing and log headers."""
    return json.dumps(config, sort_keys=True, separators=(",", ":"))
