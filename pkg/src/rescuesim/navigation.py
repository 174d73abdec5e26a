"""A* over the height raster, with exp(height) traversal weights."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .vec import Vec3
from .world import GridMap

SQRT2 = math.sqrt(2.0)
_MOVES = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1))


@dataclass
class PathPlan:
    cells: list[tuple[int, int]]
    cost: float
    waypoints: list[Vec3] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.waypoints


def step_cost(cell_size: float, diagonal: bool, height: float) -> float:
    return cell_size * (SQRT2 if diagonal else 1.0) * math.exp(height)


def astar_cells(height_of: np.ndarray, cell_size: float, start: tuple[int, int],
                goal_point: tuple[float, float], goal_radius: float = 0.0,
                goal_cell: Optional[tuple[int, int]] = None,
                blocked: Optional[np.ndarray] = None,
                origin: tuple[float, float] = (0.0, 0.0)) -> Optional[tuple[list[tuple[int, int]], float]]:
    """Cheapest 8-connected cell path from ``start``.

    Entering cell c costs step length times exp(height_of[c]). The goal is
    ``goal_cell`` when given, otherwise any unblocked cell whose center lies
    within ``goal_radius`` of ``goal_point``. With a ``blocked`` mask, blocked
    cells are impassable and diagonal moves may not cut blocked corners.
    """
    w, h = height_of.shape
    ox, oz = origin
    gx, gz = goal_point
    weights = np.exp(height_of).tolist()
    blk = blocked.tolist() if blocked is not None else None

    def center(i: int, j: int) -> tuple[float, float]:
        return ox + (i + 0.5) * cell_size, oz + (j + 0.5) * cell_size

    def heuristic(i: int, j: int) -> float:
        if goal_cell is not None:
            di, dj = abs(i - goal_cell[0]), abs(j - goal_cell[1])
            return cell_size * (max(di, dj) + (SQRT2 - 1.0) * min(di, dj))
        cx, cz = center(i, j)
        return max(0.0, math.hypot(cx - gx, cz - gz) - goal_radius)

    def is_goal(i: int, j: int) -> bool:
        if goal_cell is not None:
            return (i, j) == goal_cell
        if blk is not None and blk[i][j]:
            return False
        cx, cz = center(i, j)
        return math.hypot(cx - gx, cz - gz) <= goal_radius + 1e-9

    g = {start: 0.0}
    parent: dict[tuple[int, int], Optional[tuple[int, int]]] = {start: None}
    closed: set[tuple[int, int]] = set()
    counter = 0
    heap = [(heuristic(*start), counter, start)]
    straight, diag = cell_size, cell_size * SQRT2
    while heap:
        _, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if is_goal(*cur):
            path = []
            node: Optional[tuple[int, int]] = cur
            while node is not None:
                path.append(node)
                node = parent[node]
            path.reverse()
            return path, g[cur]
        closed.add(cur)
        ci, cj = cur
        gc = g[cur]
        for di, dj in _MOVES:
            ni, nj = ci + di, cj + dj
            if not (0 <= ni < w and 0 <= nj < h):
                continue
            diagonal = di != 0 and dj != 0
            if blk is not None:
                if blk[ni][nj] and not (goal_cell is not None and (ni, nj) == goal_cell):
                    continue
                if diagonal and (blk[ci + di][cj] or blk[ci][cj + dj]):
                    continue
            ng = gc + (diag if diagonal else straight) * weights[ni][nj]
            nxt = (ni, nj)
            if ng < g.get(nxt, math.inf):
                g[nxt] = ng
                parent[nxt] = cur
                counter += 1
                heapq.heappush(heap, (ng + heuristic(ni, nj), counter, nxt))
    return None


def simplify(cells: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Keep the cells where the path turns, plus the final cell; drops the start."""
    if len(cells) < 2:
        return []
    out = []
    for k in range(1, len(cells) - 1):
        d0 = (cells[k][0] - cells[k - 1][0], cells[k][1] - cells[k - 1][1])
        d1 = (cells[k + 1][0] - cells[k][0], cells[k + 1][1] - cells[k][1])
        if d0 != d1:
            out.append(cells[k])
    out.append(cells[-1])
    return out


def _segment_clear(grid: GridMap, a: tuple[float, float], b: tuple[float, float], limit: float,
                   blocked: Optional[np.ndarray]) -> bool:
    """True when the straight floor segment a-b crosses no blocked cell and nothing taller than ``limit``."""
    length = math.hypot(b[0] - a[0], b[1] - a[1])
    n = max(1, int(math.ceil(length / (grid.cell_size * 0.25))))
    for k in range(n + 1):
        t = k / n
        i, j = grid.cell_of(a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t)
        if not grid.contains_cell(i, j):
            return False
        if blocked is not None and blocked[i, j]:
            return False
        if grid.height_of[i, j] > limit + 1e-12:
            return False
    return True


def smooth(grid: GridMap, start: Vec3, cells: list[tuple[int, int]],
           blocked: Optional[np.ndarray] = None) -> list[tuple[float, float]]:
    """String-pull a cell path into straight floor segments.

    A shortcut is taken only if it stays on cells no higher than the tallest
    cell of the stretch it replaces, so it never climbs what the plan avoided.
    """
    if len(cells) < 2:
        return []
    pts = [(start.x, start.z)] + [tuple(grid.center(i, j))[::2] for i, j in cells[1:]]
    heights = [float(grid.height_of[i, j]) for i, j in cells]
    out = []
    k = 0
    while k < len(pts) - 1:
        nxt = k + 1
        for m in range(len(pts) - 1, k + 1, -1):
            if _segment_clear(grid, pts[k], pts[m], max(heights[k:m + 1]), blocked):
                nxt = m
                break
        out.append(pts[nxt])
        k = nxt
    return out


def plan_path(grid: GridMap, start: Vec3, goal: Vec3, *, goal_radius: float = 0.0,
              blocked: Optional[np.ndarray] = None, one_step: bool = False) -> Optional[PathPlan]:
    """Plan from world point ``start`` to ``goal``; None when no finite-cost path exists.

    ``goal_radius`` > 0 accepts any cell within that distance of the goal point.
    ``one_step`` keeps only the first waypoint.
    """
    s = grid.cell_of(start.x, start.z)
    if goal_radius > 0.0:
        if start.horizontal_distance(goal) <= goal_radius:
            return PathPlan([s], 0.0, [])
        found = astar_cells(grid.height_of, grid.cell_size, s, (goal.x, goal.z), goal_radius,
                            blocked=blocked, origin=(grid.origin.x, grid.origin.z))
    else:
        gcell = grid.cell_of(goal.x, goal.z)
        found = astar_cells(grid.height_of, grid.cell_size, s, (goal.x, goal.z), goal_cell=gcell,
                            blocked=blocked, origin=(grid.origin.x, grid.origin.z))
    if found is None:
        return None
    cells, cost = found
    waypoints = [Vec3(x, 0.0, z) for x, z in smooth(grid, start, cells, blocked)]
    if one_step:
        waypoints = waypoints[:1]
    return PathPlan(cells, cost, waypoints)
