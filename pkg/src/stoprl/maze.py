"""2D point-mass maze with dense distance reward and a 50-step cap.

Layouts are plain-text grids ('#' wall, '.' free, 'S' start region,
'G' goal), parsed with row 0 at the bottom so x grows right and y grows
up. Three built-in layouts (small/medium/large) share the same motif:
start in the bottom-left, goal in the top-right, and, on the two larger
ones, a wide interior pocket whose tip lies close to the goal in straight-
line distance but is walled off from it.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

MAX_EPISODE_STEPS = 50
ACCEL_GAIN = 0.25
SPEED_FACTOR = 0.9
MAX_SPEED = 1.0
BASE_RADIUS = 0.1
POINT_SIZE_SCALE = 1.25
COLLISION_RADIUS = BASE_RADIUS * POINT_SIZE_SCALE
GOAL_RADIUS = 0.5

SMALL_TEXT = """
#########
#......G#
#.##.##.#
#.......#
#.##.##.#
#SS.....#
#########
"""

MEDIUM_TEXT = """
###########
########.G#
########.##
########.##
########..#
####..###.#
####..###.#
##.#..###.#
##.#..###.#
#SS.......#
###########
"""

LARGE_TEXT = """
#############
##########.G#
##########.##
##########..#
###########.#
#####..###..#
#####..###.##
#####..###..#
###.#..####.#
###.#..####.#
###.#..####.#
#SS.........#
#############
"""

LAYOUT_TEXTS = {"small": SMALL_TEXT, "medium": MEDIUM_TEXT, "large": LARGE_TEXT}


class LayoutError(ValueError):
    """Malformed or unsolvable maze description."""


@dataclass
class MazeLayout:
    grid: np.ndarray                         # bool walls, row 0 at the bottom
    start_region: tuple[float, float, float, float]  # x0, y0, x1, y1
    goal_center: np.ndarray
    goal_radius: float
    size_class: str
    cell_size: float = 1.0

    @property
    def n_rows(self) -> int:
        return self.grid.shape[0]

    @property
    def n_cols(self) -> int:
        return self.grid.shape[1]

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.n_cols, self.n_rows) * self.cell_size)

    @classmethod
    def from_text(cls, text: str, size_class: str = "custom") -> "MazeLayout":
        lines = [line for line in text.strip("\n").split("\n")]
        if not lines or any(len(line) != len(lines[0]) for line in lines):
            raise LayoutError("grid rows must be nonempty and equal length")
        rows = lines[::-1]  # row 0 = bottom
        n_rows, n_cols = len(rows), len(rows[0])
        grid = np.zeros((n_rows, n_cols), dtype=bool)
        start_cells, goal_cell = [], None
        for r in range(n_rows):
            for c in range(n_cols):
                ch = rows[r][c]
                if ch == "#":
                    grid[r, c] = True
                elif ch == "S":
                    start_cells.append((r, c))
                elif ch == "G":
                    if goal_cell is not None:
                        raise LayoutError("multiple goal cells")
                    goal_cell = (r, c)
                elif ch != ".":
                    raise LayoutError(f"unknown cell character {ch!r}")
        if not start_cells:
            raise LayoutError("no start cells")
        if goal_cell is None:
            raise LayoutError("no goal cell")

        rs = [r for r, _ in start_cells]
        cs = [c for _, c in start_cells]
        margin = COLLISION_RADIUS
        start_region = (
            min(cs) + margin,
            min(rs) + margin,
            max(cs) + 1 - margin,
            max(rs) + 1 - margin,
        )
        goal_center = np.array([goal_cell[1] + 0.5, goal_cell[0] + 0.5])
        layout = cls(grid, start_region, goal_center, GOAL_RADIUS, size_class)
        if layout.shortest_path_cells() is None:
            raise LayoutError("goal not reachable from start region")
        return layout

    @classmethod
    def from_file(cls, path: str, size_class: str = "custom") -> "MazeLayout":
        with open(path) as fh:
            return cls.from_text(fh.read(), size_class)

    @classmethod
    def named(cls, size_class: str) -> "MazeLayout":
        if size_class not in LAYOUT_TEXTS:
            raise LayoutError(f"unknown layout {size_class!r}")
        return cls.from_text(LAYOUT_TEXTS[size_class], size_class)

    # ------------------------------------------------------------ geometry

    def start_cell(self) -> tuple[int, int]:
        x0, y0, _, _ = self.start_region
        return int(y0), int(x0)

    def goal_cell(self) -> tuple[int, int]:
        return int(self.goal_center[1]), int(self.goal_center[0])

    def flood_fill(self, src: tuple[int, int]) -> dict[tuple[int, int], int]:
        dist = {src: 0}
        queue = deque([src])
        while queue:
            r, c = queue.popleft()
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nr, nc = r + dr, c + dc
                if (
                    0 <= nr < self.n_rows
                    and 0 <= nc < self.n_cols
                    and not self.grid[nr, nc]
                    and (nr, nc) not in dist
                ):
                    dist[(nr, nc)] = dist[(r, c)] + 1
                    queue.append((nr, nc))
        return dist

    def shortest_path_cells(self) -> int | None:
        return self.flood_fill(self.start_cell()).get(self.goal_cell())

    def collides_xy(self, x: float, y: float, radius: float = COLLISION_RADIUS) -> bool:
        """True when a disc at (x, y) overlaps any wall cell (or the outside)."""
        c_lo = int(x - radius) if x >= radius else int(x - radius) - 1
        c_hi = int(x + radius)
        r_lo = int(y - radius) if y >= radius else int(y - radius) - 1
        r_hi = int(y + radius)
        walls = self._wall_rows
        for r in range(r_lo, r_hi + 1):
            row = walls[r] if 0 <= r < self.n_rows else None
            for c in range(c_lo, c_hi + 1):
                if row is not None and 0 <= c < self.n_cols and not row[c]:
                    continue
                # clamped-point distance from the disc center to the cell box
                dx = x - min(max(x, c), c + 1)
                dy = y - min(max(y, r), r + 1)
                if dx * dx + dy * dy < radius * radius:
                    return True
        return False

    def collides(self, pos: np.ndarray, radius: float = COLLISION_RADIUS) -> bool:
        return self.collides_xy(float(pos[0]), float(pos[1]), radius)

    @property
    def _wall_rows(self) -> list[list[bool]]:
        # plain nested lists: cheaper than ndarray indexing in the hot loop
        if not hasattr(self, "_wall_rows_cache"):
            self._wall_rows_cache = self.grid.tolist()
        return self._wall_rows_cache

    def cell_of(self, pos: np.ndarray) -> tuple[int, int]:
        return int(np.floor(pos[1])), int(np.floor(pos[0]))


class MazeEnv:
    """Point mass with damped double-integrator dynamics and wall sliding."""

    def __init__(self, layout: MazeLayout):
        self.layout = layout
        self._x = self._y = self._vx = self._vy = 0.0
        self.step_count = 0
        self.episode_over = True
        self.clamp_warnings = 0
        self._goal_x = float(layout.goal_center[0])
        self._goal_y = float(layout.goal_center[1])
        self._inv_diag = 1.0 / layout.diagonal

    @property
    def observation_dim(self) -> int:
        return 4

    @property
    def action_dim(self) -> int:
        return 2

    @property
    def position(self) -> np.ndarray:
        return np.array([self._x, self._y])

    @position.setter
    def position(self, value) -> None:
        self._x, self._y = float(value[0]), float(value[1])

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self._vx, self._vy])

    @velocity.setter
    def velocity(self, value) -> None:
        self._vx, self._vy = float(value[0]), float(value[1])

    def _obs(self) -> np.ndarray:
        return np.array([self._x, self._y, self._vx, self._vy])

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        x0, y0, x1, y1 = self.layout.start_region
        self._x = rng.uniform(x0, x1)
        self._y = rng.uniform(y0, y1)
        self._vx = self._vy = 0.0
        self.step_count = 0
        self.episode_over = False
        return self._obs()

    def step(self, action) -> tuple[np.ndarray, float, bool, bool]:
        """Returns (obs, reward, terminated, truncated); terminated means the
        goal disc was reached, truncated means the 50-step cap fired."""
        if self.episode_over:
            raise RuntimeError("step() after episode end; call reset()")
        ax, ay = float(action[0]), float(action[1])
        if not (-1.0 <= ax <= 1.0 and -1.0 <= ay <= 1.0):
            self.clamp_warnings += 1
            ax = min(max(ax, -1.0), 1.0)
            ay = min(max(ay, -1.0), 1.0)

        vx = SPEED_FACTOR * (self._vx + ax * ACCEL_GAIN)
        vy = SPEED_FACTOR * (self._vy + ay * ACCEL_GAIN)
        self._vx = min(max(vx, -MAX_SPEED), MAX_SPEED)
        self._vy = min(max(vy, -MAX_SPEED), MAX_SPEED)

        # axis-separated moves: a blocked axis is cancelled and its velocity
        # zeroed, so motion slides along the free axis
        collides = self.layout.collides_xy
        nx = self._x + self._vx
        if collides(nx, self._y):
            self._vx = 0.0
        else:
            self._x = nx
        ny = self._y + self._vy
        if collides(self._x, ny):
            self._vy = 0.0
        else:
            self._y = ny

        self.step_count += 1
        dx = self._x - self._goal_x
        dy = self._y - self._goal_y
        dist = (dx * dx + dy * dy) ** 0.5
        reward = -dist * self._inv_diag
        terminated = dist <= self.layout.goal_radius
        truncated = not terminated and self.step_count >= MAX_EPISODE_STEPS
        self.episode_over = terminated or truncated
        return self._obs(), reward, terminated, truncated


def normalized_score(positions: np.ndarray, layout: MazeLayout) -> float:
    """Progress toward the goal on a 0..100 scale.

    100 when the goal disc is reached; otherwise the relative reduction of
    the goal distance between the start and the closest approach.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 2 or len(positions) == 0:
        raise ValueError("need a nonempty (T, 2) position array")
    dists = np.linalg.norm(positions - layout.goal_center, axis=1)
    d_start = float(dists[0])
    d_min = float(dists.min())
    if d_min <= layout.goal_radius:
        return 100.0
    if d_start <= 0.0:
        return 0.0
    return 100.0 * max(0.0, (d_start - d_min) / d_start)


def final_position(positions: np.ndarray) -> np.ndarray:
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 2 or len(positions) == 0:
        raise ValueError("need a nonempty (T, 2) position array")
    return positions[-1]
