"""Synthetic city maps and transmitter/receiver placement.

Conventions used across the package: grids are N x N numpy arrays indexed
``grid[y - 1, x - 1]`` for a pixel coordinate ``(x, y)`` with x, y in 1..N
(image row 0 is y=1). Positions in meters are ``(x * cell_m, y * cell_m)``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from PIL import Image


class GenerationError(RuntimeError):
    """City-map generation could not satisfy its constraints."""


@dataclass
class BuildingBounds:
    """Side-length bounds (pixels) for rectangular buildings."""

    min_side: int = 4
    max_side: int = 12


@dataclass
class CityMap:
    """Binary occupancy grid: buildings plus an optional car overlay.

    ``buildings`` and ``cars`` are {0,1} uint8 grids of shape (N, N); cars
    may only occupy exterior (non-building) cells.
    """

    size_px: int
    cell_m: float = 1.0
    buildings: np.ndarray = field(default=None)  # type: ignore[assignment]
    cars: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        n = self.size_px
        if self.buildings is None:
            self.buildings = np.zeros((n, n), dtype=np.uint8)
        if self.cars is None:
            self.cars = np.zeros((n, n), dtype=np.uint8)
        self.buildings = np.asarray(self.buildings, dtype=np.uint8)
        self.cars = np.asarray(self.cars, dtype=np.uint8)
        if self.buildings.shape != (n, n) or self.cars.shape != (n, n):
            raise ValueError(
                f"grids must be {n}x{n}, got buildings {self.buildings.shape}, cars {self.cars.shape}"
            )
        for name, g in (("buildings", self.buildings), ("cars", self.cars)):
            if not np.isin(g, (0, 1)).all():
                raise ValueError(f"{name} grid must be 0/1 valued")
        if np.any(self.cars & self.buildings):
            raise ValueError("cars may only be placed on exterior cells")

    @property
    def obstacles(self) -> np.ndarray:
        """Union of buildings and cars (what blocks/attenuates propagation)."""
        return (self.buildings | self.cars).astype(np.uint8)

    def exterior_mask(self) -> np.ndarray:
        return self.buildings == 0

    def is_exterior(self, xy) -> bool:
        x, y = xy
        return self.buildings[y - 1, x - 1] == 0

    def building_fraction(self) -> float:
        return float(self.buildings.mean())

    def copy(self) -> "CityMap":
        return CityMap(self.size_px, self.cell_m, self.buildings.copy(), self.cars.copy())


@dataclass
class Scene:
    """A city map together with BS and UE pixel coordinates (1-indexed)."""

    city: CityMap
    bs_locations: list
    ue_locations: list

    def __post_init__(self):
        if len(self.bs_locations) < 1:
            raise ValueError("a scene needs at least one BS")
        n = self.city.size_px
        for x, y in list(self.bs_locations) + list(self.ue_locations):
            if not (1 <= x <= n and 1 <= y <= n):
                raise ValueError(f"coordinate ({x},{y}) outside the {n}x{n} grid")
            if not self.city.is_exterior((x, y)):
                raise ValueError(f"coordinate ({x},{y}) falls inside a building")
        if len(set(map(tuple, self.bs_locations))) != len(self.bs_locations):
            raise ValueError("BS coordinates must be pairwise distinct")


def exterior_is_connected(buildings: np.ndarray) -> bool:
    """True if the exterior (buildings == 0) forms one 4-connected component."""
    free = buildings == 0
    total = int(free.sum())
    if total == 0:
        return False
    start = tuple(np.argwhere(free)[0])
    seen = np.zeros_like(free, dtype=bool)
    seen[start] = True
    q = deque([start])
    n_rows, n_cols = free.shape
    count = 1
    while q:
        r, c = q.popleft()
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < n_rows and 0 <= cc < n_cols and free[rr, cc] and not seen[rr, cc]:
                seen[rr, cc] = True
                count += 1
                q.append((rr, cc))
    return count == total


def generate_city_map(
    seed: int,
    size_px: int,
    n_buildings: int,
    bounds: BuildingBounds | None = None,
    cell_m: float = 1.0,
    max_attempts: int = 50,
) -> CityMap:
    """Generate a city map of axis-aligned rectangular buildings.

    Rejects and resamples until the exterior is 4-connected and the building
    fraction stays at or below 0.6. Deterministic in ``seed``.
    """
    if size_px < 16:
        raise ValueError(f"size_px must be >= 16, got {size_px}")
    if n_buildings < 0:
        raise ValueError(f"n_buildings must be >= 0, got {n_buildings}")
    bounds = bounds or BuildingBounds()
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        grid = np.zeros((size_px, size_px), dtype=np.uint8)
        ok = True
        for _ in range(n_buildings):
            w = int(rng.integers(bounds.min_side, bounds.max_side + 1))
            h = int(rng.integers(bounds.min_side, bounds.max_side + 1))
            # 1-cell margin keeps the border ring exterior
            if size_px - w - 1 <= 1 or size_px - h - 1 <= 1:
                ok = False
                break
            c0 = int(rng.integers(1, size_px - w - 1))
            r0 = int(rng.integers(1, size_px - h - 1))
            grid[r0 : r0 + h, c0 : c0 + w] = 1
        if not ok:
            continue
        if grid.mean() > 0.6:
            continue
        if n_buildings > 0 and grid.sum() == 0:
            continue
        if not exterior_is_connected(grid):
            continue
        return CityMap(size_px, cell_m, grid)
    raise GenerationError(
        f"no valid layout after {max_attempts} attempts "
        f"(seed={seed}, size_px={size_px}, n_buildings={n_buildings}, "
        f"sides {bounds.min_side}..{bounds.max_side})"
    )


def place_points(city: CityMap, count: int, seed: int) -> list:
    """Sample ``count`` distinct exterior pixels uniformly. Deterministic in seed."""
    free = np.argwhere(city.exterior_mask())  # rows of (r, c), row-major order
    if count > len(free):
        raise ValueError(
            f"cannot place {count} points on {len(free)} exterior cells"
        )
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(free), size=count, replace=False)
    return [(int(c) + 1, int(r) + 1) for r, c in free[idx]]


# --- PNG interchange: 0 = exterior, 255 = building (or car) interior ---

def save_city_png(city: CityMap, path) -> None:
    Image.fromarray(city.buildings * np.uint8(255), mode="L").save(path)


def save_cars_png(city: CityMap, path) -> None:
    Image.fromarray(city.cars * np.uint8(255), mode="L").save(path)


def load_city_png(path, cell_m: float = 1.0, cars_path=None) -> CityMap:
    buildings = (np.asarray(Image.open(path).convert("L")) >= 128).astype(np.uint8)
    if buildings.shape[0] != buildings.shape[1]:
        raise ValueError(f"city map must be square, got {buildings.shape}")
    cars = None
    if cars_path is not None:
        cars = (np.asarray(Image.open(cars_path).convert("L")) >= 128).astype(np.uint8)
    return CityMap(buildings.shape[0], cell_m, buildings, cars)
