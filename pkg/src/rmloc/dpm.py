"""Dominant-path radio simulation on occupancy grids.

The propagation surrogate is a single-source shortest path over the
8-connected pixel graph. Edge cost is the geometric step length plus a
wall-penetration surcharge for building/car cells, folded into meters at a
fixed exchange rate of 1 dB per meter. Pathloss then combines log-distance
decay with per-wall and per-radian-of-turning penalties accumulated along
the realized path.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, asdict
from heapq import heappush, heappop

import numpy as np
from PIL import Image

from .scene import CityMap

SPEED_OF_LIGHT = 2.998e8  # m/s

# Exchange rate folding wall dB cost into path meters, so "dominant" = loss-minimal.
METERS_PER_DB = 1.0
DEFAULT_WALL_DB_PER_CELL = 15.0

# 8-connected steps as (dcol, drow, unit length)
_SQRT2 = math.sqrt(2.0)
_STEPS = [
    (1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
    (1, 1, _SQRT2), (1, -1, _SQRT2), (-1, 1, _SQRT2), (-1, -1, _SQRT2),
]


@dataclass
class SimParams:
    """Propagation model parameters and the gray-level clipping window."""

    l0_db: float = 40.0
    path_exponent: float = 2.0
    wall_db_per_cell: float = 15.0
    corner_db_per_rad: float = 10.0
    pl_min_db: float = -160.0
    pl_max_db: float = -40.0

    def __post_init__(self):
        if not self.pl_min_db < self.pl_max_db:
            raise ValueError("pl_min_db must be below pl_max_db")
        if self.wall_db_per_cell < 0 or self.corner_db_per_rad < 0 or self.l0_db < 0:
            raise ValueError("loss terms must be nonnegative")
        if self.path_exponent <= 0:
            raise ValueError("path exponent must be positive")

    @classmethod
    def perturbed(cls) -> "SimParams":
        """Mismatched variant: steeper decay, heavier wall and corner losses.

        The deltas are sized so that measurements drift by a handful of dB
        against the base maps; much larger offsets drown the fingerprint
        geometry entirely and every localizer collapses to center guessing.
        """
        return cls(path_exponent=2.2, wall_db_per_cell=16.0, corner_db_per_rad=10.5)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimParams":
        return cls(**d)


@dataclass
class PathField:
    """Per-pixel dominant-path summary from a fixed source.

    dist_m is the minimized path cost in meters (geometry plus folded wall
    surcharges). wall_cells counts penetrated building/car cells along the
    realized predecessor chain. turn_rad is the accumulated turning of that
    chain after straightening it against line of sight, so raster staircase
    jitter contributes no turning; only genuine bends around obstacles do.
    """

    source: tuple
    cell_m: float
    dist_m: np.ndarray
    turn_rad: np.ndarray
    wall_cells: np.ndarray


@dataclass
class RadioMap:
    """Pathloss grid of one transmitter, in dB and gray-level views."""

    tx: tuple
    pl_db: np.ndarray
    gray: np.ndarray


@dataclass
class ToAMap:
    """Time-of-arrival grid: dominant-path length over the speed of light."""

    tx: tuple
    toa_s: np.ndarray
    cell_m: float = 1.0


def _clear_channel(wall, n, i, j) -> bool:
    """True if no obstacle cell lies strictly between flat nodes i and j."""
    r0, c0 = divmod(i, n)
    r1, c1 = divmod(j, n)
    for x, y in supercover_cells((c0, r0), (c1, r1)):
        k = y * n + x
        if k != i and k != j and wall[k]:
            return False
    return True


def dominant_path(city: CityMap, tx, wall_cost_m: float | None = None) -> PathField:
    """Single-source dominant paths from ``tx`` over the 8-connected grid.

    Building and car cells are passable at a surcharge of ``wall_cost_m``
    meters per penetrated cell (default 15 dB at 1 dB/m). Turning is
    tracked per node through a running visibility anchor: while the
    straight channel from the last bend stays clear the heading may drift
    freely; when it gets blocked the parent becomes a new bend and the
    heading change there is added to the accumulated turning.
    """
    if not city.is_exterior(tx):
        raise ValueError(f"tx {tx} lies inside a building")
    if wall_cost_m is None:
        wall_cost_m = DEFAULT_WALL_DB_PER_CELL * METERS_PER_DB
    n = city.size_px
    cell = city.cell_m
    wall = city.obstacles.ravel().tolist()
    n2 = n * n

    inf = float("inf")
    dist = [inf] * n2
    seen = [inf] * n2
    turn = [0.0] * n2
    walls = [0] * n2
    anchor = [-1] * n2
    done = bytearray(n2)

    src = (tx[1] - 1) * n + (tx[0] - 1)
    seen[src] = 0.0
    anchor[src] = src
    heap = [(0.0, src, -1)]  # (dist, node, predecessor)
    while heap:
        d, i, pred = heappop(heap)
        if done[i]:
            continue
        done[i] = 1
        dist[i] = d
        if pred >= 0:
            walls[i] = walls[pred] + (1 if wall[i] else 0)
            a = anchor[pred]
            if a == pred or _clear_channel(wall, n, a, i):
                anchor[i] = a
                turn[i] = turn[pred]
            else:
                ar, ac = divmod(a, n)
                pr, pc = divmod(pred, n)
                ir, ic = divmod(i, n)
                incoming = math.atan2(pr - ar, pc - ac)
                outgoing = math.atan2(ir - pr, ic - pc)
                delta = abs(incoming - outgoing)
                turn[i] = turn[pred] + min(delta, 2.0 * math.pi - delta)
                anchor[i] = pred
        r, c = divmod(i, n)
        for dc, dr, step in _STEPS:
            rr, cc = r + dr, c + dc
            if 0 <= rr < n and 0 <= cc < n:
                j = rr * n + cc
                if done[j]:
                    continue
                nd = d + step * cell + (wall_cost_m if wall[j] else 0.0)
                if nd < seen[j]:
                    seen[j] = nd
                    heappush(heap, (nd, j, i))

    return PathField(
        source=(int(tx[0]), int(tx[1])),
        cell_m=cell,
        dist_m=np.asarray(dist).reshape(n, n),
        turn_rad=np.asarray(turn).reshape(n, n),
        wall_cells=np.asarray(walls, dtype=np.int32).reshape(n, n),
    )


def pathloss_from_field(field: PathField, params: SimParams) -> np.ndarray:
    """dB pathloss grid from a path field (log-distance + wall + corner losses)."""
    d = np.maximum(field.dist_m, field.cell_m) / field.cell_m
    loss = (
        params.l0_db
        + 10.0 * params.path_exponent * np.log10(d)
        + params.wall_db_per_cell * field.wall_cells
        + params.corner_db_per_rad * field.turn_rad
    )
    return -loss


def radio_map_from_field(field: PathField, params: SimParams) -> RadioMap:
    pl_db = pathloss_from_field(field, params)
    return RadioMap(tx=field.source, pl_db=pl_db, gray=pathloss_to_gray(pl_db, params))


def simulate_radio_map(city: CityMap, tx, params: SimParams) -> RadioMap:
    """Simulate the radio map of one transmitter on ``city``."""
    return radio_map_from_field(dominant_path(city, tx), params)


def toa_from_field(field: PathField) -> ToAMap:
    return ToAMap(tx=field.source, toa_s=field.dist_m / SPEED_OF_LIGHT, cell_m=field.cell_m)


def simulate_toa(city: CityMap, tx) -> ToAMap:
    """Noiseless ToA grid from the dominant path lengths."""
    return toa_from_field(dominant_path(city, tx))


def pathloss_to_gray(pl_db, params: SimParams):
    """Affine map of dB pathloss onto [0, 1], clipped at the window edges."""
    g = (np.asarray(pl_db, dtype=float) - params.pl_min_db) / (params.pl_max_db - params.pl_min_db)
    g = np.clip(g, 0.0, 1.0)
    return float(g) if np.ndim(pl_db) == 0 else g


def gray_to_pathloss(gray, params: SimParams):
    """Inverse of the gray map; faithful only for gray strictly inside (0, 1)."""
    p = params.pl_min_db + np.asarray(gray, dtype=float) * (params.pl_max_db - params.pl_min_db)
    return float(p) if np.ndim(gray) == 0 else p


def measure_rss(radio_map: RadioMap, ue, noise_db: float, seed: int) -> float:
    """Measured pathloss (dB) at the UE pixel, with Gaussian readout noise."""
    x, y = ue
    p = float(radio_map.pl_db[y - 1, x - 1])
    if noise_db > 0:
        p += float(np.random.default_rng(seed).normal(0.0, noise_db))
    return p


def perturb_scene(city: CityMap, seed: int, n_cars: int, max_attempts_per_car: int = 200) -> CityMap:
    """Copy of ``city`` with ``n_cars`` non-overlapping 2x1 cars on exterior cells."""
    out = city.copy()
    if n_cars == 0:
        return out
    rng = np.random.default_rng(seed)
    n = city.size_px
    blocked = (out.buildings | out.cars).astype(bool)
    placed = 0
    attempts = 0
    while placed < n_cars:
        if attempts >= max_attempts_per_car * n_cars:
            raise RuntimeError(
                f"placed only {placed}/{n_cars} cars after {attempts} attempts"
            )
        attempts += 1
        horizontal = bool(rng.integers(0, 2))
        w, h = (2, 1) if horizontal else (1, 2)
        c0 = int(rng.integers(0, n - w + 1))
        r0 = int(rng.integers(0, n - h + 1))
        patch = blocked[r0 : r0 + h, c0 : c0 + w]
        if patch.any():
            continue
        out.cars[r0 : r0 + h, c0 : c0 + w] = 1
        blocked[r0 : r0 + h, c0 : c0 + w] = True
        placed += 1
    return out


def euclidean_map(n: int, tx, cell_m: float = 1.0) -> np.ndarray:
    """Euclidean distance (meters) from ``tx`` to every pixel center."""
    ys, xs = np.mgrid[1 : n + 1, 1 : n + 1]
    return np.hypot(xs - tx[0], ys - tx[1]) * cell_m


def octile_distance(a, b, cell_m: float = 1.0) -> float:
    """Length of the shortest 8-connected grid path between two pixels."""
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    lo, hi = min(dx, dy), max(dx, dy)
    return ((hi - lo) + lo * _SQRT2) * cell_m


def supercover_cells(a, b) -> list:
    """All pixels the open segment between the centers of ``a`` and ``b`` touches.

    Integer supercover line: at exact corner crossings both side pixels are
    included, making the result conservative for visibility tests.
    """
    x0, y0 = a
    x1, y1 = b
    pts = [(x0, y0)]
    dx, dy = x1 - x0, y1 - y0
    xstep = 1 if dx > 0 else -1
    ystep = 1 if dy > 0 else -1
    dx, dy = abs(dx), abs(dy)
    ddx, ddy = 2 * dx, 2 * dy
    x, y = x0, y0
    if ddx >= ddy:
        errorprev = error = dx
        for _ in range(dx):
            x += xstep
            error += ddy
            if error > ddx:
                y += ystep
                error -= ddx
                if error + errorprev < ddx:
                    pts.append((x, y - ystep))
                elif error + errorprev > ddx:
                    pts.append((x - xstep, y))
                else:
                    pts.append((x, y - ystep))
                    pts.append((x - xstep, y))
            pts.append((x, y))
            errorprev = error
    else:
        errorprev = error = dy
        for _ in range(dy):
            y += ystep
            error += ddx
            if error > ddy:
                x += xstep
                error -= ddy
                if error + errorprev < ddy:
                    pts.append((x - xstep, y))
                elif error + errorprev > ddy:
                    pts.append((x, y - ystep))
                else:
                    pts.append((x - xstep, y))
                    pts.append((x, y - ystep))
            pts.append((x, y))
            errorprev = error
    return pts


def line_of_sight(city: CityMap, a, b) -> bool:
    """True if the straight segment between two pixels crosses no obstacle cell."""
    obstacles = city.obstacles
    return not any(obstacles[y - 1, x - 1] for x, y in supercover_cells(a, b))


# --- Interchange formats ---

def save_radio_map(rmap: RadioMap, params: SimParams, png_path, json_path=None) -> None:
    """8-bit PNG of the gray view plus a JSON sidecar with tx and parameters."""
    png_path = str(png_path)
    if json_path is None:
        json_path = png_path.rsplit(".", 1)[0] + ".json"
    img = np.round(rmap.gray * 255.0).astype(np.uint8)
    Image.fromarray(img, mode="L").save(png_path)
    sidecar = {
        "tx": [int(rmap.tx[0]), int(rmap.tx[1])],
        "sim_params": params.to_dict(),
        "pl_window_db": [params.pl_min_db, params.pl_max_db],
    }
    with open(json_path, "w") as f:
        json.dump(sidecar, f, indent=1, sort_keys=True)


def load_radio_map(png_path, json_path=None) -> tuple:
    """Load a radio map written by :func:`save_radio_map`. Returns (RadioMap, SimParams)."""
    png_path = str(png_path)
    if json_path is None:
        json_path = png_path.rsplit(".", 1)[0] + ".json"
    with open(json_path) as f:
        sidecar = json.load(f)
    params = SimParams.from_dict(sidecar["sim_params"])
    gray = np.asarray(Image.open(png_path).convert("L"), dtype=float) / 255.0
    pl_db = gray_to_pathloss(gray, params)
    return RadioMap(tx=tuple(sidecar["tx"]), pl_db=pl_db, gray=gray), params


_TOA_MAGIC = b"RTOA"
_TOA_HEADER = struct.Struct("<4sIfHH")  # magic, N, cell_m, tx_x, tx_y (16 bytes)


def save_toa_map(tmap: ToAMap, path) -> None:
    """Row-major float32 grid with a 16-byte header."""
    n = tmap.toa_s.shape[0]
    with open(path, "wb") as f:
        f.write(_TOA_HEADER.pack(_TOA_MAGIC, n, tmap.cell_m, tmap.tx[0], tmap.tx[1]))
        f.write(np.ascontiguousarray(tmap.toa_s, dtype="<f4").tobytes())


def load_toa_map(path) -> ToAMap:
    with open(path, "rb") as f:
        magic, n, cell_m, tx_x, tx_y = _TOA_HEADER.unpack(f.read(_TOA_HEADER.size))
        if magic != _TOA_MAGIC:
            raise ValueError(f"{path}: not a ToA map file")
        toa = np.frombuffer(f.read(), dtype="<f4").astype(float).reshape(n, n)
    return ToAMap(tx=(tx_x, tx_y), toa_s=toa, cell_m=float(cell_m))
