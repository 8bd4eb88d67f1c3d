import numpy as np
import pytest

from rmloc import dpm
from rmloc.ranging import RangingInstance, toa_to_instance
from rmloc.scene import CityMap, place_points


def empty_city(n: int, cell_m: float = 1.0) -> CityMap:
    return CityMap(n, cell_m)


def walled_city_9() -> CityMap:
    """9x9 map with a full-width 1-cell wall separating left and right halves."""
    buildings = np.zeros((9, 9), dtype=np.uint8)
    buildings[:, 4] = 1  # wall at x=5
    return CityMap(9, 1.0, buildings)


def exact_instance(rng, j=5, box=64.0):
    """Random non-collinear anchors and truth with exact Euclidean ranges."""
    while True:
        anchors = rng.uniform(0, box, size=(j, 2))
        sv = np.linalg.svd(anchors - anchors.mean(axis=0), compute_uv=False)
        if sv[1] > 1e-3 * sv[0]:
            break
    truth = rng.uniform(0, box, size=2)
    ranges = np.linalg.norm(anchors - truth, axis=1)
    return RangingInstance(anchors, ranges, truth=tuple(truth))


def quadrant_los_instance(city: CityMap, seed: int):
    """Noiseless ToA instance with one verified-LOS anchor per quadrant.

    Picks a near-center UE and, for each quadrant around it, the first
    sampled exterior point with line of sight. Returns None if the map is
    too cluttered.
    """
    n = city.size_px
    candidates = place_points(city, 100, seed=seed)
    center = np.array([n / 2, n / 2])
    for ue in sorted(candidates, key=lambda p: np.linalg.norm(np.array(p) - center))[:15]:
        bs = []
        for qx, qy in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
            for p in candidates:
                dx, dy = p[0] - ue[0], p[1] - ue[1]
                if dx * qx > 3 and dy * qy > 3 and dpm.line_of_sight(city, ue, p):
                    bs.append(p)
                    break
        if len(bs) == 4:
            toa_maps = [dpm.simulate_toa(city, tx) for tx in bs]
            return toa_to_instance(toa_maps, ue, noise_s=0.0)
    return None


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
