"""Pathloss fingerprinting baselines: kNN and an adaptive-k variant.

Fingerprints are length-J vectors of gray-level pathloss, compared under
Euclidean distance. Database entries live on a stride lattice of exterior
cells; distance ties are broken by database index order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .scene import CityMap


@dataclass
class FingerprintDB:
    locations: np.ndarray  # (M, 2) int pixel coordinates (x, y)
    vectors: np.ndarray    # (M, J) gray-level values

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=int)
        self.vectors = np.asarray(self.vectors, dtype=float)
        if len(self.locations) != len(self.vectors) or len(self.vectors) == 0:
            raise ValueError("database needs matching, nonempty locations and vectors")

    def __len__(self) -> int:
        return len(self.vectors)


def build_fingerprint_db(radio_maps, city: CityMap, stride: int = 1) -> FingerprintDB:
    """One entry per exterior cell on the stride lattice (coordinates 1, 1+stride, ...)."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n = city.size_px
    shapes = {m.gray.shape for m in radio_maps}
    if shapes != {(n, n)}:
        raise ValueError(f"radio maps must all be {n}x{n}, got {shapes}")
    ext = city.exterior_mask()
    lattice = np.zeros((n, n), dtype=bool)
    lattice[::stride, ::stride] = True
    rows, cols = np.nonzero(ext & lattice)
    if len(rows) == 0:
        raise ValueError("no exterior cell on the stride lattice")
    vectors = np.stack([m.gray[rows, cols] for m in radio_maps], axis=1)
    locations = np.stack([cols + 1, rows + 1], axis=1)
    return FingerprintDB(locations, vectors)


def _nearest_order(db: FingerprintDB, query) -> tuple:
    q = np.asarray(query, dtype=float)
    if q.shape != (db.vectors.shape[1],):
        raise ValueError(f"query length {q.shape} does not match J={db.vectors.shape[1]}")
    d = np.linalg.norm(db.vectors - q, axis=1)
    order = np.argsort(d, kind="stable")  # ties keep database index order
    return d, order


def knn_localize(db: FingerprintDB, query, k: int):
    """Unweighted centroid of the k nearest database locations."""
    if not 1 <= k <= len(db):
        raise ValueError(f"k={k} outside 1..{len(db)}")
    _, order = _nearest_order(db, query)
    picked = db.locations[order[:k]]
    return tuple(picked.mean(axis=0))


def adaptive_knn_localize(db: FingerprintDB, query, alpha: float = 1.1, k_max: int = 16):
    """Centroid over entries within alpha times the best-match distance.

    Membership is capped at the k_max nearest. Returns (estimate, realized_k).
    """
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    d, order = _nearest_order(db, query)
    d_min = d[order[0]]
    within = d[order] <= alpha * d_min
    k = min(int(within.sum()), k_max, len(db))
    picked = db.locations[order[:k]]
    return tuple(picked.mean(axis=0)), k


def save_fingerprint_db(db: FingerprintDB, npz_path, json_path=None, stride: int | None = None,
                        map_id=None) -> None:
    npz_path = str(npz_path)
    if json_path is None:
        json_path = npz_path.rsplit(".", 1)[0] + ".json"
    np.savez(npz_path, locations=db.locations, vectors=db.vectors.astype(np.float32))
    header = {"J": int(db.vectors.shape[1]), "M": len(db), "stride": stride, "map_id": map_id}
    with open(json_path, "w") as f:
        json.dump(header, f, indent=1, sort_keys=True)


def load_fingerprint_db(npz_path) -> FingerprintDB:
    data = np.load(npz_path)
    return FingerprintDB(data["locations"], data["vectors"].astype(float))
