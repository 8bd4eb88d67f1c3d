"""Likelihood heat maps, input encoding and the center-of-mass readout.

Coordinates are 1-indexed: a heat map cell at array index [r, c] scores the
pixel (x, y) = (c + 1, r + 1), and the center of mass is the H-weighted
mean of those pixel coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import CityMap

COM_SUM_EPS = 1e-8


class DegenerateHeatMapError(ValueError):
    """Heat map mass sums to (nearly) zero; the center of mass is undefined."""


@dataclass
class Sample:
    """One localization instance as seen by a localizer."""

    city: CityMap
    bs: list                 # J pixel coordinates
    radio_maps_est: list     # J RadioMap available to the localizer
    p_meas: np.ndarray       # J measured pathloss values, gray-level
    truth: tuple             # UE pixel coordinate

    def __post_init__(self):
        self.p_meas = np.asarray(self.p_meas, dtype=float)
        j = len(self.bs)
        if not (len(self.radio_maps_est) == j == len(self.p_meas)):
            raise ValueError("bs, radio maps and measurements must all have length J")


def encode_inputs(sample: Sample) -> np.ndarray:
    """Stack a sample into (3J+1, N, N) image channels.

    Channel order: J radio maps, J constant measured-pathloss images,
    J one-hot BS images, then the binary city map.
    """
    if np.any(sample.p_meas < 0) or np.any(sample.p_meas > 1):
        raise ValueError(f"p_meas must lie in [0, 1], got {sample.p_meas}")
    n = sample.city.size_px
    j = len(sample.bs)
    channels = np.zeros((3 * j + 1, n, n), dtype=float)
    for i, rmap in enumerate(sample.radio_maps_est):
        channels[i] = rmap.gray
    for i, p in enumerate(sample.p_meas):
        channels[j + i] = p
    for i, (x, y) in enumerate(sample.bs):
        channels[2 * j + i, y - 1, x - 1] = 1.0
    channels[3 * j] = sample.city.buildings
    return channels


def center_of_mass(h: np.ndarray) -> tuple:
    """H-weighted mean pixel coordinate (mu_x, mu_y), coordinates 1..N."""
    h = np.asarray(h, dtype=float)
    total = h.sum()
    if abs(total) < COM_SUM_EPS:
        raise DegenerateHeatMapError(f"heat map mass {total} is below {COM_SUM_EPS}")
    n_rows, n_cols = h.shape
    xs = np.arange(1, n_cols + 1)
    ys = np.arange(1, n_rows + 1)
    mu_x = float((h.sum(axis=0) * xs).sum() / total)
    mu_y = float((h.sum(axis=1) * ys).sum() / total)
    return mu_x, mu_y


def analytic_heatmap(sample: Sample, sigma_gray: float) -> np.ndarray:
    """Gaussian match score between measurements and the per-pixel fingerprints.

    h(x, y) = exp(-sum_j (R_j(x,y) - p_j)^2 / (2 sigma^2)) on exterior
    cells, zero on buildings.
    """
    if sigma_gray <= 0:
        raise ValueError("sigma_gray must be positive")
    sq = _sq_residuals(sample)
    h = np.exp(-sq / (2.0 * sigma_gray**2))
    h[~sample.city.exterior_mask()] = 0.0
    return h


def _sq_residuals(sample: Sample) -> np.ndarray:
    sq = np.zeros_like(sample.radio_maps_est[0].gray, dtype=float)
    for rmap, p in zip(sample.radio_maps_est, sample.p_meas):
        sq += (rmap.gray - p) ** 2
    return sq


def analytic_localize(sample: Sample, sigma_gray: float, mode: str = "com") -> tuple:
    """Locate the UE from the analytic heat map, by center of mass or argmax.

    The center of mass is invariant to positive rescaling, so it is
    evaluated on the max-normalized heat map; small sigma values would
    otherwise underflow the raw exponentials to an all-zero grid.
    """
    if sigma_gray <= 0:
        raise ValueError("sigma_gray must be positive")
    sq = _sq_residuals(sample)
    ext = sample.city.exterior_mask()
    if mode == "argmax":
        sq[~ext] = np.inf
        r, c = np.unravel_index(np.argmin(sq), sq.shape)
        return float(c + 1), float(r + 1)
    if mode == "com":
        log_h = -sq / (2.0 * sigma_gray**2)
        h = np.exp(log_h - log_h[ext].max())
        h[~ext] = 0.0
        return center_of_mass(h)
    raise ValueError(f"unknown mode {mode!r}")


def mae(estimates, truths, cell_m: float = 1.0) -> float:
    """Mean Euclidean distance between paired positions (meters per cell_m)."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    if est.shape != tru.shape or len(est) == 0:
        raise ValueError(f"need equal, nonempty position lists, got {est.shape} vs {tru.shape}")
    return float(np.linalg.norm(est - tru, axis=1).mean() * cell_m)
