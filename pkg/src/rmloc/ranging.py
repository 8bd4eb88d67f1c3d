"""Range-based localization from ToA (and the log-distance RSS strawman).

All solvers are deterministic functions of the instance. Positions and
ranges are in meters; a pixel (x, y) maps to (x * cell_m, y * cell_m).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dpm import SPEED_OF_LIGHT, gray_to_pathloss


@dataclass
class RangingInstance:
    anchors: np.ndarray   # (J, 2) anchor positions in meters
    ranges_m: np.ndarray  # (J,) range estimates
    truth: tuple | None = None

    def __post_init__(self):
        self.anchors = np.asarray(self.anchors, dtype=float)
        self.ranges_m = np.asarray(self.ranges_m, dtype=float)
        if self.anchors.ndim != 2 or self.anchors.shape[1] != 2:
            raise ValueError("anchors must be (J, 2)")
        if self.ranges_m.shape != (len(self.anchors),):
            raise ValueError("one range per anchor required")
        if np.any(self.ranges_m < 0):
            raise ValueError("ranges must be nonnegative")


@dataclass
class SolverReport:
    estimate: tuple
    iterations: int
    converged: bool
    residual: float
    trace: list | None = field(default=None, repr=False)


def toa_to_instance(toa_maps, ue, noise_s: float = 0.0, seed: int = 0) -> RangingInstance:
    """Ranging instance from per-BS ToA grids at the UE pixel.

    Ranges are (toa + Gaussian noise) * c, floored at zero.
    """
    x, y = ue
    cell = toa_maps[0].cell_m
    toas = np.array([m.toa_s[y - 1, x - 1] for m in toa_maps], dtype=float)
    if noise_s > 0:
        toas = toas + np.random.default_rng(seed).normal(0.0, noise_s, size=len(toas))
    ranges = np.maximum(toas * SPEED_OF_LIGHT, 0.0)
    anchors = np.array([(m.tx[0] * cell, m.tx[1] * cell) for m in toa_maps], dtype=float)
    return RangingInstance(anchors, ranges, truth=(x * cell, y * cell))


def pocs_localize(
    inst: RangingInstance,
    max_iter: int = 500,
    tol_m: float = 1e-9,
    relaxation: float = 1.0,
    init=None,
    trace: bool = False,
) -> SolverReport:
    """Cyclic projections onto the discs centered at the anchors.

    Starts from the anchor centroid. Stops when a full cycle moves the
    iterate less than ``tol_m``. Residual is the largest disc violation.
    """
    if len(inst.anchors) < 2:
        raise ValueError("POCS needs at least 2 anchors")
    x = np.asarray(init, dtype=float) if init is not None else inst.anchors.mean(axis=0)
    history = [tuple(x)] if trace else None

    def max_violation(p):
        return float(np.max(np.linalg.norm(p - inst.anchors, axis=1) - inst.ranges_m))

    if max_violation(x) <= 0.0:
        return SolverReport(tuple(x), 0, True, 0.0, history)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        x_prev = x.copy()
        for a, d in zip(inst.anchors, inst.ranges_m):
            v = x - a
            dist = float(np.linalg.norm(v))
            if dist > d:
                proj = a + v * (d / dist) if dist > 0 else a.copy()
                x = x + relaxation * (proj - x)
        if trace:
            history.append(tuple(x))
        if float(np.linalg.norm(x - x_prev)) < tol_m:
            converged = True
            break
    return SolverReport(tuple(x), it, converged, max(0.0, max_violation(x)), history)


def _check_not_collinear(anchors: np.ndarray) -> None:
    centered = anchors - anchors.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if len(sv) < 2 or sv[1] <= 1e-9 * max(sv[0], 1.0):
        raise ValueError("anchors are collinear; the planar squared-range system is rank deficient")


def gtrs_bisection_localize(inst: RangingInstance, tol: float = 1e-9, max_bisect: int = 200) -> SolverReport:
    """Squared-range least squares solved as a trust-region-like subproblem.

    With y = [x; ||x||^2], minimizes ||A y - b||^2 subject to
    y^T D y + 2 f^T y = 0, using bisection on the multiplier lambda over
    the interval where A^T A + lambda D stays positive definite. The
    constraint function phi(lambda) is strictly decreasing there, so the
    root is unique. Residual reported is |phi| at the returned multiplier.
    """
    if len(inst.anchors) < 3:
        raise ValueError("need at least 3 anchors")
    _check_not_collinear(inst.anchors)
    a = inst.anchors
    d = inst.ranges_m
    A = np.column_stack([-2.0 * a, np.ones(len(a))])
    b = d**2 - (a**2).sum(axis=1)
    ATA = A.T @ A
    ATb = A.T @ b
    D = np.diag([1.0, 1.0, 0.0])
    f = np.array([0.0, 0.0, -0.5])

    # Left end of the positive-definite interval: lam > -1 / mu_max with
    # mu_max the largest eigenvalue of L^-1 D L^-T for ATA = L L^T.
    L = np.linalg.cholesky(ATA)
    Linv = np.linalg.inv(L)
    mu = np.linalg.eigvalsh(Linv @ D @ Linv.T)
    lam_floor = -1.0 / mu[-1]

    def solve_y(lam):
        return np.linalg.solve(ATA + lam * D, ATb - lam * f)

    def phi(lam):
        y = solve_y(lam)
        return y[0] ** 2 + y[1] ** 2 - y[2], y

    scale = max(1.0, abs(lam_floor))
    lo = lam_floor + 1e-12 * scale
    phi_lo, y = phi(lo)
    while not np.isfinite(phi_lo):
        lo = lam_floor + (lo - lam_floor) * 10.0
        phi_lo, y = phi(lo)
    if phi_lo <= 0.0:
        # Root squeezed against the interval edge; lo is as good as it gets.
        return SolverReport((y[0], y[1]), 0, abs(phi_lo) < tol, abs(phi_lo))

    hi = lo + scale
    phi_hi, _ = phi(hi)
    doublings = 0
    while phi_hi > 0.0 and doublings < 200:
        hi = lo + 2.0 * (hi - lo)
        phi_hi, _ = phi(hi)
        doublings += 1
    if phi_hi > 0.0:
        y = solve_y(hi)
        return SolverReport((y[0], y[1]), doublings, False, abs(phi_hi))

    it = 0
    for it in range(1, max_bisect + 1):
        mid = 0.5 * (lo + hi)
        phi_mid, y = phi(mid)
        if abs(phi_mid) < tol or (hi - lo) < 1e-15 * max(1.0, abs(mid)):
            return SolverReport((y[0], y[1]), it, abs(phi_mid) < tol, abs(phi_mid))
        if phi_mid > 0.0:
            lo = mid
        else:
            hi = mid
    phi_mid, y = phi(0.5 * (lo + hi))
    return SolverReport((y[0], y[1]), it, abs(phi_mid) < tol, abs(phi_mid))


def correntropy_localize(
    inst: RangingInstance,
    sigma_m: float = 5.0,
    max_iter: int = 100,
    tol_m: float = 1e-9,
    init=None,
    restarts: bool = True,
) -> SolverReport:
    """Maximum-correntropy range fit via half-quadratic iteration.

    Each round fixes Gaussian-kernel weights w_j = exp(-r_j^2 / (2 sigma^2))
    from the current range residuals and takes one weighted Gauss-Newton
    step. The primary run starts at the squared-range solver's estimate
    with the kernel annealed down from the initial residual scale (a poor
    outlier-driven start would otherwise zero every weight). With
    ``restarts`` the solver also probes fixed-kernel runs seeded by
    leave-one-anchor-out squared-range solutions and keeps whichever
    candidate scores the best correntropy objective; everything stays
    deterministic. Residual is the negative objective at the returned
    point.
    """
    if sigma_m <= 0:
        raise ValueError("sigma_m must be positive")
    if len(inst.anchors) < 3:
        raise ValueError("need at least 3 anchors")
    if init is None:
        init = gtrs_bisection_localize(inst).estimate
    init = np.asarray(init, dtype=float)

    def residuals(p):
        return inst.ranges_m - np.linalg.norm(p - inst.anchors, axis=1)

    def objective(p):
        return -float(np.sum(np.exp(-(residuals(p) ** 2) / (2.0 * sigma_m**2))))

    def half_quadratic(x0, anneal):
        x = x0.copy()
        sigma_start = max(sigma_m, float(np.max(np.abs(residuals(x))))) if anneal else sigma_m
        anneal_steps = max(1, max_iter // 2)
        decay = (sigma_m / sigma_start) ** (1.0 / anneal_steps) if sigma_start > sigma_m else 1.0
        it = 0
        for it in range(1, max_iter + 1):
            sigma = max(sigma_m, sigma_start * decay**it)
            diffs = x - inst.anchors
            dists = np.maximum(np.linalg.norm(diffs, axis=1), 1e-12)
            r = inst.ranges_m - dists
            w = np.exp(-(r**2) / (2.0 * sigma**2))
            u = diffs / dists[:, None]
            H = (u * w[:, None]).T @ u
            g = (u * (w * r)[:, None]).sum(axis=0)
            try:
                step = np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                return x, it, False
            if not np.all(np.isfinite(step)):
                return x, it, False
            x = x + step
            if sigma <= sigma_m and float(np.linalg.norm(step)) < tol_m:
                return x, it, True
        return x, it, False

    runs = [half_quadratic(init, anneal=True)]
    if restarts:
        runs.append(half_quadratic(init, anneal=False))
        for k in range(len(inst.anchors)):
            if len(inst.anchors) - 1 < 3:
                break
            sub = RangingInstance(np.delete(inst.anchors, k, axis=0),
                                  np.delete(inst.ranges_m, k))
            try:
                seed_pt = np.asarray(gtrs_bisection_localize(sub).estimate)
            except (ValueError, np.linalg.LinAlgError):
                continue
            runs.append(half_quadratic(seed_pt, anneal=False))
    x, it, converged = min(runs, key=lambda r: objective(r[0]))
    return SolverReport(tuple(x), it, converged, objective(x))


def rss_log_distance_localize(sample, params, l0_db: float | None = None,
                              path_exponent: float | None = None) -> SolverReport:
    """Lateration strawman: invert a log-distance model per BS, then range-solve.

    Measured gray-level pathloss is mapped back to dB and inverted through
    pl = -(l0 + 10 n log10 d). Distances are capped at the grid diagonal
    (values at the clipping window's floor would otherwise blow up).
    """
    l0 = params.l0_db if l0_db is None else l0_db
    n_exp = params.path_exponent if path_exponent is None else path_exponent
    city = sample.city
    pl = gray_to_pathloss(np.asarray(sample.p_meas, dtype=float), params)
    d_cells = 10.0 ** ((-pl - l0) / (10.0 * n_exp))
    diag_cells = city.size_px * np.sqrt(2.0)
    d_m = np.minimum(d_cells, diag_cells) * city.cell_m
    anchors = np.array([(x * city.cell_m, y * city.cell_m) for x, y in sample.bs])
    truth = (sample.truth[0] * city.cell_m, sample.truth[1] * city.cell_m)
    inst = RangingInstance(anchors, d_m, truth=truth)
    return gtrs_bisection_localize(inst)
