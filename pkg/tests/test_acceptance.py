"""Acceptance suite: one test per release criterion, with pass/fail lines.

Run as ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. The trained-network criteria share one session-scoped training run;
the whole module is sized for a small desktop CPU.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest
import torch

from conftest import empty_city, exact_instance, quadrant_los_instance
from test_dpm import dijkstra_oracle, random_city, random_exterior

from rmloc import dpm
from rmloc.bench import Scenario, evaluate_method, grid_search, make_samples, prepare_eval
from rmloc.dataset import DatasetConfig, build_dataset
from rmloc.fingerprint import build_fingerprint_db, knn_localize
from rmloc.heatmap import Sample, center_of_mass, mae
from rmloc.locnet import LocNet, LocNetConfig, center_of_mass_torch
from rmloc.ranging import (
    RangingInstance,
    correntropy_localize,
    gtrs_bisection_localize,
    pocs_localize,
    rss_log_distance_localize,
)
from rmloc.scene import BuildingBounds, generate_city_map, place_points
from rmloc.train import TrainConfig, fit


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] {name}: FAIL", flush=True)
        raise
    print(f"[ACCEPTANCE] {name}: PASS", flush=True)


# --- shared fixtures -------------------------------------------------------

@pytest.fixture(scope="session")
def desk_manifest(tmp_path_factory):
    cfg = DatasetConfig(out_dir=str(tmp_path_factory.mktemp("desk")), maps=14, bs_per_map=5,
                        ues_per_map=20, size_px=64, n_buildings=8, seed=0,
                        split_counts=(10, 2, 2))
    return build_dataset(cfg)


@pytest.fixture(scope="session")
def cars_scenario():
    return Scenario.preset("SIM-DPM2IRT-CARS")


@pytest.fixture(scope="session")
def trained_cars(desk_manifest, cars_scenario):
    """Network trained on the cars-mismatch scenario; returns (model, log, elapsed_s)."""
    train = make_samples(desk_manifest, cars_scenario, "train", seed=0)
    val = make_samples(desk_manifest, cars_scenario, "val", seed=1)
    assert len(train) == 200
    model = LocNet(LocNetConfig(n_px=64, n_bs=5, seed=0))
    cfg = TrainConfig(epochs=60, batch_size=15, lr=3e-4, lr_drop_epoch=45, seed=0)
    t0 = time.perf_counter()
    log = fit(model, train, val, cfg)
    return model, log, time.perf_counter() - t0, val


# --- CoM oracle suite ------------------------------------------------------

def test_com_oracle_suite():
    with criterion("CoM oracle suite"):
        assert center_of_mass(np.full((64, 64), 0.7)) == pytest.approx((32.5, 32.5), abs=1e-9)
        one_hot = np.zeros((64, 64))
        one_hot[19, 9] = 3.0
        assert center_of_mass(one_hot) == pytest.approx((10.0, 20.0), abs=1e-9)
        two = np.zeros((8, 8))
        two[0, 0], two[0, 2] = 1.0, 3.0
        assert center_of_mass(two) == pytest.approx((2.5, 1.0), abs=1e-9)

        rng = np.random.default_rng(0)
        for _ in range(100):
            h = rng.random((10, 10)) + 1e-3
            base = np.array(center_of_mass(h))
            scale = float(rng.uniform(1e-3, 1e3))
            assert np.array(center_of_mass(scale * h)) == pytest.approx(base, abs=1e-7)
            dx, dy = rng.integers(0, 12, size=2)
            padded = np.zeros((24, 24))
            padded[:10, :10] = h
            shifted = np.zeros((24, 24))
            shifted[dy : dy + 10, dx : dx + 10] = h
            a = np.array(center_of_mass(padded))
            b = np.array(center_of_mass(shifted))
            assert b == pytest.approx(a + [dx, dy], abs=1e-9)


# --- gradient checks -------------------------------------------------------

def test_gradient_checks():
    with criterion("Gradient checks (CoM + end-to-end, 16x16)"):
        t_start = time.perf_counter()
        # CoM layer against central differences
        g = torch.Generator().manual_seed(2)
        h = (torch.rand(1, 1, 16, 16, generator=g, dtype=torch.float64) + 0.05).requires_grad_(True)
        target = torch.tensor([[6.0, 12.0]], dtype=torch.float64)
        torch.linalg.vector_norm(center_of_mass_torch(h) - target).backward()
        rng = np.random.default_rng(3)
        for _ in range(10):
            r, c = rng.integers(16, size=2)
            def com_loss(v, r=r, c=c):
                hm = h.detach().clone()
                hm[0, 0, r, c] = v
                return float(torch.linalg.vector_norm(center_of_mass_torch(hm) - target))
            v0 = float(h.detach()[0, 0, r, c])
            fd = (com_loss(v0 + 1e-6) - com_loss(v0 - 1e-6)) / 2e-6
            assert abs(float(h.grad[0, 0, r, c]) - fd) <= 1e-3 * max(abs(fd), 1e-8)

        # end-to-end toy network
        model = LocNet(LocNetConfig(n_px=16, enc_widths=(4, 6, 8), bottleneck=12, seed=5)).double()
        x = torch.rand(1, model.config.in_channels, 16, 16,
                       generator=torch.Generator().manual_seed(6), dtype=torch.float64)
        target = torch.tensor([[5.0, 11.0]], dtype=torch.float64)

        def net_loss():
            return torch.linalg.vector_norm(model(x)[1] - target)

        model.zero_grad()
        net_loss().backward()
        params = [p for p in model.parameters() if p.grad is not None]
        checked = 0
        for p in params[:: max(1, len(params) // 8)]:
            flat = p.detach().reshape(-1)
            idx = int(rng.integers(flat.numel()))
            orig = float(flat[idx])
            def f(v, p=p, idx=idx, orig=orig):
                with torch.no_grad():
                    p.reshape(-1)[idx] = v
                out = float(net_loss())
                with torch.no_grad():
                    p.reshape(-1)[idx] = orig
                return out
            fd = (f(orig + 1e-6) - f(orig - 1e-6)) / 2e-6
            grad = float(p.grad.reshape(-1)[idx])
            assert abs(grad - fd) <= 1e-3 * max(abs(fd), 1e-7)
            checked += 1
        assert checked >= 6
        assert time.perf_counter() - t_start < 60.0


# --- simulator oracle ------------------------------------------------------

def test_simulator_oracle():
    with criterion("Simulator oracle (Dijkstra equality, NLOS bias, gray round trip)"):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(16, 33))
            city = random_city(int(rng.integers(1 << 30)), n, n_rects=int(rng.integers(0, 6)))
            tx = random_exterior(city, rng)
            assert np.array_equal(dpm.dominant_path(city, tx).dist_m, dijkstra_oracle(city, tx))

        for seed in range(20):
            city = generate_city_map(seed, 64, 8)
            tx = place_points(city, 1, seed=seed + 500)[0]
            bias = dpm.dominant_path(city, tx).dist_m - dpm.euclidean_map(64, tx)
            assert bias.min() >= -1e-9

        params = dpm.SimParams()
        for v in np.linspace(-159.9, -40.1, 300):
            assert abs(dpm.gray_to_pathloss(dpm.pathloss_to_gray(v, params), params) - v) < 1e-9


# --- GTRS ------------------------------------------------------------------

def test_gtrs_solver():
    with criterion("GTRS solver (100 exact recoveries, collinear rejection, < 5 s)"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(8)
        worst = 0.0
        for _ in range(100):
            inst = exact_instance(rng, j=int(rng.integers(3, 8)))
            rep = gtrs_bisection_localize(inst)
            worst = max(worst, float(np.linalg.norm(np.array(rep.estimate) - inst.truth)))
        assert worst < 1e-6
        with pytest.raises(ValueError):
            gtrs_bisection_localize(
                RangingInstance(np.array([[0.0, 0.0], [3.0, 3.0], [9.0, 9.0]]), np.ones(3)))
        assert time.perf_counter() - t0 < 5.0


# --- POCS ------------------------------------------------------------------

def test_pocs_solver():
    with criterion("POCS (tangent discs exact, Fejer monotonicity on 50 instances)"):
        inst = RangingInstance(np.array([[0.0, 0.0], [2.0, 0.0]]), np.array([1.0, 1.0]))
        rep = pocs_localize(inst)
        assert np.linalg.norm(np.array(rep.estimate) - [1.0, 0.0]) < 1e-6

        rng = np.random.default_rng(9)
        for _ in range(50):
            base = exact_instance(rng, j=int(rng.integers(3, 7)))
            feasible = RangingInstance(base.anchors, base.ranges_m + rng.uniform(0.5, 3.0),
                                       truth=base.truth)
            rep = pocs_localize(feasible, init=rng.uniform(-60, 130, size=2), trace=True)
            z = np.array(feasible.truth)  # interior point of every disc by construction
            gaps = [np.linalg.norm(np.array(p) - z) for p in rep.trace]
            assert all(b <= a + 1e-10 for a, b in zip(gaps, gaps[1:]))

        city = generate_city_map(0, 64, 5, BuildingBounds(4, 10))
        los = quadrant_los_instance(city, seed=100)
        rep = pocs_localize(los)
        assert rep.residual <= 1e-6
        assert np.linalg.norm(np.array(rep.estimate) - los.truth) <= 0.083 * los.ranges_m.max()


# --- correntropy robustness -------------------------------------------------

def test_correntropy_robustness():
    with criterion("Correntropy beats squared-range LS under one +50 m outlier (>= 90/100)"):
        rng = np.random.default_rng(10)
        wins = 0
        for _ in range(100):
            inst = exact_instance(rng, j=5)
            ranges = inst.ranges_m.copy()
            ranges[int(rng.integers(5))] += 50.0
            bad = RangingInstance(inst.anchors, ranges, truth=inst.truth)
            e_mcc = np.linalg.norm(
                np.array(correntropy_localize(bad, sigma_m=5.0).estimate) - bad.truth)
            e_ls = np.linalg.norm(
                np.array(gtrs_bisection_localize(bad).estimate) - bad.truth)
            wins += e_mcc < e_ls
        assert wins >= 90, f"only {wins}/100 wins"


# --- fingerprint identifiability --------------------------------------------

def test_fingerprint_identifiability(desk_manifest):
    with criterion("Noiseless stride-1 kNN(k=1) exact on unique fingerprints"):
        scenario = Scenario.preset("SIM-DPM", map_noise_gray=0.0, meas_noise_db=0.0)
        prepared = prepare_eval(desk_manifest, scenario, seed=0, split="test")
        n_unique = 0
        for ps in prepared:
            db = ps.db
            q = ps.sample.p_meas
            d = np.linalg.norm(db.vectors - q, axis=1)
            if (d < 1e-12).sum() != 1:
                continue  # ambiguous fingerprint, outside the criterion
            n_unique += 1
            est = knn_localize(db, q, k=1)
            assert est == (float(ps.sample.truth[0]), float(ps.sample.truth[1]))
        assert n_unique >= len(prepared) // 2  # the check must actually bite


# --- training sanity ---------------------------------------------------------

def test_training_overfits_single_sample(desk_manifest, cars_scenario):
    with criterion("Training overfits one sample to < 1 px"):
        sample = make_samples(desk_manifest, cars_scenario, "train", seed=0,
                              ues_per_scene=1)[0]
        model = LocNet(LocNetConfig(n_px=64, n_bs=5, seed=1))
        cfg = TrainConfig(epochs=300, batch_size=1, lr=1e-3, lr_drop_epoch=250, seed=1)
        log = fit(model, [sample], [sample], cfg)
        assert min(r[2] for r in log.rows) < 1.0, f"train MAE stuck at {log.rows[-1][2]:.2f}"


def test_training_beats_center_guess(trained_cars):
    with criterion("200-sample training beats center guess by >= 30% in < 30 min"):
        model, log, elapsed, val = trained_cars
        truths = np.array([s.truth for s in val], dtype=float)
        center_mae = mae(np.full_like(truths, (64 + 1) / 2.0), truths)
        assert log.best_val_mae <= 0.7 * center_mae, (
            f"val {log.best_val_mae:.2f} vs center {center_mae:.2f}")
        assert elapsed < 30 * 60


# --- ordering reproduction ---------------------------------------------------

def test_ordering_cars_scenario(desk_manifest, cars_scenario, trained_cars):
    with criterion("Cars mismatch: network and heat map beat both kNN variants"):
        model = trained_cars[0]
        knn_best, _ = grid_search(desk_manifest, cars_scenario, "knn",
                                  [{"k": k} for k in (1, 2, 4, 8, 16, 32, 64)], seed=0)
        aknn_best, _ = grid_search(desk_manifest, cars_scenario, "aknn",
                                   [{"alpha": a, "kmax": m} for a in (1.05, 1.1, 1.25, 1.5)
                                    for m in (8, 16, 32)], seed=0)
        sigma_best, _ = grid_search(desk_manifest, cars_scenario, "heatmap",
                                    [{"sigma": s} for s in (0.01, 0.02, 0.05, 0.1, 0.2)], seed=0)
        prepared = prepare_eval(desk_manifest, cars_scenario, seed=0, split="test")
        scores = {}
        for method, params in (("knn", knn_best), ("aknn", aknn_best),
                               ("heatmap", sigma_best), ("locunet", {})):
            errors, _, _ = evaluate_method(prepared, method, cars_scenario, params, model)
            scores[method] = float(np.mean(errors))
        print(f"  cars-scenario MAE: {scores}")
        assert scores["locunet"] < scores["knn"] and scores["locunet"] < scores["aknn"]
        assert scores["heatmap"] < scores["knn"] and scores["heatmap"] < scores["aknn"]


def test_ordering_matched_scenario_vs_toa(desk_manifest):
    with criterion("Matched scenario: heat map beats every implemented ToA method"):
        scenario = Scenario.preset("SIM-DPM")
        sigma_best, _ = grid_search(desk_manifest, scenario, "heatmap",
                                    [{"sigma": s} for s in (0.01, 0.02, 0.05, 0.1, 0.2)], seed=0)
        prepared = prepare_eval(desk_manifest, scenario, seed=0, split="test")
        scores = {}
        for method in ("heatmap", "pocs", "gtrs", "mcc"):
            params = sigma_best if method == "heatmap" else None
            errors, _, _ = evaluate_method(prepared, method, scenario, params)
            scores[method] = float(np.mean(errors))
        print(f"  matched-scenario MAE: {scores}")
        for toa_method in ("pocs", "gtrs", "mcc"):
            assert scores["heatmap"] < scores[toa_method]


# --- lateration failure mode -------------------------------------------------

def test_lateration_failure_mode():
    with criterion("Urban lateration error >= 2x the obstacle-free error (50 pairs)"):
        params = dpm.SimParams()
        rng = np.random.default_rng(11)
        urban_errors, empty_errors = [], []
        pairs = 0
        seed = 0
        while pairs < 50:
            seed += 1
            city = generate_city_map(seed, 64, 10)
            pts = place_points(city, 5, seed=seed + 1000)
            bs, ue = pts[:4], pts[4]
            sv = np.linalg.svd(np.array(bs, float) - np.mean(bs, axis=0), compute_uv=False)
            if sv[1] < 0.1 * sv[0]:
                continue
            open_city = empty_city(64)
            for kind, scene_city in (("urban", city), ("empty", open_city)):
                maps = [dpm.simulate_radio_map(scene_city, tx, params) for tx in bs]
                p_gray = np.array([m.gray[ue[1] - 1, ue[0] - 1] for m in maps])
                sample = Sample(city=scene_city, bs=bs, radio_maps_est=maps,
                                p_meas=p_gray, truth=ue)
                rep = rss_log_distance_localize(sample, params)
                err = float(np.linalg.norm(np.array(rep.estimate) - np.array(ue, float)))
                (urban_errors if kind == "urban" else empty_errors).append(err)
            pairs += 1
        mean_urban = float(np.mean(urban_errors))
        mean_empty = float(np.mean(empty_errors))
        print(f"  lateration MAE: urban {mean_urban:.2f} px vs obstacle-free {mean_empty:.2f} px")
        assert mean_urban >= 2.0 * mean_empty
