"""Scenario orchestration: mismatch setups, method evaluation, report tables.

A scenario separates the simulation parameters behind the radio maps the
localizers see (map source) from those behind the reported measurements
(measurement source). Every method is evaluated on identical samples:
same UEs, same noise draws.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import dpm, fingerprint, heatmap, ranging
from .dataset import DatasetManifest

SCENARIO_NAMES = ("SIM-DPM", "SIM-DPM2IRT", "SIM-DPM2IRT-CARS")


@dataclass
class Scenario:
    name: str
    map_source_params: dpm.SimParams
    meas_source_params: dpm.SimParams
    cars: int = 0
    map_noise_gray: float = 0.01
    meas_noise_db: float = 1.0
    toa_noise_s: float = 1.0 / dpm.SPEED_OF_LIGHT  # ~1 m of ranging noise

    def __post_init__(self):
        if self.name not in SCENARIO_NAMES:
            raise ValueError(f"unknown scenario {self.name!r}, expected one of {SCENARIO_NAMES}")
        if self.name == "SIM-DPM":
            if self.map_source_params != self.meas_source_params or self.cars:
                raise ValueError("SIM-DPM requires identical sources and no cars")
        if self.name == "SIM-DPM2IRT-CARS" and self.cars <= 0:
            raise ValueError("SIM-DPM2IRT-CARS requires cars > 0")

    @classmethod
    def preset(cls, name: str, **overrides) -> "Scenario":
        base = dpm.SimParams()
        if name == "SIM-DPM":
            kw = dict(map_source_params=base, meas_source_params=dpm.SimParams())
        elif name == "SIM-DPM2IRT":
            kw = dict(map_source_params=base, meas_source_params=dpm.SimParams.perturbed())
        elif name == "SIM-DPM2IRT-CARS":
            kw = dict(map_source_params=base, meas_source_params=dpm.SimParams.perturbed(), cars=40)
        else:
            raise ValueError(f"unknown scenario {name!r}, expected one of {SCENARIO_NAMES}")
        kw.update(overrides)
        return cls(name=name, **kw)


def make_samples(manifest: DatasetManifest, scenario: Scenario, split: str, seed: int = 0,
                 ues_per_scene: int | None = None) -> list:
    """Assemble localization samples for one split under a scenario.

    Localizer-side maps are simulated with the map-source parameters plus
    per-scene gray noise; measurements come from measurement-source maps
    (with car obstacles in the cars scenario). Deterministic in seed.
    """
    samples = []
    for rec in manifest.scenes_in(split):
        for _, _, sample in _scene_samples(manifest, scenario, rec, seed, ues_per_scene):
            samples.append(sample)
    return samples


def _scene_samples(manifest, scenario, rec, seed, ues_per_scene):
    words = np.random.SeedSequence([seed, rec.id]).generate_state(2)
    city = manifest.load_city(rec)
    meas_city = dpm.perturb_scene(city, int(words[0]), scenario.cars) if scenario.cars else city
    noise_rng = np.random.default_rng(int(words[1]))
    maps_est, meas_maps = [], []
    for tx in rec.bs:
        base_field = dpm.dominant_path(city, tx)
        rmap = dpm.radio_map_from_field(base_field, scenario.map_source_params)
        if scenario.map_noise_gray > 0:
            g = np.clip(rmap.gray + noise_rng.normal(0.0, scenario.map_noise_gray, rmap.gray.shape), 0.0, 1.0)
            rmap = dpm.RadioMap(tx=rmap.tx, pl_db=dpm.gray_to_pathloss(g, scenario.map_source_params), gray=g)
        maps_est.append(rmap)
        meas_field = base_field if scenario.cars == 0 else dpm.dominant_path(meas_city, tx)
        meas_maps.append(dpm.radio_map_from_field(meas_field, scenario.meas_source_params))
    ues = rec.ues[:ues_per_scene] if ues_per_scene is not None else rec.ues
    meas_seeds = np.random.SeedSequence([seed, rec.id, 1]).generate_state(len(ues) * len(rec.bs))
    for u_idx, ue in enumerate(ues):
        p_gray = np.array([
            dpm.pathloss_to_gray(
                dpm.measure_rss(meas_maps[j], ue, scenario.meas_noise_db,
                                seed=int(meas_seeds[u_idx * len(rec.bs) + j])),
                scenario.map_source_params,
            )
            for j in range(len(rec.bs))
        ])
        yield rec.id, u_idx, heatmap.Sample(city=city, bs=list(rec.bs), radio_maps_est=maps_est,
                                            p_meas=p_gray, truth=ue)


@dataclass
class PreparedSample:
    scene_id: int
    ue_id: int
    sample: heatmap.Sample
    db: fingerprint.FingerprintDB
    toa_instance: ranging.RangingInstance


def prepare_eval(manifest: DatasetManifest, scenario: Scenario, seed: int = 0,
                 split: str = "test", ues_per_scene: int | None = None,
                 db_stride: int = 1) -> list:
    """Samples plus per-scene fingerprint DBs and per-sample ToA instances."""
    prepared = []
    for rec in manifest.scenes_in(split):
        db = None
        toa_maps = manifest.load_toa_maps(rec)
        toa_seeds = np.random.SeedSequence([seed, rec.id, 2]).generate_state(len(rec.ues))
        for scene_id, ue_id, sample in _scene_samples(manifest, scenario, rec, seed, ues_per_scene):
            if db is None:
                db = fingerprint.build_fingerprint_db(sample.radio_maps_est, sample.city, db_stride)
            inst = ranging.toa_to_instance(toa_maps, sample.truth, scenario.toa_noise_s,
                                           seed=int(toa_seeds[ue_id]))
            prepared.append(PreparedSample(scene_id, ue_id, sample, db, inst))
    return prepared


METHOD_DEFAULTS = {
    "knn": {"k": 16},
    "aknn": {"alpha": 1.1, "kmax": 16},
    "heatmap": {"sigma": 0.05},
    "locunet": {},
    "pocs": {"max_iter": 500, "tol_m": 1e-9},
    "gtrs": {"tol": 1e-9},
    "mcc": {"sigma_m": 5.0, "max_iter": 100, "tol_m": 1e-9},
    "rss-lateration": {},
}


def evaluate_method(prepared: list, method: str, scenario: Scenario,
                    params: dict | None = None, model=None):
    """Per-sample errors and runtimes of one method. Returns (errors_m, ms, summary)."""
    p = dict(METHOD_DEFAULTS[method], **(params or {}))
    cell = prepared[0].sample.city.cell_m
    errors, runtimes = [], []
    realized_ks = []
    if method == "locunet":
        if model is None:
            raise ValueError("locunet evaluation needs a loaded model")
        stacks = [heatmap.encode_inputs(ps.sample) for ps in prepared]
    for idx, ps in enumerate(prepared):
        truth_px = np.asarray(ps.sample.truth, dtype=float)
        t0 = time.perf_counter()
        if method == "knn":
            est_px = fingerprint.knn_localize(ps.db, ps.sample.p_meas, p["k"])
        elif method == "aknn":
            est_px, k_real = fingerprint.adaptive_knn_localize(ps.db, ps.sample.p_meas,
                                                               p["alpha"], p["kmax"])
            realized_ks.append(k_real)
        elif method == "heatmap":
            est_px = heatmap.analytic_localize(ps.sample, p["sigma"])
        elif method == "locunet":
            from .locnet import locnet_forward

            _, est_px = locnet_forward(model, stacks[idx])
        elif method == "pocs":
            est_m = ranging.pocs_localize(ps.toa_instance, p["max_iter"], p["tol_m"]).estimate
            est_px = (est_m[0] / cell, est_m[1] / cell)
        elif method == "gtrs":
            est_m = ranging.gtrs_bisection_localize(ps.toa_instance, p["tol"]).estimate
            est_px = (est_m[0] / cell, est_m[1] / cell)
        elif method == "mcc":
            est_m = ranging.correntropy_localize(ps.toa_instance, p["sigma_m"],
                                                 p["max_iter"], p["tol_m"]).estimate
            est_px = (est_m[0] / cell, est_m[1] / cell)
        elif method == "rss-lateration":
            est_m = ranging.rss_log_distance_localize(ps.sample, scenario.map_source_params).estimate
            est_px = (est_m[0] / cell, est_m[1] / cell)
        else:
            raise ValueError(f"unknown method {method!r}")
        runtimes.append((time.perf_counter() - t0) * 1e3)
        errors.append(float(np.linalg.norm(np.asarray(est_px) - truth_px)) * cell)
    summary = ",".join(f"{k}={v}" for k, v in sorted(p.items()))
    if method == "aknn":
        summary += f",avg_k={np.mean(realized_ks):.2f}"
    return errors, runtimes, summary


@dataclass
class ResultRow:
    scenario: str
    method: str
    params: str
    mae_m: float
    mean_runtime_ms: float
    n_samples: int


def run_scenario(scenario: Scenario, manifest: DatasetManifest, methods: list, seed: int = 0,
                 out_dir: str | None = None, checkpoint=None, method_params: dict | None = None,
                 split: str = "test", ues_per_scene: int | None = None) -> list:
    """Evaluate every requested method on identical scenario samples.

    Missing inputs (dataset files, locunet checkpoint) fail before any
    evaluation starts. Per-sample errors are persisted when out_dir is set.
    """
    manifest.verify_files_exist()
    model = None
    if "locunet" in methods:
        from .locnet import LocNet, load_checkpoint

        if checkpoint is None:
            raise ValueError("locunet requires a checkpoint")
        model = checkpoint if isinstance(checkpoint, LocNet) else load_checkpoint(checkpoint)
    method_params = method_params or {}
    prepared = prepare_eval(manifest, scenario, seed, split, ues_per_scene)
    rows, per_sample = [], []
    for method in methods:
        errors, runtimes, summary = evaluate_method(prepared, method, scenario,
                                                    method_params.get(method), model)
        rows.append(ResultRow(scenario.name, method, summary,
                              mae_m=float(np.mean(errors)),
                              mean_runtime_ms=float(np.mean(runtimes)),
                              n_samples=len(errors)))
        per_sample += [
            (ps.scene_id, ps.ue_id, method, err, rt)
            for ps, err, rt in zip(prepared, errors, runtimes)
        ]
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        tag = scenario.name.lower().replace("-", "_")
        with open(os.path.join(out_dir, f"errors_{tag}.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["scene_id", "ue_id", "method", "error_m", "runtime_ms"])
            for rec in per_sample:
                w.writerow([rec[0], rec[1], rec[2], repr(rec[3]), repr(rec[4])])
        provenance = {
            "scenario": scenario.name,
            "map_source_params": scenario.map_source_params.to_dict(),
            "meas_source_params": scenario.meas_source_params.to_dict(),
            "cars": scenario.cars,
            "map_noise_gray": scenario.map_noise_gray,
            "meas_noise_db": scenario.meas_noise_db,
            "split": split,
            "seed": seed,
            "samples": [{"scene_id": ps.scene_id, "ue_id": ps.ue_id} for ps in prepared],
        }
        with open(os.path.join(out_dir, f"samples_{tag}.json"), "w") as f:
            json.dump(provenance, f, indent=1, sort_keys=True)
    return rows


def grid_search(manifest: DatasetManifest, scenario: Scenario, method: str, grid: list,
                seed: int = 0, split: str = "val", ues_per_scene: int | None = None,
                model=None) -> tuple:
    """Coarse search over parameter dicts; returns (best_params, best_mae)."""
    prepared = prepare_eval(manifest, scenario, seed, split, ues_per_scene)
    best, best_mae = None, float("inf")
    for params in grid:
        errors, _, _ = evaluate_method(prepared, method, scenario, params, model)
        score = float(np.mean(errors))
        if score < best_mae:
            best, best_mae = params, score
    return best, best_mae


# --- Reporting ---

_CSV_FIELDS = ("scenario", "method", "params", "mae_m", "mean_runtime_ms", "n_samples")


def _grouped(rows):
    order = []
    for r in rows:
        if r.scenario not in order:
            order.append(r.scenario)
    return [(name, sorted((r for r in rows if r.scenario == name), key=lambda r: r.mae_m))
            for name in order]


def render_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(_CSV_FIELDS)
    for _, group in _grouped(rows):
        for r in group:
            w.writerow([r.scenario, r.method, r.params, repr(r.mae_m),
                        repr(r.mean_runtime_ms), r.n_samples])
    return buf.getvalue()


def parse_csv(text: str) -> list:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != _CSV_FIELDS:
        raise ValueError(f"unexpected results header {header}")
    return [
        ResultRow(rec[0], rec[1], rec[2], float(rec[3]), float(rec[4]), int(rec[5]))
        for rec in reader if rec
    ]


def render_markdown(rows) -> str:
    out = []
    for scenario, group in _grouped(rows):
        out.append(f"## {scenario}\n")
        out.append("| Method | Params | MAE (m) | Mean runtime (ms) | Samples |")
        out.append("|---|---|---|---|---|")
        for i, r in enumerate(group):
            name = f"**{r.method}**" if i == 0 else r.method
            out.append(f"| {name} | {r.params} | {r.mae_m:.3f} | {r.mean_runtime_ms:.3f} | {r.n_samples} |")
        out.append("")
    return "\n".join(out)


def render_text(rows) -> str:
    out = []
    for scenario, group in _grouped(rows):
        out.append(f"=== {scenario} ===")
        out.append(f"{'method':<16} {'mae_m':>10} {'ms':>10} {'n':>6}  params")
        for r in group:
            out.append(f"{r.method:<16} {r.mae_m:>10.3f} {r.mean_runtime_ms:>10.3f} {r.n_samples:>6}  {r.params}")
        out.append("")
    return "\n".join(out)


def report(rows, fmt: str = "text") -> str:
    """Render one table per scenario, methods sorted by MAE."""
    if not rows:
        raise ValueError("no result rows to report")
    renderers = {"text": render_text, "csv": render_csv, "markdown": render_markdown}
    if fmt not in renderers:
        raise ValueError(f"unknown format {fmt!r}")
    return renderers[fmt](rows)


def write_report(rows, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "results.csv"), "w") as f:
        f.write(render_csv(rows))
    with open(os.path.join(out_dir, "tables.md"), "w") as f:
        f.write(render_markdown(rows))
