"""Dataset building: scenes, per-BS radio/ToA maps and a JSON manifest."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import dpm
from .scene import BuildingBounds, CityMap, generate_city_map, load_city_png, place_points, save_city_png

SPLITS = ("train", "val", "test")


class DatasetBuildError(RuntimeError):
    pass


@dataclass
class DatasetConfig:
    out_dir: str
    maps: int = 20
    bs_per_map: int = 5
    ues_per_map: int = 50
    size_px: int = 64
    n_buildings: int = 8
    building_min_side: int = 4
    building_max_side: int = 12
    cell_m: float = 1.0
    seed: int = 0
    split_counts: tuple = (14, 3, 3)  # train/val/test scene counts

    def __post_init__(self):
        self.split_counts = tuple(int(c) for c in self.split_counts)
        if sum(self.split_counts) != self.maps:
            raise ValueError(
                f"split counts {self.split_counts} must sum to maps={self.maps}"
            )

    @classmethod
    def from_json(cls, path) -> "DatasetConfig":
        with open(path) as f:
            return cls(**json.load(f))


@dataclass
class SceneRecord:
    id: int
    split: str
    city: str
    bs: list
    ues: list
    radio_maps: list
    toa_maps: list


@dataclass
class DatasetManifest:
    root: str
    seed: int
    size_px: int
    cell_m: float
    sim_params: dpm.SimParams
    scenes: list = field(default_factory=list)

    def scene_ids(self, split: str) -> list:
        return [s.id for s in self.scenes if s.split == split]

    def scenes_in(self, split: str) -> list:
        return [s for s in self.scenes if s.split == split]

    def path(self, rel: str) -> str:
        return os.path.join(self.root, rel)

    def load_city(self, rec: SceneRecord) -> CityMap:
        return load_city_png(self.path(rec.city), cell_m=self.cell_m)

    def load_toa_maps(self, rec: SceneRecord) -> list:
        return [dpm.load_toa_map(self.path(p)) for p in rec.toa_maps]

    def to_json_str(self) -> str:
        doc = {
            "seed": self.seed,
            "size_px": self.size_px,
            "cell_m": self.cell_m,
            "sim_params": self.sim_params.to_dict(),
            "scenes": [asdict(s) for s in self.scenes],
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    def verify_files_exist(self) -> None:
        for rec in self.scenes:
            for rel in [rec.city, *rec.radio_maps, *rec.toa_maps]:
                if not os.path.exists(self.path(rel)):
                    raise FileNotFoundError(self.path(rel))


def load_manifest(path) -> DatasetManifest:
    with open(path) as f:
        doc = json.load(f)
    scenes = [
        SceneRecord(
            id=s["id"], split=s["split"], city=s["city"],
            bs=[tuple(p) for p in s["bs"]], ues=[tuple(p) for p in s["ues"]],
            radio_maps=s["radio_maps"], toa_maps=s["toa_maps"],
        )
        for s in doc["scenes"]
    ]
    return DatasetManifest(
        root=os.path.dirname(os.path.abspath(path)),
        seed=doc["seed"], size_px=doc["size_px"], cell_m=doc["cell_m"],
        sim_params=dpm.SimParams.from_dict(doc["sim_params"]), scenes=scenes,
    )


def build_dataset(config: DatasetConfig, params: dpm.SimParams | None = None) -> DatasetManifest:
    """Generate scenes and write city/radio/ToA files plus manifest.json.

    Scenes are split by map, so no map appears in more than one split.
    Deterministic: the same config produces byte-identical files.
    """
    params = params or dpm.SimParams()
    os.makedirs(config.out_dir, exist_ok=True)
    bounds = BuildingBounds(config.building_min_side, config.building_max_side)
    # 3 independent seed words per scene: map layout, BS placement, UE placement
    seed_words = np.random.SeedSequence(config.seed).generate_state(3 * config.maps)
    split_of = []
    for name, count in zip(SPLITS, config.split_counts):
        split_of += [name] * count

    manifest = DatasetManifest(
        root=os.path.abspath(config.out_dir),
        seed=config.seed, size_px=config.size_px, cell_m=config.cell_m,
        sim_params=params,
    )
    for i in range(config.maps):
        try:
            city = generate_city_map(
                int(seed_words[3 * i]), config.size_px, config.n_buildings,
                bounds=bounds, cell_m=config.cell_m,
            )
            bs = place_points(city, config.bs_per_map, int(seed_words[3 * i + 1]))
            ues = place_points(city, config.ues_per_map, int(seed_words[3 * i + 2]))
            city_rel = f"city_{i:03d}.png"
            save_city_png(city, os.path.join(config.out_dir, city_rel))
            radio_rels, toa_rels = [], []
            for j, tx in enumerate(bs):
                pf = dpm.dominant_path(city, tx)
                rmap = dpm.radio_map_from_field(pf, params)
                radio_rel = f"radio_s{i:03d}_b{j}.png"
                dpm.save_radio_map(rmap, params, os.path.join(config.out_dir, radio_rel))
                toa_rel = f"toa_s{i:03d}_b{j}.toa"
                dpm.save_toa_map(dpm.toa_from_field(pf), os.path.join(config.out_dir, toa_rel))
                radio_rels.append(radio_rel)
                toa_rels.append(toa_rel)
        except Exception as e:
            raise DatasetBuildError(f"scene {i} failed: {e}") from e
        manifest.scenes.append(
            SceneRecord(
                id=i, split=split_of[i], city=city_rel, bs=bs, ues=ues,
                radio_maps=radio_rels, toa_maps=toa_rels,
            )
        )
    with open(os.path.join(config.out_dir, "manifest.json"), "w") as f:
        f.write(manifest.to_json_str())
    manifest.verify_files_exist()
    return manifest
