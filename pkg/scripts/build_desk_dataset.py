"""Build the default desk-scale dataset (64 px, 20 maps, 5 BS, 50 UEs per map)."""

import argparse

from rmloc.dataset import DatasetConfig, build_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data/desk")
    ap.add_argument("--maps", type=int, default=20)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--bs", type=int, default=5)
    ap.add_argument("--ues", type=int, default=50)
    ap.add_argument("--buildings", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    n_val = max(1, args.maps // 7)
    n_test = max(1, args.maps // 5)
    config = DatasetConfig(
        out_dir=args.out, maps=args.maps, bs_per_map=args.bs, ues_per_map=args.ues,
        size_px=args.size, n_buildings=args.buildings, seed=args.seed,
        split_counts=(args.maps - n_val - n_test, n_val, n_test),
    )
    manifest = build_dataset(config)
    print(f"{len(manifest.scenes)} scenes -> {manifest.root}")
    for split in ("train", "val", "test"):
        print(f"  {split}: scenes {manifest.scene_ids(split)}")


if __name__ == "__main__":
    main()
