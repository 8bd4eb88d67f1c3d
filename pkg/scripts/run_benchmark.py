"""End-to-end benchmark: tune baselines on validation, train the network per
scenario, evaluate everything on the shared test set, write tables."""

import argparse
import os

from rmloc.bench import Scenario, grid_search, report, run_scenario, write_report
from rmloc.dataset import DatasetConfig, build_dataset, load_manifest
from rmloc.locnet import LocNetConfig
from rmloc.train import TrainConfig, locnet_train

BASELINES = ["knn", "aknn", "heatmap", "pocs", "gtrs", "mcc", "rss-lateration"]

KNN_GRID = [{"k": k} for k in (1, 2, 4, 8, 16, 32, 64)]
AKNN_GRID = [{"alpha": a, "kmax": m} for a in (1.05, 1.1, 1.25, 1.5) for m in (8, 16, 32)]
SIGMA_GRID = [{"sigma": s} for s in (0.01, 0.02, 0.05, 0.1, 0.2)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dataset", default="data/desk")
    ap.add_argument("--out", default="results")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--ues-per-scene", type=int, default=None)
    ap.add_argument("--skip-train", action="store_true", help="baselines only")
    ap.add_argument("--scenarios", default="SIM-DPM,SIM-DPM2IRT,SIM-DPM2IRT-CARS")
    args = ap.parse_args()

    manifest_path = os.path.join(args.dataset, "manifest.json")
    if not os.path.exists(manifest_path):
        print(f"building dataset at {args.dataset}")
        n = 20
        build_dataset(DatasetConfig(out_dir=args.dataset, maps=n, split_counts=(14, 3, 3)))
    manifest = load_manifest(manifest_path)

    all_rows = []
    for name in args.scenarios.split(","):
        scenario = Scenario.preset(name)
        print(f"--- {name}: tuning on validation split")
        params = {}
        for method, grid in (("knn", KNN_GRID), ("aknn", AKNN_GRID), ("heatmap", SIGMA_GRID)):
            best, best_mae = grid_search(manifest, scenario, method, grid, seed=args.seed,
                                         ues_per_scene=args.ues_per_scene)
            params[method] = best
            print(f"    {method}: {best} (val MAE {best_mae:.2f} m)")
        methods = list(BASELINES)
        checkpoint = None
        if not args.skip_train:
            print(f"--- {name}: training the network")
            run_dir = os.path.join(args.out, f"train_{name.lower().replace('-', '_')}")
            cfg = TrainConfig(epochs=args.epochs, seed=args.seed, out_dir=run_dir)
            model_cfg = LocNetConfig(n_px=manifest.size_px, n_bs=len(manifest.scenes[0].bs),
                                     seed=args.seed)
            model, log = locnet_train(manifest, cfg, model_config=model_cfg, scenario=scenario,
                                      sample_seed=args.seed, ues_per_scene=args.ues_per_scene)
            print(f"    best val MAE {log.best_val_mae:.2f} px at epoch {log.best_epoch}")
            checkpoint = model
            methods = methods + ["locunet"]
        print(f"--- {name}: evaluating on the test split")
        rows = run_scenario(scenario, manifest, methods, seed=args.seed, out_dir=args.out,
                            checkpoint=checkpoint, method_params=params,
                            ues_per_scene=args.ues_per_scene)
        all_rows += rows
    write_report(all_rows, args.out)
    print(report(all_rows, "text"))
    print(f"results written to {args.out}/results.csv and {args.out}/tables.md")


if __name__ == "__main__":
    main()
