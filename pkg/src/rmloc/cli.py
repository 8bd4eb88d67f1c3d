"""Command line entry points (``rmloc <subcommand>``)."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import dpm, scene
from .bench import METHOD_DEFAULTS, Scenario, parse_csv, report, run_scenario, write_report
from .dataset import DatasetConfig, build_dataset, load_manifest


def _parse_xy(text: str):
    x, y = text.split(",")
    return int(x), int(y)


def cmd_gen_maps(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.maps):
        city = scene.generate_city_map(args.seed + i, args.size, args.buildings)
        path = os.path.join(args.out, f"city_{i:03d}.png")
        scene.save_city_png(city, path)
        print(path)
    return 0


def cmd_make_dataset(args) -> int:
    config = DatasetConfig.from_json(args.config)
    manifest = build_dataset(config)
    print(os.path.join(manifest.root, "manifest.json"))
    return 0


def cmd_simulate(args) -> int:
    city = scene.load_city_png(args.map)
    params = dpm.SimParams() if args.model == "base" else dpm.SimParams.perturbed()
    field = dpm.dominant_path(city, args.tx)
    out = args.out or os.path.splitext(args.map)[0] + f"_tx{args.tx[0]}_{args.tx[1]}"
    dpm.save_radio_map(dpm.radio_map_from_field(field, params), params, out + ".png")
    dpm.save_toa_map(dpm.toa_from_field(field), out + ".toa")
    print(out + ".png")
    return 0


def cmd_train(args) -> int:
    from .locnet import LocNetConfig
    from .train import TrainConfig, locnet_train

    with open(args.config) as f:
        cfg = json.load(f)
    manifest = load_manifest(os.path.join(cfg["dataset"], "manifest.json"))
    scenario = Scenario.preset(cfg.get("scenario", "SIM-DPM"))
    train_keys = ("epochs", "batch_size", "lr", "lr_drop_epoch", "lr_drop_factor", "seed")
    train_cfg = TrainConfig(out_dir=args.out, **{k: cfg[k] for k in train_keys if k in cfg})
    model_cfg = LocNetConfig.from_dict(cfg["model"]) if "model" in cfg else None
    _, log = locnet_train(manifest, train_cfg, model_config=model_cfg, scenario=scenario,
                          sample_seed=cfg.get("sample_seed", 0),
                          ues_per_scene=cfg.get("ues_per_scene"))
    print(f"best val MAE {log.best_val_mae:.3f} px at epoch {log.best_epoch}")
    print(os.path.join(args.out, "model.pt"))
    return 0


def _method_params(args) -> dict:
    params = {}
    if args.k is not None:
        params.setdefault("knn", {})["k"] = args.k
    if args.alpha is not None:
        params.setdefault("aknn", {})["alpha"] = args.alpha
    if args.kmax is not None:
        params.setdefault("aknn", {})["kmax"] = args.kmax
    if args.sigma is not None:
        params.setdefault("heatmap", {})["sigma"] = args.sigma
    if args.sigma_m is not None:
        params.setdefault("mcc", {})["sigma_m"] = args.sigma_m
    return params


def _run_and_report(args, methods) -> int:
    manifest = load_manifest(os.path.join(args.dataset, "manifest.json"))
    scenario = Scenario.preset(args.scenario)
    rows = run_scenario(scenario, manifest, methods, seed=args.seed, out_dir=args.out,
                        checkpoint=args.checkpoint, method_params=_method_params(args))
    if args.out:
        write_report(rows, args.out)
    print(report(rows, "text"))
    return 0


def cmd_eval(args) -> int:
    return _run_and_report(args, [args.method])


def cmd_run_scenario(args) -> int:
    return _run_and_report(args, [m.strip() for m in args.methods.split(",") if m.strip()])


def cmd_report(args) -> int:
    with open(args.results) as f:
        rows = parse_csv(f.read())
    print(report(rows, args.format))
    return 0


def _add_eval_flags(p) -> None:
    p.add_argument("--dataset", required=True)
    p.add_argument("--scenario", default="SIM-DPM", choices=["SIM-DPM", "SIM-DPM2IRT", "SIM-DPM2IRT-CARS"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--checkpoint")
    p.add_argument("--k", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--kmax", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--sigma-m", dest="sigma_m", type=float)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rmloc", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen-maps", help="generate city map PNGs")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--maps", type=int, default=1)
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--buildings", type=int, default=8)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_maps)

    d = sub.add_parser("make-dataset", help="build a dataset from a JSON config")
    d.add_argument("--config", required=True)
    d.set_defaults(fn=cmd_make_dataset)

    s = sub.add_parser("simulate", help="simulate one radio/ToA map")
    s.add_argument("--map", required=True)
    s.add_argument("--tx", type=_parse_xy, required=True, metavar="X,Y")
    s.add_argument("--model", choices=["base", "perturbed"], default="base")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_simulate)

    t = sub.add_parser("train", help="train the localization network")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate one method on a scenario")
    e.add_argument("--method", required=True, choices=sorted(METHOD_DEFAULTS))
    _add_eval_flags(e)
    e.set_defaults(fn=cmd_eval)

    r = sub.add_parser("run-scenario", help="evaluate several methods on a scenario")
    r.add_argument("--methods", required=True, help="comma-separated method names")
    _add_eval_flags(r)
    r.set_defaults(fn=cmd_run_scenario)

    rp = sub.add_parser("report", help="render a results.csv")
    rp.add_argument("--results", required=True)
    rp.add_argument("--format", default="text", choices=["text", "csv", "markdown"])
    rp.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as e:  # nonzero exit on any method/build failure
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
