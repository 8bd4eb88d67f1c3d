"""Training loop for the localization network (MAE loss on positions)."""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .heatmap import encode_inputs, mae
from .locnet import LocNet, LocNetConfig, save_checkpoint


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 15
    lr: float = 3e-4
    lr_drop_epoch: int = 30   # lr divided by lr_drop_factor for epochs beyond this
    lr_drop_factor: float = 10.0
    # per-batch random grid symmetry (rotations/flips) each epoch; the
    # propagation geometry is equivariant under these, so transformed
    # samples match what the simulator produces on transformed cities
    augment_dihedral: bool = True
    seed: int = 0
    out_dir: str | None = None

    @classmethod
    def full_scale(cls, **overrides) -> "TrainConfig":
        """Schedule tuned for large grids and datasets (lower initial lr)."""
        return cls(**{"lr": 1e-5, "augment_dihedral": False, **overrides})


def dihedral_stack(x: torch.Tensor, g: int) -> torch.Tensor:
    """Apply grid symmetry g in 0..7 (k quarter turns, then optional x-flip)."""
    out = torch.rot90(x, k=g % 4, dims=(-2, -1))
    if g >= 4:
        out = torch.flip(out, dims=(-1,))
    return out


def dihedral_xy(xy: torch.Tensor, g: int, n: int) -> torch.Tensor:
    """Transform 1-indexed (x, y) coordinates consistently with dihedral_stack."""
    x, y = xy[..., 0], xy[..., 1]
    for _ in range(g % 4):
        x, y = y, n + 1 - x  # one quarter turn
    if g >= 4:
        x = n + 1 - x
    return torch.stack([x, y], dim=-1)


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)  # (epoch, lr, train_mae, val_mae)
    best_epoch: int = 0
    best_val_mae: float = float("inf")

    def to_csv(self) -> str:
        lines = ["epoch,lr,train_mae,val_mae"]
        for epoch, lr, tr, va in self.rows:
            lines.append(f"{epoch},{lr!r},{tr!r},{va!r}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_csv())


def samples_to_tensors(samples, dtype=torch.float32):
    x = torch.stack([torch.as_tensor(encode_inputs(s), dtype=dtype) for s in samples])
    t = torch.tensor([s.truth for s in samples], dtype=dtype)
    return x, t


def evaluate_model(model: LocNet, samples, batch_size: int = 32) -> float:
    """Exact MAE (pixels) of the model over a sample list."""
    x, t = samples_to_tensors(samples, dtype=next(model.parameters()).dtype)
    model.eval()
    ests = []
    with torch.no_grad():
        for i in range(0, len(x), batch_size):
            ests.append(model(x[i : i + batch_size])[1])
    return mae(torch.cat(ests).numpy(), t.numpy())


def fit(model: LocNet, train_samples, val_samples, config: TrainConfig) -> TrainLog:
    """Train in place; restores and returns the lowest-validation-MAE weights.

    The loss is the batch-mean Euclidean distance between estimate and
    truth. Shuffling, initialization and optimization are all seeded, so a
    fixed (samples, config) pair reproduces the log exactly.
    """
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    x_train, t_train = samples_to_tensors(train_samples)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    log = TrainLog()
    best_state = copy.deepcopy(model.state_dict())
    n = len(train_samples)
    for epoch in range(1, config.epochs + 1):
        lr = config.lr / config.lr_drop_factor if epoch > config.lr_drop_epoch else config.lr
        for group in opt.param_groups:
            group["lr"] = lr
        model.train()
        perm = rng.permutation(n)
        batch_maes = []
        for bi, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start : start + config.batch_size]
            xb, tb = x_train[idx], t_train[idx]
            if config.augment_dihedral:
                g = int(rng.integers(8))
                xb = dihedral_stack(xb, g)
                tb = dihedral_xy(tb, g, model.config.n_px)
            est = model(xb)[1]
            sq = ((est - tb) ** 2).sum(dim=1)
            loss = torch.sqrt(sq + 1e-12).mean()
            if not torch.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}, batch {bi}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            batch_maes.append(loss.item())
        train_mae = float(np.mean(batch_maes))
        val_mae = evaluate_model(model, val_samples)
        log.rows.append((epoch, lr, train_mae, val_mae))
        if val_mae < log.best_val_mae:
            log.best_val_mae = val_mae
            log.best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    model.eval()
    return log


def locnet_train(manifest, config: TrainConfig, model_config: LocNetConfig | None = None,
                 scenario=None, sample_seed: int = 0, ues_per_scene: int | None = None):
    """Train on a dataset manifest; returns (model, log).

    Samples come from the train/val splits under ``scenario`` (defaults to
    the matched-simulation scenario). Writes checkpoint and log CSV into
    ``config.out_dir`` when set.
    """
    from .bench import Scenario, make_samples

    scenario = scenario or Scenario.preset("SIM-DPM")
    train_samples = make_samples(manifest, scenario, "train", seed=sample_seed,
                                 ues_per_scene=ues_per_scene)
    val_samples = make_samples(manifest, scenario, "val", seed=sample_seed + 1,
                               ues_per_scene=ues_per_scene)
    if not train_samples or not val_samples:
        raise ValueError("manifest needs nonempty train and val splits")
    model_config = model_config or LocNetConfig(n_px=manifest.size_px,
                                                n_bs=len(manifest.scenes[0].bs),
                                                seed=config.seed)
    model = LocNet(model_config)
    log = fit(model, train_samples, val_samples, config)
    if config.out_dir:
        os.makedirs(config.out_dir, exist_ok=True)
        save_checkpoint(model, os.path.join(config.out_dir, "model"))
        log.save(os.path.join(config.out_dir, "train_log.csv"))
    return model, log
