import numpy as np
import pytest

from rmloc.bench import Scenario, make_samples
from rmloc.dataset import DatasetConfig, build_dataset
from rmloc.heatmap import Sample
from rmloc.locnet import LocNet, LocNetConfig
from rmloc.train import TrainConfig, TrainingDivergedError, evaluate_model, fit, locnet_train

SMALL_MODEL = LocNetConfig(n_px=32, n_bs=2, enc_widths=(4, 6, 8), bottleneck=12, seed=0)


@pytest.fixture(scope="module")
def tiny_manifest(tmp_path_factory):
    cfg = DatasetConfig(out_dir=str(tmp_path_factory.mktemp("ds")), maps=4, bs_per_map=2,
                        ues_per_map=4, size_px=32, n_buildings=4, building_min_side=3,
                        building_max_side=7, seed=1, split_counts=(2, 1, 1))
    return build_dataset(cfg)


@pytest.fixture(scope="module")
def tiny_samples(tiny_manifest):
    scenario = Scenario.preset("SIM-DPM")
    return (make_samples(tiny_manifest, scenario, "train", seed=0),
            make_samples(tiny_manifest, scenario, "val", seed=1))


def test_fit_logs_and_restores_best(tiny_samples):
    train, val = tiny_samples
    model = LocNet(SMALL_MODEL)
    log = fit(model, train, val, TrainConfig(epochs=3, batch_size=4, lr=1e-3, seed=0))
    assert len(log.rows) == 3
    assert log.best_val_mae == min(r[3] for r in log.rows)
    assert evaluate_model(model, val) == pytest.approx(log.best_val_mae, abs=1e-5)


def test_lr_schedule_drop_after_epoch_30(tiny_samples):
    train, val = tiny_samples
    model = LocNet(SMALL_MODEL)
    cfg = TrainConfig(epochs=32, batch_size=8, lr=1e-3, lr_drop_epoch=30, seed=0)
    log = fit(model, train[:2], val[:2], cfg)
    lrs = {epoch: lr for epoch, lr, _, _ in log.rows}
    assert lrs[30] == 1e-3
    assert lrs[31] == 1e-4
    assert lrs[32] == 1e-4


def test_training_log_deterministic(tiny_samples):
    train, val = tiny_samples
    logs = []
    for _ in range(2):
        model = LocNet(SMALL_MODEL)
        logs.append(fit(model, train, val, TrainConfig(epochs=2, batch_size=4, seed=7)).to_csv())
    assert logs[0] == logs[1]


def test_divergence_aborts_with_location(tiny_samples):
    train, val = tiny_samples
    poisoned = Sample(city=train[0].city, bs=train[0].bs,
                      radio_maps_est=train[0].radio_maps_est,
                      p_meas=train[0].p_meas, truth=train[0].truth)
    poisoned.p_meas = poisoned.p_meas * np.nan
    model = LocNet(SMALL_MODEL)
    with pytest.raises(TrainingDivergedError, match="epoch 1, batch 0"):
        fit(model, [poisoned], val, TrainConfig(epochs=1, batch_size=1, seed=0))


def test_locnet_train_from_manifest(tmp_path, tiny_manifest):
    cfg = TrainConfig(epochs=2, batch_size=4, seed=0, out_dir=str(tmp_path / "run"))
    model, log = locnet_train(tiny_manifest, cfg, model_config=SMALL_MODEL)
    assert (tmp_path / "run" / "model.pt").exists()
    assert (tmp_path / "run" / "model.json").exists()
    csv = (tmp_path / "run" / "train_log.csv").read_text()
    assert csv.splitlines()[0] == "epoch,lr,train_mae,val_mae"
    assert len(csv.splitlines()) == 3


def test_full_scale_schedule_flag():
    cfg = TrainConfig.full_scale()
    assert cfg.lr == 1e-5
    assert cfg.epochs == 50 and cfg.batch_size == 15 and cfg.lr_drop_epoch == 30


def test_dihedral_transforms_consistent(tiny_samples):
    import torch

    from rmloc import dpm
    from rmloc.heatmap import encode_inputs
    from rmloc.scene import generate_city_map
    from rmloc.train import dihedral_stack, dihedral_xy

    sample = tiny_samples[0][0]
    n = sample.city.size_px
    j = len(sample.bs)
    stack = torch.as_tensor(encode_inputs(sample))
    for g in range(8):
        moved = dihedral_stack(stack, g)
        coords = dihedral_xy(torch.tensor(sample.bs, dtype=torch.float64), g, n)
        for i in range(j):
            r, c = divmod(int(moved[2 * j + i].argmax()), n)
            assert (c + 1, r + 1) == (int(coords[i, 0]), int(coords[i, 1]))
    # identity element leaves everything alone
    assert torch.equal(dihedral_stack(stack, 0), stack)

    # propagation distances are equivariant under the same symmetry
    from rmloc.scene import place_points

    city = generate_city_map(5, 32, 4)
    tx = place_points(city, 1, seed=3)[0]
    base = torch.as_tensor(dpm.dominant_path(city, tx).dist_m)
    for g in (1, 4, 6):
        moved_city = city.copy()
        moved_city.buildings = dihedral_stack(torch.as_tensor(city.buildings), g).numpy()
        tx_g = dihedral_xy(torch.tensor([tx], dtype=torch.float64), g, 32)[0]
        moved_field = dpm.dominant_path(moved_city, (int(tx_g[0]), int(tx_g[1])))
        assert torch.allclose(dihedral_stack(base, g),
                              torch.as_tensor(moved_field.dist_m), atol=1e-9)
