# ** Base Modules
import os

import numpy as np
import pytest

# ** App Modules
from app.config import settings
from app.exceptions.custom_exceptions import ConfigError, StateError
from app.exceptions.training_exceptions import DivergenceError
from app.helpers.files import read_jsonl, read_yaml
from app.schemas.run_config import RunConfig, TTAConfig
from app.services.asn import trainer as trainer_module
from app.services.asn.gradcheck import toy_config
from app.services.asn.losses import LossTerms
from app.services.asn.prediction import evaluate_records
from app.services.asn.trainer import LAST_CHECKPOINT, METRICS_FILE, Trainer, train
from app.services.dataset.synth import resolve_profile, synth_generate, write_dataset
from app.services.metrics import scores
from app.services.metrics.report import build_report
from app.services.tensor.checkpoint import load_arrays, read_meta
from app.services.tensor.tensor import Tensor


def run_config(output_dir, root, **sections):
    data = {
        "model": toy_config(num_classes=3, input_channels=3).model_dump(mode="json"),
        "data": {"root": root, "crop": 16, "batch_size": 2, "max_train": 4},
        "training": {"base_epochs": 2, "atl_epochs": 1},
        "output_dir": str(output_dir),
        "seed": 11,
    }
    for section, values in sections.items():
        data[section] = {**data.get(section, {}), **values} if isinstance(values, dict) else values
    return RunConfig.parse(data)


def losses(steps, stage=None, epoch=None):
    return [step["loss"] for step in steps
            if (stage is None or step["stage"] == stage) and (epoch is None or step["epoch"] == epoch)]


def test_two_stage_run_writes_its_artifacts(tmp_path, toy_dataset):
    config = run_config(tmp_path / "run", toy_dataset.root)
    result = train(config, manifest=toy_dataset)
    run_dir = config.output_dir
    assert set(result.reports) == {"base_epoch0", "base_epoch1", "atl_epoch0"}
    assert os.path.exists(os.path.join(run_dir, "checkpoints", "atl_epoch0.ckpt"))
    assert read_meta(os.path.join(run_dir, "checkpoints", LAST_CHECKPOINT))["stage"] == "atl"
    assert os.path.exists(os.path.join(run_dir, "reports", "base_epoch1.json"))
    assert os.path.exists(os.path.join(run_dir, "train.log"))
    assert read_yaml(os.path.join(run_dir, "config.yaml"))["seed"] == 11

    records = read_jsonl(os.path.join(run_dir, METRICS_FILE))
    train_records = [record for record in records if record["kind"] == "train"]
    assert len(train_records) == 3 * 2
    assert [record["step"] for record in train_records if record["stage"] == "atl"] == [0, 1]
    assert all(np.isfinite(record["loss"]) for record in train_records)
    assert train_records[0]["lr"] == pytest.approx(config.optimizer.base_lr)
    assert sum(record["kind"] == "validation" for record in records) == 3


def test_atl_stage_leaves_the_backbone_untouched(tmp_path, toy_dataset):
    config = run_config(tmp_path / "run", toy_dataset.root)
    trainer = Trainer(config, toy_dataset)
    trainer.fit()
    base, _ = load_arrays(os.path.join(config.output_dir, "checkpoints", "base_epoch1.ckpt"))
    final = trainer.model.state_dict()
    for name, value in base.items():
        if name.startswith(("psi1.", "psi2.")):
            continue
        np.testing.assert_array_equal(value, final[name], err_msg=name)
    assert any(not np.array_equal(base[name], final[name]) for name in base if name.startswith("psi"))


def test_resume_reproduces_the_uninterrupted_run(tmp_path, toy_dataset):
    straight = train(run_config(tmp_path / "straight", toy_dataset.root), "base", manifest=toy_dataset)

    config = run_config(tmp_path / "resumed", toy_dataset.root)
    train(config, "base", manifest=toy_dataset)
    checkpoint = os.path.join(config.output_dir, "checkpoints", "base_epoch0.ckpt")
    resumed = Trainer(config, toy_dataset).fit("base", resume=checkpoint)

    assert losses(resumed.steps) == pytest.approx(losses(straight.steps, "base", 1), rel=1e-12)
    records = read_jsonl(os.path.join(config.output_dir, METRICS_FILE))
    assert [record["epoch"] for record in records if record["kind"] == "train"] == [0, 0, 1, 1]


def test_atl_only_needs_a_base_checkpoint(tmp_path, toy_dataset):
    config = run_config(tmp_path / "run", toy_dataset.root, training={"base_epochs": 1})
    with pytest.raises(StateError):
        Trainer(config, toy_dataset).fit("atl")
    train(config, "base", manifest=toy_dataset)
    base = os.path.join(config.output_dir, "checkpoints", "base_epoch0.ckpt")
    result = Trainer(config, toy_dataset).fit("atl", init_checkpoint=base)
    assert set(result.reports) == {"atl_epoch0"}


def test_checkpoint_from_another_model_is_rejected(tmp_path, toy_dataset):
    config = run_config(tmp_path / "run", toy_dataset.root, training={"base_epochs": 1})
    train(config, "base", manifest=toy_dataset)
    wider = run_config(tmp_path / "other", toy_dataset.root,
                       model=toy_config(num_classes=3, input_channels=3, pair_width=8).model_dump(mode="json"))
    with pytest.raises(ConfigError):
        Trainer(wider, toy_dataset).fit(
            "atl", init_checkpoint=os.path.join(config.output_dir, "checkpoints", "base_epoch0.ckpt"))


def test_incompatible_setups_are_config_errors(tmp_path, toy_dataset):
    with pytest.raises(ConfigError):
        Trainer(run_config(tmp_path, toy_dataset.root, data={"crop": 18}), toy_dataset)
    four_classes = toy_config(num_classes=4, input_channels=3).model_dump(mode="json")
    with pytest.raises(ConfigError):
        Trainer(run_config(tmp_path, toy_dataset.root, model=four_classes), toy_dataset)


def test_non_finite_loss_stops_training(tmp_path, toy_dataset, monkeypatch):
    def exploding(outputs, gt, alpha, beta):
        return LossTerms(Tensor(np.array(np.nan), requires_grad=True), np.nan, np.nan, np.nan)

    monkeypatch.setattr(trainer_module, "loss", exploding)
    with pytest.raises(DivergenceError) as error:
        train(run_config(tmp_path / "run", toy_dataset.root), manifest=toy_dataset)
    assert error.value.exit_code == 3
    assert error.value.data["step"] == 0


def test_overrides_reach_the_run_config(tmp_path):
    config = RunConfig.load(overrides=["training.base_epochs=3", "tta.flip=true", f"output_dir={tmp_path}"])
    assert config.training.base_epochs == 3
    assert config.tta.flip is True
    with pytest.raises(ConfigError):
        RunConfig.load(overrides=["training.base_epochs"])
    with pytest.raises(ConfigError):
        RunConfig.load(overrides=["training.unknown=1"])
    assert TTAConfig.from_flag("ms,flip").scales == [0.5, 0.75, 1.0, 1.25, 1.5, 1.75]
    with pytest.raises(ConfigError):
        TTAConfig.from_flag("rotate")


def test_same_seed_trains_identical_weights(tmp_path, toy_dataset):
    states = []
    for name in ("first", "second"):
        config = run_config(tmp_path / name, toy_dataset.root, training={"base_epochs": 5, "atl_epochs": 0})
        trainer = Trainer(config, toy_dataset)
        result = trainer.fit("base")
        assert len(result.steps) == 10
        states.append(trainer.model.state_dict())
    assert states[0].keys() == states[1].keys()
    for name in states[0]:
        assert np.array_equal(states[0][name], states[1][name]), name


def test_model_seed_follows_the_run_seed(monkeypatch):
    assert RunConfig.parse({"seed": 7}).model.seed == 7
    assert RunConfig.parse({"seed": 7, "model": {"num_classes": 3}}).model.seed == 7
    assert RunConfig.parse({"seed": 7, "model": {"seed": 3}}).model.seed == 3
    assert RunConfig.load(overrides=["seed=4"]).model.seed == 4
    monkeypatch.setattr(settings, "SCD_SEED", 5)
    config = RunConfig.parse({})
    assert config.seed == 5 and config.model.seed == 5


TOY_CONFIG = os.path.join(os.path.dirname(__file__), os.pardir, "configs", "toy.yaml")
TOY_SEEDS = range(10)


def toy_run(tmp_path, seed):
    """250 synthetic 64x64 scenes (200 train / 50 test) and a run of configs/toy.yaml on them."""
    root = str(tmp_path / f"synth{seed}")
    profile = resolve_profile("balanced")
    records, stats = synth_generate(seed=seed, count=250, size=64, num_classes=4, profile=profile)
    manifest = write_dataset(root, records, stats, 4, profile, seed=seed)
    config = RunConfig.load(TOY_CONFIG, [f"data.root={root}", f"output_dir={tmp_path / f'run{seed}'}",
                                         f"seed={seed}"])
    trainer = Trainer(config, manifest)
    return trainer, trainer.fit()


@pytest.mark.slow
def test_toy_network_learns_the_synthetic_scenes(tmp_path):
    summaries = []
    for seed in TOY_SEEDS:
        trainer, result = toy_run(tmp_path, seed)
        base_name = f"base_epoch{trainer.epochs('base') - 1}"
        atl_name = f"atl_epoch{trainer.epochs('atl') - 1}"
        refined = result.reports[atl_name]
        intuitive = build_report(evaluate_records(trainer.model, trainer.test_records, trainer.index,
                                                  predictor="intuitive", use_atl=False),
                                 trainer.index)
        first, last = losses(result.steps, "base", 0), losses(result.steps, "base", trainer.epochs("base") - 1)
        assert np.mean(last) < np.mean(first), seed
        assert scores.sek(np.array(refined.counts)) == pytest.approx(refined.sek)
        summaries.append({"miou": refined.miou, "sek": refined.sek, "base_sek": result.reports[base_name].sek,
                          "intuitive_sek": intuitive.sek})

    assert np.mean([entry["miou"] for entry in summaries]) >= 0.80, summaries
    assert np.mean([entry["sek"] for entry in summaries]) >= 0.30, summaries
    assert sum(entry["sek"] > entry["intuitive_sek"] for entry in summaries) >= 8, summaries
    assert sum(entry["sek"] >= entry["base_sek"] for entry in summaries) >= 7, summaries
