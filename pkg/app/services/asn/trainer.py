# services/asn/trainer.py
"""
Two-stage training.

    base  all branches except the ATL heads, joint loss on the raw outputs
    atl   everything frozen but psi1/psi2, joint loss on the refined outputs
          with categorical weights from the training split

Run directory layout:

    <output_dir>/config.yaml              effective RunConfig
    <output_dir>/metrics.jsonl            one record per step and per validation
    <output_dir>/train.log                run-local log stream
    <output_dir>/checkpoints/<stage>_epoch<K>.ckpt, last.ckpt
    <output_dir>/reports/<stage>_epoch<K>.json
"""
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional

import numpy as np
from logzero import logger

from app.config import settings
from app.exceptions.custom_exceptions import ConfigError, StateError
from app.exceptions.training_exceptions import DivergenceError
from app.helpers.decorator import logged
from app.helpers.files import append_jsonl, read_jsonl, write_effective_config, write_jsonl
from app.helpers.logger import attach_run_log
from app.schemas.dataset import DatasetManifest, Split
from app.schemas.metrics import MetricReport
from app.schemas.run_config import RunConfig
from app.services.asn.atl import atl_forward
from app.services.asn.losses import GroundTruth, LossTerms, loss, scd_loss
from app.services.asn.model import AsymmetricSiameseNetwork, build_model
from app.services.asn.prediction import evaluate_records, to_batch
from app.services.dataset.augment import augment
from app.services.dataset.manifest import (
    categorical_weights,
    change_mask_histogram,
    iter_samples,
    label_histogram,
    load_manifest,
)
from app.services.dataset.records import SampleRecord
from app.services.metrics.confusion import ChangeTypeIndex
from app.services.metrics.report import build_report, imbalance_warning
from app.services.tensor.checkpoint import load_model, read_meta, save_model
from app.services.tensor.optim import SGD, reset_momentum
from app.services.tensor.tensor import no_grad

Stage = Literal["base", "atl"]
StageSelection = Literal["all", "base", "atl"]
STAGE_IDS = {"base": 0, "atl": 1}
METRICS_FILE = "metrics.jsonl"
LAST_CHECKPOINT = "last.ckpt"


@dataclass
class TrainResult:
    run_dir: str
    last_checkpoint: Optional[str] = None
    reports: Dict[str, MetricReport] = field(default_factory=dict)
    steps: List[Dict] = field(default_factory=list)


class Trainer:
    def __init__(self, config: RunConfig, manifest: Optional[DatasetManifest] = None,
                 model: Optional[AsymmetricSiameseNetwork] = None):
        self.config = config
        self.manifest = manifest or load_manifest(config.data.root)
        if self.manifest.num_classes != config.model.num_classes:
            raise ConfigError(
                f"model expects {config.model.num_classes} classes, dataset has {self.manifest.num_classes}"
            )
        if config.data.crop % config.model.stride_product:
            raise ConfigError(
                f"crop {config.data.crop} is not divisible by the encoder stride {config.model.stride_product}"
            )
        self.model = model or build_model(config.model)
        self.index = ChangeTypeIndex(config.model.num_classes)
        self.run_dir = config.output_dir
        self.metrics_path = os.path.join(self.run_dir, METRICS_FILE)
        self.checkpoint_dir = os.path.join(self.run_dir, "checkpoints")
        self.report_dir = os.path.join(self.run_dir, "reports")

        self.train_records = list(iter_samples(self.manifest, Split.TRAIN))[:config.data.max_train]
        self.test_records = list(iter_samples(self.manifest, Split.TEST))[:config.data.max_test]
        if not self.train_records:
            raise ConfigError(f"dataset {self.manifest.root} has no training samples")
        self.step = 0
        self.result = TrainResult(self.run_dir)

    # ------------------------------------------------------------------
    def epochs(self, stage: Stage) -> int:
        training = self.config.training
        return training.base_epochs if stage == "base" else training.atl_epochs

    def batches_per_epoch(self) -> int:
        return math.ceil(len(self.train_records) / self.config.data.batch_size)

    def optimizer(self, stage: Stage) -> SGD:
        total_steps = max(1, self.epochs(stage) * self.batches_per_epoch())
        config = self.config.optimizer.model_copy(update={"total_steps": total_steps})
        if stage == "atl":
            return SGD(self.model.atl_parameters(), config)
        atl_ids = {id(param) for param in self.model.atl_parameters()}
        return SGD([param for param in self.model.parameters() if id(param) not in atl_ids], config)

    def enter_stage(self, stage: Stage, fresh: bool) -> None:
        if stage == "atl":
            self.model.freeze_for_atl()
            if fresh:
                reset_momentum(self.model.atl_parameters())
            self.semantic_weights, self.change_weights = None, None
            if self.config.training.use_categorical_weights:
                self.semantic_weights = categorical_weights(
                    label_histogram(self.train_records, self.config.model.num_classes))
                self.change_weights = categorical_weights(change_mask_histogram(self.train_records))
                logger.info(f"ATL categorical weights: semantic={np.round(self.semantic_weights, 4).tolist()} "
                            f"change={np.round(self.change_weights, 4).tolist()}")
        else:
            self.model.set_trainable(True)
        logger.info(f"Entering {stage} stage ({self.epochs(stage)} epochs, {self.batches_per_epoch()} steps each)")

    # ------------------------------------------------------------------
    def batch_loss(self, stage: Stage, batch: List[SampleRecord]) -> LossTerms:
        model_config = self.config.model
        images1, images2 = to_batch(r.image1 for r in batch), to_batch(r.image2 for r in batch)
        gt = GroundTruth.from_labels(np.stack([r.label1 for r in batch]), np.stack([r.label2 for r in batch]))
        if stage == "base":
            return loss(self.model(images1, images2), gt, model_config.alpha, model_config.beta)
        with no_grad():
            outputs = self.model(images1, images2)
        refined = atl_forward(outputs.m1_raw, outputs.m2_raw, outputs.c_raw, model_config.gamma,
                              self.model.psi1, self.model.psi2)
        return scd_loss(refined.m1_raw, refined.m2_raw, refined.c_raw, gt, model_config.alpha, model_config.beta,
                        self.semantic_weights, self.change_weights)

    def run_epoch(self, stage: Stage, epoch: int, optimizer: SGD) -> None:
        data = self.config.data
        rng = np.random.default_rng([self.config.seed, STAGE_IDS[stage], epoch])
        order = rng.permutation(len(self.train_records))
        for start in range(0, len(order), data.batch_size):
            batch = [augment(self.train_records[i], rng, data.crop, data.scale_range, data.flip_probability)
                     for i in order[start:start + data.batch_size]]
            optimizer.zero_grad()
            terms = self.batch_loss(stage, batch)
            value = terms.total.item()
            if not np.isfinite(value):
                logger.error(f"Non-finite loss at {stage} epoch {epoch} step {self.step}: {terms.as_dict()}")
                raise DivergenceError(
                    f"loss became {value} at {stage} epoch {epoch}, step {self.step}",
                    data={"stage": stage, "epoch": epoch, "step": self.step, **terms.as_dict()},
                )
            terms.total.backward()
            lr = optimizer.step(self.step)
            record = {"kind": "train", "stage": stage, "epoch": epoch, "step": self.step, "lr": lr,
                      **terms.as_dict()}
            append_jsonl(self.metrics_path, record)
            self.result.steps.append(record)
            self.step += 1
        logger.info(f"{stage} epoch {epoch} done, last loss {self.result.steps[-1]['loss']:.5f}")

    def validate(self, stage: Stage, epoch: int) -> Optional[MetricReport]:
        if not self.test_records:
            logger.warning("No test samples, skipping validation")
            return None
        tta = self.config.tta
        matrix = evaluate_records(self.model, self.test_records, self.index, tta.scales, tta.flip,
                                  self.config.training.predictor, use_atl=stage == "atl",
                                  workers=settings.SCD_WORKERS)
        report = build_report(matrix, self.index, self.manifest.class_names)
        warning = imbalance_warning(report)
        if warning:
            logger.warning(warning)
        os.makedirs(self.report_dir, exist_ok=True)
        name = f"{stage}_epoch{epoch}"
        with open(os.path.join(self.report_dir, f"{name}.json"), "w") as handle:
            handle.write(report.to_json())
        append_jsonl(self.metrics_path, {"kind": "validation", "stage": stage, "epoch": epoch, "step": self.step,
                                         "oa": report.oa, "miou": report.miou, "sek": report.sek})
        self.result.reports[name] = report
        return report

    def save_checkpoint(self, stage: Stage, epoch: int) -> str:
        os.makedirs(self.checkpoint_dir, exist_ok=True)
        meta = {"stage": stage, "epoch": epoch, "step": self.step, "seed": self.config.seed,
                "model": self.config.model.model_dump(mode="json")}
        path = os.path.join(self.checkpoint_dir, f"{stage}_epoch{epoch}.ckpt")
        save_model(path, self.model, meta)
        save_model(os.path.join(self.checkpoint_dir, LAST_CHECKPOINT), self.model, meta)
        self.result.last_checkpoint = path
        return path

    # ------------------------------------------------------------------
    def check_compatible(self, meta: Dict, path: str) -> None:
        if meta.get("model") != self.config.model.model_dump(mode="json"):
            raise ConfigError(f"checkpoint {path} was written for a different model config")

    def restore(self, path: str) -> Dict:
        """Load weights, momentum and position; drop log records written after the checkpoint."""
        self.check_compatible(read_meta(path), path)
        meta = load_model(path, self.model)
        position = (STAGE_IDS[meta["stage"]], meta["epoch"])
        kept = [record for record in read_jsonl(self.metrics_path)
                if (STAGE_IDS[record["stage"]], record["epoch"]) <= position]
        write_jsonl(self.metrics_path, kept)
        logger.info(f"Resuming after {meta['stage']} epoch {meta['epoch']} (step {meta['step']})")
        return meta

    def plan(self, selection: StageSelection) -> List[Stage]:
        return {"all": ["base", "atl"], "base": ["base"], "atl": ["atl"]}[selection]

    @logged("training")
    def fit(self, selection: StageSelection = "all", resume: Optional[str] = None,
            init_checkpoint: Optional[str] = None) -> TrainResult:
        os.makedirs(self.run_dir, exist_ok=True)
        attach_run_log(self.run_dir)
        write_effective_config(self.run_dir, self.config.model_dump(mode="json"))

        meta = None
        if resume:
            meta = self.restore(resume)
        elif init_checkpoint:
            self.check_compatible(read_meta(init_checkpoint), init_checkpoint)
            load_model(init_checkpoint, self.model)
        elif selection == "atl":
            raise StateError("the ATL stage needs a base checkpoint (--checkpoint or --resume)")
        if not resume and os.path.exists(self.metrics_path):
            os.remove(self.metrics_path)

        for stage in self.plan(selection):
            first_epoch = 0
            if meta is not None:
                if STAGE_IDS[stage] < STAGE_IDS[meta["stage"]]:
                    continue
                if stage == meta["stage"]:
                    first_epoch, self.step = meta["epoch"] + 1, meta["step"]
                else:
                    self.step = 0
            else:
                self.step = 0
            self.enter_stage(stage, fresh=first_epoch == 0)
            optimizer = self.optimizer(stage)
            last_epoch = self.epochs(stage) - 1
            for epoch in range(first_epoch, self.epochs(stage)):
                self.run_epoch(stage, epoch, optimizer)
                if epoch % self.config.training.validate_every == 0 or epoch == last_epoch:
                    self.validate(stage, epoch)
                if epoch % self.config.training.checkpoint_every == 0 or epoch == last_epoch:
                    self.save_checkpoint(stage, epoch)
        logger.info(f"Training finished in {self.run_dir}")
        return self.result


def train(config: RunConfig, selection: StageSelection = "all", resume: Optional[str] = None,
          init_checkpoint: Optional[str] = None, manifest: Optional[DatasetManifest] = None) -> TrainResult:
    return Trainer(config, manifest).fit(selection, resume, init_checkpoint)
