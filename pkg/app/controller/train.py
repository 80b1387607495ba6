# controller/train.py
import os

import click
from logzero import logger

from app.exceptions.custom_exceptions import StateError
from app.helpers.decorator import command
from app.schemas.run_config import RunConfig
from app.services.asn.trainer import LAST_CHECKPOINT, train


@click.command("train")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="RunConfig YAML file.")
@click.option("--stage", type=click.Choice(["all", "base", "atl"]), default="all", show_default=True)
@click.option("--resume", is_flag=True, help="Continue from <output_dir>/checkpoints/last.ckpt.")
@click.option("--checkpoint", type=click.Path(dir_okay=False), help="Initial weights, e.g. a base checkpoint for --stage atl.")
@click.option("--output-dir", help="Overrides output_dir.")
@click.option("--data-root", help="Overrides data.root.")
@click.option("--seed", type=int, help="Overrides seed; SCD_SEED is the fallback.")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override a config key, e.g. --set training.base_epochs=2.")
@command("train")
def train_command(config_path, stage, resume, checkpoint, output_dir, data_root, seed, overrides):
    """Train the network and write a run directory."""
    if seed is not None:
        overrides = (*overrides, f"seed={seed}")
    config = RunConfig.load(config_path, overrides)
    if output_dir:
        config.output_dir = output_dir
    if data_root:
        config.data.root = data_root

    resume_path = None
    if resume:
        resume_path = os.path.join(config.output_dir, "checkpoints", LAST_CHECKPOINT)
        if not os.path.exists(resume_path):
            raise StateError(f"nothing to resume: {resume_path} does not exist")

    logger.info(f"Training run {config.output_dir} (stage={stage}, seed={config.seed})")
    result = train(config, stage, resume=resume_path, init_checkpoint=checkpoint)
    click.echo(f"run directory: {result.run_dir}")
    if result.last_checkpoint:
        click.echo(f"last checkpoint: {result.last_checkpoint}")
    if result.reports:
        name, report = list(result.reports.items())[-1]
        click.echo(f"{name}: oa={report.oa:.4f} miou={report.miou:.4f} sek={report.sek:.4f}")
