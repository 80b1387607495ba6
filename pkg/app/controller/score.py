# controller/score.py
import click
from logzero import logger

from app.config import settings
from app.constants import SECOND_CLASSES
from app.exceptions.custom_exceptions import ConfigError
from app.helpers.decorator import command
from app.helpers.files import write_effective_config
from app.schemas.dataset import Split
from app.services.dataset.manifest import load_manifest
from app.services.dataset.palette import LabelPalette
from app.services.metrics.report import imbalance_warning, render_text
from app.services.metrics.scoring import score_and_report, write_reports


@click.command("score")
@click.option("--pred-dir", required=True, type=click.Path(file_okay=False), help="Holds label1/ and label2/ predictions.")
@click.option("--gt-dir", type=click.Path(file_okay=False), help="Ground truth in the same layout.")
@click.option("--pairs", "manifest_root", type=click.Path(file_okay=False),
              help="Dataset root with manifest.json; ground truth and ids come from it.")
@click.option("--split", type=click.Choice(["train", "test", "all"]), default="test", show_default=True)
@click.option("--classes", type=int, help="Number of classes when scoring plain directories.")
@click.option("--exclude", type=click.Choice(["entry", "delete"]), default="entry", show_default=True,
              help="How SeK removes the non-change/non-change count.")
@click.option("--out-dir", type=click.Path(file_okay=False), help="Report directory, defaults to --pred-dir.")
@click.option("--workers", type=int, help="Scoring threads, defaults to SCD_WORKERS.")
@command("score")
def score_command(pred_dir, gt_dir, manifest_root, split, classes, exclude, out_dir, workers):
    """Score predicted pair maps and write JSON, CSV and text reports."""
    if not gt_dir and not manifest_root:
        raise ConfigError("either --gt-dir or --pairs is required")
    ids = None
    if manifest_root:
        manifest = load_manifest(manifest_root)
        gt_dir, num_classes, class_names = manifest_root, manifest.num_classes, manifest.class_names
        ids = manifest.ids(None if split == "all" else Split(split))
    else:
        num_classes = classes or len(SECOND_CLASSES)
        class_names = LabelPalette(num_classes).names[1:]

    out_dir = out_dir or pred_dir
    _, report = score_and_report(pred_dir, gt_dir, num_classes, ids, class_names, exclude,
                                 workers or settings.SCD_WORKERS)
    paths = write_reports(report, out_dir)
    write_effective_config(out_dir, {"command": "score", "pred_dir": pred_dir, "gt_dir": gt_dir,
                                     "num_classes": num_classes, "exclude": exclude,
                                     "split": split if manifest_root else None})
    click.echo(render_text(report))
    warning = imbalance_warning(report)
    if warning:
        logger.warning(warning)
        click.echo(f"warning: {warning}")
    click.echo(f"reports: {', '.join(paths.values())}")
