# controller/infer.py
import os

import click

from app.exceptions.custom_exceptions import ConfigError
from app.helpers.decorator import command
from app.helpers.files import write_effective_config
from app.schemas.dataset import Split
from app.schemas.run_config import TTAConfig
from app.services.asn.inference import load_checkpoint_model, predict_pair, write_prediction
from app.services.dataset.manifest import iter_samples, load_manifest
from app.services.dataset.palette import LabelPalette
from app.services.dataset.records import load_image


@click.command("infer")
@click.option("--checkpoint", required=True, type=click.Path(dir_okay=False))
@click.option("--im1", type=click.Path(dir_okay=False), help="Image at t1.")
@click.option("--im2", type=click.Path(dir_okay=False), help="Image at t2.")
@click.option("--data-root", type=click.Path(file_okay=False), help="Predict every sample of a dataset split instead.")
@click.option("--split", type=click.Choice(["train", "test", "all"]), default="test", show_default=True)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--tta", "tta_flag", default="none", show_default=True, help="none, ms, flip or ms,flip.")
@click.option("--predictor", type=click.Choice(["asn", "intuitive"]), default="asn", show_default=True)
@click.option("--atl/--no-atl", "use_atl", default=None, help="Apply the ATL heads (default: when the checkpoint has them trained).")
@click.option("--tau", type=float, help="Change threshold, defaults to the model's.")
@command("infer")
def infer_command(checkpoint, im1, im2, data_root, split, out_dir, tta_flag, predictor, use_atl, tau):
    """Predict semantic change maps with a trained checkpoint."""
    if tau is not None and not 0 < tau < 1:
        raise ConfigError(f"--tau must lie strictly between 0 and 1, got {tau}")
    tta = TTAConfig.from_flag(tta_flag)
    model, meta = load_checkpoint_model(checkpoint)
    if use_atl is None:
        use_atl = meta.get("stage") == "atl"
    palette = LabelPalette(model.config.num_classes)

    if im1 and im2:
        pairs = [(os.path.splitext(os.path.basename(im1))[0], load_image(im1), load_image(im2))]
    elif data_root:
        manifest = load_manifest(data_root)
        palette = LabelPalette(manifest.num_classes, manifest.class_names)
        records = iter_samples(manifest, None if split == "all" else Split(split))
        pairs = ((record.id, record.image1, record.image2) for record in records)
    else:
        raise ConfigError("give --im1 and --im2, or --data-root")

    count = 0
    for sample_id, image1, image2 in pairs:
        prediction = predict_pair(model, image1, image2, tta, use_atl, predictor, tau)
        write_prediction(out_dir, sample_id, prediction, palette)
        count += 1
    write_effective_config(out_dir, {
        "command": "infer", "checkpoint": checkpoint, "tta": tta.model_dump(), "predictor": predictor,
        "use_atl": use_atl, "tau": model.config.tau if tau is None else tau, "model": meta.get("model"),
    })
    click.echo(f"wrote {count} prediction(s) to {out_dir}")
