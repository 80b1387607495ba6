# controller/synth.py
import os

import click

from app.config import settings
from app.helpers.decorator import command
from app.helpers.files import read_yaml, write_effective_config
from app.schemas.dataset import SynthProfile
from app.services.dataset.synth import resolve_profile, synth_generate, write_dataset


@click.command("synth")
@click.option("--seed", type=int, help="Generator seed; SCD_SEED is the fallback.")
@click.option("--count", type=int, default=250, show_default=True)
@click.option("--size", type=int, default=64, show_default=True)
@click.option("--classes", type=int, default=4, show_default=True)
@click.option("--profile", default="balanced", show_default=True, help="Built-in name or a YAML profile file.")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--force", is_flag=True, help="Overwrite existing samples.")
@command("synth")
def synth_command(seed, count, size, classes, profile, out_dir, force):
    """Generate a seeded synthetic bitemporal dataset with its manifest."""
    seed = settings.SCD_SEED if seed is None else seed
    if os.path.isfile(profile):
        profile = SynthProfile.parse(read_yaml(profile))
    profile = resolve_profile(profile)
    records, stats = synth_generate(seed, count, size, classes, profile)
    manifest = write_dataset(out_dir, records, stats, classes, profile, seed, force)
    write_effective_config(out_dir, {"command": "synth", "seed": seed, "count": count, "size": size,
                                     "classes": classes, "profile": profile.model_dump(mode="json")})
    click.echo(f"wrote {len(manifest.entries)} samples to {out_dir} "
               f"(change fraction {stats.change_fraction:.3f})")
