# controller/gradcheck.py
import json
import os

import click

from app.exceptions.training_exceptions import GradCheckFailure
from app.helpers.decorator import command
from app.services.asn.gradcheck import MODEL_TOLERANCE, model_grad_check
from app.services.tensor.gradcheck import run_op_suite

OP_TOLERANCE = 1e-4


@click.command("gradcheck")
@click.option("--scope", type=click.Choice(["op", "model", "all"]), default="op", show_default=True)
@click.option("--tolerance", type=float, help="Relative error bound (1e-4 for ops, 1e-3 for the model).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--repeats", type=click.IntRange(min=1), default=1, show_default=True,
              help="Check every op at seeds seed..seed+repeats-1.")
@click.option("--max-coords", type=int, default=6, show_default=True,
              help="Sampled coordinates per model parameter tensor.")
@click.option("--out-dir", type=click.Path(file_okay=False), help="Also write gradcheck.json here.")
@command("gradcheck")
def gradcheck_command(scope, tolerance, seed, repeats, max_coords, out_dir):
    """Compare analytic gradients with central finite differences."""
    reports = {}
    if scope in ("op", "all"):
        reports.update(run_op_suite(tolerance or OP_TOLERANCE, range(seed, seed + repeats)))
    if scope in ("model", "all"):
        reports["model"] = model_grad_check(tolerance=tolerance or MODEL_TOLERANCE, max_coords=max_coords, seed=seed)

    for name, report in reports.items():
        click.echo(f"{name}: {report.summary()}")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "gradcheck.json"), "w") as handle:
            json.dump({name: {"passed": report.passed, "max_rel_error": report.max_rel_error,
                              "failures": report.failures(), "diagnostic": report.diagnostic}
                       for name, report in reports.items()}, handle, indent=2)

    failed = [name for name, report in reports.items() if not report.passed]
    if failed:
        raise GradCheckFailure(f"gradient check failed for: {', '.join(failed)}", data={"failed": failed})
    click.echo("all gradient checks passed")
