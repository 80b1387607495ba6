# ** Base Modules
import click
# ** External Modules
from dotenv import load_dotenv

# Load Environment variables
load_dotenv()

# ** App Modules
from app.app_controller import register_controller  # noqa: E402
from app.app_service import register_logger  # noqa: E402


@click.group()
def cli():
    """Semantic change detection: train, score, infer, synth, gradcheck."""
    register_logger()


# Base Component Registers
register_controller(cli)


if __name__ == "__main__":
    cli()
