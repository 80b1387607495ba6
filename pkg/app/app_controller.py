# ** App Modules
from app.controller.gradcheck import gradcheck_command
from app.controller.infer import infer_command
from app.controller.score import score_command
from app.controller.synth import synth_command
from app.controller.train import train_command


def register_controller(cli):
    cli.add_command(train_command)
    cli.add_command(score_command)
    cli.add_command(infer_command)
    cli.add_command(synth_command)
    cli.add_command(gradcheck_command)
