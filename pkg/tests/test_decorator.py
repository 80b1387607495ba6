# ** Base Modules
import click
import pytest
from click.testing import CliRunner

# ** App Modules
from app.constants import EXIT_CHECK_FAILED, EXIT_DIVERGED, EXIT_USAGE
from app.exceptions.custom_exceptions import ConfigError, LabelError
from app.exceptions.tensor_exceptions import CheckpointError
from app.exceptions.training_exceptions import DivergenceError, GradCheckFailure
from app.helpers import decorator
from app.helpers.decorator import command, logged
from app.services.asn.inference import predict_pair
from app.services.asn.trainer import Trainer
from app.services.dataset.synth import synth_generate
from app.services.metrics.scoring import score_and_report


class RecordingLogger:
    def __init__(self):
        self.lines = []

    def info(self, message):
        self.lines.append(("info", message))

    def error(self, message):
        self.lines.append(("error", message))


@pytest.fixture
def recorder(monkeypatch):
    recording = RecordingLogger()
    monkeypatch.setattr(decorator, "logger", recording)
    return recording


def test_logged_wraps_the_call(recorder):
    @logged("doubling")
    def double(x):
        return 2 * x

    assert double(4) == 8
    assert recorder.lines == [("info", "Starting doubling"), ("info", "Finished doubling")]
    assert double.__name__ == "double"


def test_service_entry_points_are_logged(recorder):
    for entry in (Trainer.fit, score_and_report, predict_pair, synth_generate):
        assert hasattr(entry, "__wrapped__"), entry.__name__
    synth_generate(seed=0, count=1, size=32, num_classes=3)
    assert recorder.lines == [("info", "Starting scene generation"), ("info", "Finished scene generation")]


def test_failed_call_is_not_reported_finished(recorder):
    with pytest.raises(ConfigError):
        synth_generate(seed=0, count=0, size=32, num_classes=3)
    assert recorder.lines == [("info", "Starting scene generation")]


@pytest.mark.parametrize("error, code", [
    (LabelError("bad label"), EXIT_USAGE),
    (CheckpointError("truncated archive"), EXIT_USAGE),
    (GradCheckFailure("conv2d"), EXIT_CHECK_FAILED),
    (DivergenceError("nan loss"), EXIT_DIVERGED),
])
def test_command_maps_exit_codes(recorder, error, code):
    @click.command()
    @command("sample run")
    def failing():
        raise error

    result = CliRunner().invoke(failing)
    assert result.exit_code == code
    assert f"error: {error.message}" in result.output
    assert recorder.lines == [("error", f"Error {error.message} on Sample Run")]
