import os
from datetime import datetime
from typing import Optional

import logzero

from app.config import settings


def setup_log(log_dir: Optional[str] = None):
    # Create a dynamic folder and file name based on the date
    root = log_dir or settings.SCD_LOG_DIR
    log_folder = datetime.now().strftime("%Y-%m")
    day = datetime.now().strftime("%d")
    log_file = f"{root}/{log_folder}/{day}_app.log"

    # Create the log directory if it does not exist
    os.makedirs(f"{root}/{log_folder}", exist_ok=True)

    logzero.loglevel(settings.log_level)
    # Set up log file to capture all log levels
    logzero.logfile(log_file, loglevel=settings.log_level, mode="a")


def attach_run_log(run_dir: str, name: str = "train.log"):
    """Mirror the log stream into a run-local file next to checkpoints."""
    os.makedirs(run_dir, exist_ok=True)
    logzero.logfile(os.path.join(run_dir, name), loglevel=settings.log_level, mode="a")
