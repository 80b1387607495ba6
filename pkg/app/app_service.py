# ** App Modules
from app.helpers.logger import setup_log


def register_logger():
    setup_log()
