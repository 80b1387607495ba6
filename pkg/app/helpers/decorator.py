import functools

import click
from logzero import logger

from app.exceptions.custom_exceptions import SCDException


def command(action: str):
    """
    Decorator to run a CLI command body and translate domain
    failures into process exit codes.

    Args:
        action (str): Action Performed ex. train, score, synth .etc
    """
    def wrap(func):
        @functools.wraps(func)
        def decor(*arg, **kwarg):
            try:
                return func(*arg, **kwarg)
            except SCDException as e:
                logger.error(f'Error {e.message} on {action.title()}')
                click.echo(f'error: {e.message}', err=True)
                raise click.exceptions.Exit(e.exit_code)
        return decor
    return wrap


def logged(action: str):
    """Log entry and completion of a service method at INFO level."""
    def wrap(func):
        @functools.wraps(func)
        def decor(*arg, **kwarg):
            logger.info(f'Starting {action}')
            method_output = func(*arg, **kwarg)
            logger.info(f'Finished {action}')
            return method_output
        return decor
    return wrap
