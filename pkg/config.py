"""
Runtime configuration and logging setup for magtraj.

Values come from the environment (a .env file in the working directory is loaded first)
and fall back to the defaults below. Command-line flags override them per run.
"""

import os
import sys
import logging

from dotenv import load_dotenv

load_dotenv()

LOG_FILE = os.getenv("MAGTRAJ_LOG_FILE", "magtraj.log")
LOG_LEVEL = os.getenv("MAGTRAJ_LOG_LEVEL", "INFO")
WORKERS = int(os.getenv("MAGTRAJ_WORKERS", "1"))
DATA_DIR = os.getenv("MAGTRAJ_DATA_DIR", "data_idx")
MNIST_BASE_URL = os.getenv("MAGTRAJ_MNIST_BASE_URL", "https://storage.googleapis.com/cvdf-datasets/mnist/")

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def setup_logging(verbose=False, log_file=None):
    """Log to a file and to stderr. stdout is reserved for results."""
    level = logging.DEBUG if verbose else getattr(logging, LOG_LEVEL.upper(), logging.INFO)
    if log_file is None:
        log_file = LOG_FILE

    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)
    logging.debug(f"Logging configured (level={logging.getLevelName(level)}, file={log_file or 'none'})")


def resolve_workers(workers=None):
    """Thread count for parallel sections; never below 1."""
    if workers is None:
        workers = WORKERS
    return max(1, int(workers))
