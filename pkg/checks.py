"""
Standalone runner for the test_*.py files: `python test_x.py` runs every test_ function
in the module and logs a ✅ / ❌ line per check. pytest collects the same functions.
"""

import os
import inspect
import logging
import tempfile
import traceback
from pathlib import Path

import pytest

from config import setup_logging

SLOW_ENV = "MAGTRAJ_SLOW_TESTS"


def slow_enabled():
    return os.environ.get(SLOW_ENV, "") == "1"


def slow(fn):
    """Opt-in check that runs only with MAGTRAJ_SLOW_TESTS=1, under pytest and under run_checks."""
    fn.slow = True
    return pytest.mark.skipif(not slow_enabled(), reason=f"set {SLOW_ENV}=1 to run")(fn)


def run_checks(namespace):
    setup_logging(log_file="")
    tests = [(name, fn) for name, fn in namespace.items()
             if name.startswith("test_") and inspect.isfunction(fn)]
    failed = []
    for name, fn in tests:
        if getattr(fn, "slow", False) and not slow_enabled():
            logging.info(f"⏭️  {name} SKIPPED (set {SLOW_ENV}=1)")
            continue
        kwargs = {}
        if "tmp_path" in inspect.signature(fn).parameters:
            kwargs["tmp_path"] = Path(tempfile.mkdtemp(prefix="magtraj_"))
        try:
            fn(**kwargs)
            logging.info(f"✅ {name} PASSED")
        except Exception as e:
            failed.append(name)
            logging.error(f"❌ {name} FAILED: {type(e).__name__}: {e}")
            logging.debug(traceback.format_exc())

    if failed:
        logging.error(f"❌ {len(failed)} of {len(tests)} checks failed: {', '.join(failed)}")
        return 1
    logging.info(f"🎉 All {len(tests)} checks passed")
    return 0
