import hashlib
import logging
import os
import time

import wrapt

logger = logging.getLogger(__name__)


def require_dir(dir_path: str) -> str:
    """
    Checks that an output directory exists.
    @param dir_path: The directory results will be written to.
    @return: The same path, for chaining.
    """
    if not os.path.isdir(dir_path):
        raise FileNotFoundError(
            f"Output directory '{dir_path}' does not exist"
        )
    return dir_path


def content_hash(text: str) -> str:
    """SHA-256 of the given text, used to tie outputs to the config that made them"""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@wrapt.decorator
def log_duration(wrapped, instance, args, kwargs):
    """Decorator that logs how long the wrapped call took"""
    start = time.perf_counter()
    try:
        return wrapped(*args, **kwargs)
    finally:
        logger.debug(
            f"{wrapped.__name__} finished in {time.perf_counter() - start:.3f}s"
        )
