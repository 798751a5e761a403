import logging
import time
from contextlib import contextmanager
from functools import wraps

from qwork_pipeline.utils.errors import PipelineStageError, QworkError

logger = logging.getLogger(__name__)


def log_timing(func):
    """
    Wrap `func` so each call logs its wall-clock duration at INFO level.

    Applied to propagation and the run entry points. The return value and
    exceptions pass through unchanged; a call that raises logs nothing.

    Parameters
    ----------
    func : callable

    Returns
    -------
    callable
        Same signature as `func`.

    Examples
    --------
    @log_timing
    def run_oracle(config):
        ...
    > run_oracle(config)
    > timing : run_oracle : 0.84s
    """

    @wraps(func)
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        result = func(*args, **kwargs)
        elapsed = time.perf_counter() - start
        logger.info(f"timing : {func.__name__} : {elapsed:.2f}s")
        return result

    return wrapper


@contextmanager
def stage(label: str):
    """Re-raise errors inside the block as `PipelineStageError` tagged with `label`.

    Errors that are already stage-tagged pass through untouched.
    """
    logger.info(f"stage : {label}")
    try:
        yield
    except PipelineStageError:
        raise
    except (QworkError, ArithmeticError, ValueError, OSError) as e:
        raise PipelineStageError(label, e) from e
