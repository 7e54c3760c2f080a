# dualloop/utils/restart.py
import logging
from functools import wraps
from typing import Callable, Optional, Sequence

import numpy as np

from dualloop.middleware.error_handler import FitError
from dualloop.monitoring.metrics import FIT_RESTARTS

logger = logging.getLogger(__name__)

# exceptions that mark one fit attempt as failed rather than fatal
ATTEMPT_FAILURES = (RuntimeError, ValueError, np.linalg.LinAlgError, FloatingPointError)


class RestartPolicy:
    """Retry a fit attempt from perturbed start points and keep the best result.

    The wrapped attempt takes a start vector first and returns an object with a
    ``residual`` attribute. An attempt counts as a failure when it raises one of
    ``ATTEMPT_FAILURES`` or when ``accept`` rejects its result. The first
    accepted result wins; otherwise the lowest-residual result is returned, or
    ``FitError`` is raised when no attempt produced one.
    """

    def __init__(
        self,
        max_restarts: int = 5,
        seed: int = 0,
        perturb: Optional[Callable[[np.ndarray, np.random.Generator], np.ndarray]] = None,
        accept: Optional[Callable[[object], bool]] = None,
    ):
        self.max_restarts = max_restarts
        self.seed = seed
        self.perturb = perturb or _default_perturb
        self.accept = accept or (lambda result: True)
        self.failures = 0
        self.restarts = 0

    def __call__(self, attempt):
        @wraps(attempt)
        def wrapper(start: Sequence[float], *args, **kwargs):
            rng = np.random.default_rng(self.seed)
            p0 = np.asarray(start, dtype=float)
            self.failures = 0
            best = None
            last_error: Optional[Exception] = None

            for n in range(self.max_restarts + 1):
                self.restarts = n
                trial = p0 if n == 0 else self.perturb(p0, rng)
                try:
                    result = attempt(trial, *args, **kwargs)
                except ATTEMPT_FAILURES as e:
                    self.failures += 1
                    last_error = e
                    logger.debug("Fit attempt %d failed: %s", n, e)
                    continue
                if self.accept(result):
                    best = result
                    break
                self.failures += 1
                if best is None or result.residual < best.residual:
                    best = result

            FIT_RESTARTS.inc(self.restarts)
            if best is None:
                raise FitError(
                    f"fit did not converge after {self.max_restarts} restarts ({last_error})"
                )
            return best

        return wrapper


def _default_perturb(p0: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return p0 * (1.0 + 0.1 * rng.standard_normal(p0.shape))
