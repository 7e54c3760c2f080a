# dualloop/middleware/error_handler.py
import logging
from typing import Any, Dict, List, Optional, Sequence

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_CONFIG = 2


class DualLoopError(Exception):
    """Root of every error raised by the package."""

    exit_code = EXIT_DOMAIN


# -------------------------
# Domain / numerical errors
# -------------------------
class DomainError(DualLoopError):
    exit_code = EXIT_DOMAIN


class InvalidParameterError(DomainError, ValueError):
    pass


class SingularPointError(DomainError):
    def __init__(self, point: Sequence[float], distance: float):
        self.point = tuple(point)
        self.distance = distance
        super().__init__(
            f"evaluation point {self.point} lies {distance:.3e} m from a conductor segment"
        )


class UnsolvableTargetError(DomainError):
    pass


class FitDomainError(DomainError):
    pass


class FitError(DomainError):
    def __init__(self, message: str, best_residual: float = float("inf")):
        self.best_residual = best_residual
        super().__init__(f"{message} (best residual {best_residual:.3e})")


class ContractViolationError(DomainError):
    pass


class InfeasibleTargetError(DomainError):
    pass


class ComparisonError(DomainError):
    pass


# -------------------------
# Configuration errors
# -------------------------
class ConfigError(DualLoopError):
    exit_code = EXIT_CONFIG


class ConfigParseError(ConfigError):
    def __init__(self, path: str, line: Optional[int], column: Optional[int], problem: str):
        self.path = path
        self.line = line
        self.column = column
        where = f"{path}:{line}:{column}" if line is not None else path
        super().__init__(f"{where}: {problem}")


class ConfigValidationError(ConfigError):
    def __init__(self, path: str, failures: List[Dict[str, Any]]):
        self.path = path
        self.failures = failures
        lines = [f"{path}: {f['field']}: {f['message']}" for f in failures]
        super().__init__("\n".join(lines))

    @property
    def fields(self) -> List[str]:
        return [f["field"] for f in self.failures]


class UnknownScenarioError(ConfigError):
    def __init__(self, name: str, valid: Sequence[str]):
        self.name = name
        self.valid = list(valid)
        super().__init__(f"unknown scenario '{name}'; valid names: {', '.join(self.valid)}")


class ScenarioError(DualLoopError):
    """Wraps a module error with the scenario and stage it came from."""

    def __init__(self, scenario: str, stage: str, cause: Exception):
        self.scenario = scenario
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", EXIT_DOMAIN)
        super().__init__(f"scenario '{scenario}' failed in stage '{stage}': {cause}")


def global_exception_handler(exc: BaseException) -> int:
    """Log an exception escaping the CLI and return the process exit code."""
    if isinstance(exc, DualLoopError):
        logger.error("%s", exc)
        return exc.exit_code
    logger.error("Unhandled exception: %s", exc, exc_info=True)
    return EXIT_DOMAIN
