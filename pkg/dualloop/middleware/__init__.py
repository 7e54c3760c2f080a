from dualloop.middleware.error_handler import (
    EXIT_CONFIG,
    EXIT_DOMAIN,
    EXIT_OK,
    ComparisonError,
    ConfigError,
    ConfigParseError,
    ConfigValidationError,
    ContractViolationError,
    DomainError,
    DualLoopError,
    FitDomainError,
    FitError,
    InfeasibleTargetError,
    InvalidParameterError,
    ScenarioError,
    SingularPointError,
    UnknownScenarioError,
    UnsolvableTargetError,
    global_exception_handler,
)

__all__ = [
    "EXIT_CONFIG",
    "EXIT_DOMAIN",
    "EXIT_OK",
    "ComparisonError",
    "ConfigError",
    "ConfigParseError",
    "ConfigValidationError",
    "ContractViolationError",
    "DomainError",
    "DualLoopError",
    "FitDomainError",
    "FitError",
    "InfeasibleTargetError",
    "InvalidParameterError",
    "ScenarioError",
    "SingularPointError",
    "UnknownScenarioError",
    "UnsolvableTargetError",
    "global_exception_handler",
]
