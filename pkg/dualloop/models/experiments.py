from dataclasses import dataclass, field
from typing import Any, Dict, List

import pandas as pd


@dataclass
class ScenarioResult:
    scenario: str
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)
    provenance: Dict[str, Any] = field(default_factory=dict)

    @property
    def primary_table(self) -> pd.DataFrame:
        return self.tables[self.scenario]


@dataclass(frozen=True)
class MetricCheck:
    metric: str
    expected: float
    actual: float
    abs_tol: float
    rel_tol: float

    @property
    def deviation(self) -> float:
        return abs(self.actual - self.expected)

    @property
    def allowed(self) -> float:
        return max(self.abs_tol, self.rel_tol * abs(self.expected))

    @property
    def passed(self) -> bool:
        return self.deviation <= self.allowed


@dataclass
class ComparisonReport:
    scenario: str
    checks: List[MetricCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> List[str]:
        return [c.metric for c in self.checks if not c.passed]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "metric": c.metric,
                    "expected": c.expected,
                    "actual": c.actual,
                    "deviation": c.deviation,
                    "allowed": c.allowed,
                    "passed": c.passed,
                }
                for c in self.checks
            ]
        )
