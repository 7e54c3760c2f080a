# dualloop/monitoring/metrics.py
import logging
import os

from prometheus_client import CollectorRegistry, Counter, Histogram, write_to_textfile

logger = logging.getLogger(__name__)

REGISTRY = CollectorRegistry()

SCENARIO_RUNS = Counter(
    "dualloop_scenario_runs_total",
    "Scenario runs by outcome",
    ["scenario", "status"],
    registry=REGISTRY,
)
STAGE_SECONDS = Histogram(
    "dualloop_stage_seconds",
    "Wall time per scenario stage",
    ["stage"],
    registry=REGISTRY,
    buckets=(0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 30.0, 60.0, 300.0),
)
FIT_RESTARTS = Counter(
    "dualloop_fit_restarts_total",
    "Restarts spent by nonlinear fits",
    registry=REGISTRY,
)


def write_metrics(out_dir: str) -> str:
    path = os.path.join(out_dir, "metrics.prom")
    write_to_textfile(path, REGISTRY)
    logger.info("Metrics written to %s", path)
    return path
