"""
Command-line front end.

    dualloop scenario --name fig1d_line_scan --config my.yaml --out results/
    dualloop validate --config my.yaml

Every subcommand loads the packaged defaults, merges the ``--config`` file
over them, applies ``DUALLOOP_*`` environment overrides and validates the
result before anything is computed.
"""

import argparse
import json
import logging
import math
import os
import sys
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from dualloop import __version__
from dualloop.config import load_config, output_dir, preflight
from dualloop.config.schema import ScenarioConfig
from dualloop.middleware.error_handler import (
    EXIT_CONFIG,
    EXIT_DOMAIN,
    EXIT_OK,
    global_exception_handler,
)
from dualloop.models.experiments import ScenarioResult
from dualloop.models.geometry import Point3
from dualloop.monitoring.metrics import write_metrics
from dualloop.services import cancellation, experiments, magnetostatics
from dualloop.utils.io import write_csv

logger = logging.getLogger("dualloop")

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
ALL_SCENARIOS = "all"

# subcommands that are thin aliases for a named scenario
SCENARIO_ALIASES = {
    "line-scan": "fig1d_line_scan",
    "ratio-sweep": "fig1g_ratio_sweep",
    "phase-sweep": "fig1h_phase_sweep",
    "rabi": "fig4_rabi_suite",
    "odmr": "fig4c_phase_contrast",
}


def _configure_logging(verbose: int, quiet: bool) -> None:
    level = logging.WARNING if quiet else logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def _announce(cfg: ScenarioConfig) -> None:
    h = cfg.config_hash()
    logger.info("Effective seed %d, config hash %s", cfg.seed, h)
    print(f"seed={cfg.seed} config_hash={h}")


def _provenance(cfg: ScenarioConfig, name: str) -> Dict[str, object]:
    return {
        "scenario": name,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "version": __version__,
    }


def _field_map(cfg: ScenarioConfig) -> ScenarioResult:
    g, sw = cfg.geometry, cfg.sweep
    inner, outer = g.inner_loop(cfg.drive.inner_current_a), g.outer_loop()
    solution = cancellation.solve(inner, outer, Point3.um(g.spacing_um, 0.0, g.z_um))
    axis = np.arange(
        -sw.field_map_half_um, sw.field_map_half_um + sw.field_map_step_um / 2, sw.field_map_step_um
    )
    single = magnetostatics.plane_map([inner], axis, axis, g.z_um)
    dual = magnetostatics.plane_map(
        list(cancellation.apply_solution(solution, inner, outer)), axis, axis, g.z_um
    )
    summary = {
        "r_opt": solution.ratio,
        "grid_points": len(dual),
        "dual_P_z_db_min": float(dual["P_z_db"].replace(-np.inf, np.nan).min()),
    }
    name = "field_map"
    return ScenarioResult(
        name, {name: dual, "single": single}, summary, _provenance(cfg, name)
    )


def _cancel_solve(cfg: ScenarioConfig) -> ScenarioResult:
    g = cfg.geometry
    inner, outer = g.inner_loop(cfg.drive.inner_current_a), g.outer_loop()
    target = Point3.um(g.spacing_um, 0.0, g.z_um)
    sol = cancellation.solve(inner, outer, target)
    summary = {
        "r_opt": sol.ratio,
        "phase_offset_deg": math.degrees(sol.phase_offset),
        "target_um": list(target.as_um()),
        "residual_power_db": sol.residual_power_db,
        "residual_total_db": sol.residual_total_db,
        "local_power_factor": sol.local_power_factor,
        "local_reduction_fraction": sol.local_reduction_fraction,
        "centre_coupling_ratio": sol.centre_coupling_ratio,
        "applied_centre_ratio": sol.applied_centre_ratio,
    }
    print(json.dumps(summary, indent=2))
    name = "cancel_solve"
    return ScenarioResult(name, {}, summary, _provenance(cfg, name))


TASKS: Dict[str, Callable[[ScenarioConfig], ScenarioResult]] = {
    "field-map": _field_map,
    "cancel-solve": _cancel_solve,
}


def _reference_for(
    name: str, reference: Optional[str], cfg: ScenarioConfig
) -> Optional[pd.DataFrame]:
    """Reference rows for scenario ``name``, or None when there are none."""
    path = reference or cfg.reference.table
    if not path:
        return None
    if os.path.isdir(path):
        path = os.path.join(path, f"{name}.csv")
        if not os.path.exists(path):
            return None
    table = experiments.load_reference(path)
    if "scenario" in table.columns:
        table = table[table["scenario"] == name]
    return table if len(table) else None


def _emit(
    results: Sequence[ScenarioResult],
    cfg: ScenarioConfig,
    args: argparse.Namespace,
) -> int:
    out = output_dir(args.out)
    status = EXIT_OK
    for result in results:
        experiments.write_result(result, out)
        ref = _reference_for(result.scenario, args.reference, cfg)
        if ref is None or result.scenario not in experiments.SCENARIOS:
            continue
        report = experiments.compare_to_reference(result, ref)
        h = result.provenance["config_hash"]
        write_csv(report.to_frame(), os.path.join(out, f"{result.scenario}_comparison__{h}.csv"))
        if not report.passed:
            status = EXIT_DOMAIN
    if args.metrics:
        write_metrics(out)
    return status


def _configs(args: argparse.Namespace) -> List[ScenarioConfig]:
    cfg = load_config(args.config)
    cfg = cfg.with_overrides(seed=args.seed, workers=args.workers)
    for warning in preflight(cfg):
        logger.warning("%s: %s", args.config or "<defaults>", warning)
    if args.command == "scenario":
        name = args.name or cfg.name
        names = sorted(experiments.SCENARIOS) if name == ALL_SCENARIOS else [name]
    elif args.command in SCENARIO_ALIASES:
        names = [SCENARIO_ALIASES[args.command]]
    else:
        return [cfg]
    for name in names:
        experiments.check_scenario(name)
    return [cfg.with_overrides(name=name) for name in names]


def validate(path: Optional[str], name: Optional[str] = None) -> List[str]:
    """Schema, unit and pre-flight checks of a config file; nothing is computed.

    Returns the pre-flight warnings. Parse, schema and unknown-scenario
    problems raise the matching ``ConfigError``.
    """
    cfg = load_config(path)
    target = name or cfg.name
    if target != ALL_SCENARIOS:
        experiments.check_scenario(target)
    warnings = preflight(cfg)
    for warning in warnings:
        logger.warning("%s: %s", path or "<defaults>", warning)
    return warnings


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "validate":
        warnings = validate(args.config, args.name)
        print(f"{args.config or '<defaults>'}: valid ({len(warnings)} warning(s))")
        return EXIT_OK

    configs = _configs(args)
    _announce(configs[0])
    if args.command in TASKS:
        results = [TASKS[args.command](configs[0])]
    elif len(configs) == 1:
        results = [experiments.run(configs[0])]
    else:
        results = experiments.run_many(configs, configs[0].scenario.workers)
    return _emit(results, configs[0], args)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="YAML config file")
    common.add_argument("--out", type=str, default=None, help="Output directory")
    common.add_argument("--seed", type=int, default=None, help="Override scenario.seed")
    common.add_argument("--workers", type=int, default=None, help="Override scenario.workers")
    common.add_argument("--reference", type=str, default=None, help="Reference CSV or directory")
    common.add_argument("--metrics", action="store_true", help="Write <out>/metrics.prom")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")

    p = argparse.ArgumentParser(
        prog="dualloop", description="Dual-loop crosstalk cancellation simulator"
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("field-map", parents=[common], help="|B|^2 and |Bz|^2 over an x-y grid")
    sub.add_parser("line-scan", parents=[common], help="Single vs dual loop line scan")
    sub.add_parser("cancel-solve", parents=[common], help="Solve the outer drive for a null")
    sub.add_parser("ratio-sweep", parents=[common], help="Null position vs drive ratio")
    sub.add_parser("phase-sweep", parents=[common], help="Local and remote power vs phase")
    sub.add_parser("rabi", parents=[common], help="Rabi traces under crosstalk")
    sub.add_parser("odmr", parents=[common], help="ODMR contrast vs feed phase")

    ps = sub.add_parser("scenario", parents=[common], help="Run a named scenario")
    ps.add_argument(
        "--name", type=str, default=None, help=f"Scenario name or '{ALL_SCENARIOS}'"
    )
    pv = sub.add_parser("validate", parents=[common], help="Check a config without running it")
    pv.add_argument("--name", type=str, default=None)
    return p


def parse_and_dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG
    _configure_logging(args.verbose, args.quiet)
    try:
        return _dispatch(args)
    except Exception as e:
        return global_exception_handler(e)


def main() -> None:
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
