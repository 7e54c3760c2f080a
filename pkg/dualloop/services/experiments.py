"""
Named scenario pipelines.

Each scenario turns a validated ``ScenarioConfig`` into tables and a flat
summary of metrics. Stages are timed, logged and wrapped so a failure names
the scenario and the stage it happened in.
"""

import asyncio
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import Callable, Dict, Iterable, List, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from dualloop import __version__
from dualloop.config.schema import ScenarioConfig
from dualloop.middleware.error_handler import (
    ComparisonError,
    ScenarioError,
    UnknownScenarioError,
)
from dualloop.models.experiments import ComparisonReport, MetricCheck, ScenarioResult
from dualloop.models.geometry import UM, Point3
from dualloop.models.spin import DriveTone, NoiseModel, ToneInterval
from dualloop.monitoring.metrics import SCENARIO_RUNS, STAGE_SECONDS
from dualloop.services import cancellation, magnetostatics, odmr, spin
from dualloop.services.geometry import hex_sites
from dualloop.utils.io import write_csv, write_json

logger = logging.getLogger(__name__)

X_AXIS = (1.0, 0.0, 0.0)
Z_AXIS = (0.0, 0.0, 1.0)
ORIGIN = Point3(0.0, 0.0, 0.0)
REFERENCE_COLUMNS = ("metric", "expected", "abs_tol", "rel_tol")

Tables = Dict[str, pd.DataFrame]
Summary = Dict[str, object]


class _Stages:
    def __init__(self, scenario: str):
        self.scenario = scenario

    @contextmanager
    def __call__(self, stage: str):
        logger.info("[%s] %s started", self.scenario, stage)
        start = time.perf_counter()
        try:
            yield
        except ScenarioError:
            raise
        except Exception as e:
            raise ScenarioError(self.scenario, stage, e) from e
        finally:
            STAGE_SECONDS.labels(stage).observe(time.perf_counter() - start)
        logger.info(
            "[%s] %s done in %.2f s", self.scenario, stage, time.perf_counter() - start
        )


def _db_tag(db: float) -> str:
    return f"m{abs(db):g}db" if db < 0 else f"{db:g}db"


def _nn_distances_um(cfg: ScenarioConfig) -> Dict[int, float]:
    layout = hex_sites(cfg.geometry.spacing_um, max(cfg.geometry.ring_count, 2))
    return {
        order: layout.by_order(order)[0].position.distance_to(ORIGIN) / UM for order in (1, 2, 3)
    }


def _loop_pair(cfg: ScenarioConfig):
    g = cfg.geometry
    return g.inner_loop(cfg.drive.inner_current_a), g.outer_loop()


def _solved_pair(cfg: ScenarioConfig, stage):
    with stage("geometry"):
        nn = _nn_distances_um(cfg)
        inner, outer = _loop_pair(cfg)
        target = Point3.um(nn[1], 0.0, cfg.geometry.z_um)
    with stage("solve"):
        solution = cancellation.solve(inner, outer, target)
    return nn, inner, outer, solution


def _noise_amplitude(cfg: ScenarioConfig, params, drive, tau, stage) -> float:
    if cfg.noise.rabi is not None:
        return cfg.noise.rabi
    with stage("calibrate_noise"):
        return spin.calibrate_noise(
            params,
            drive,
            cfg.noise.calibrate_target_ns * 1e-9,
            tau,
            workers=cfg.scenario.workers,
        )


def _trace_table(trace) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "tau_ns": trace.tau * 1e9,
            "population": trace.population,
            "fit_value": trace.fit_values,
        }
    )


# ---------------------------------------------------------------------------
# Field scenarios
# ---------------------------------------------------------------------------
def _fig1d_line_scan(cfg: ScenarioConfig, stage) -> Tuple[Tables, Summary]:
    g, sw = cfg.geometry, cfg.sweep
    nn, inner, outer, sol = _solved_pair(cfg, stage)
    pair = list(cancellation.apply_solution(sol, inner, outer))

    with stage("line_scan"):
        positions = np.arange(
            sw.scan_start_um, sw.scan_stop_um + sw.scan_step_um / 2, sw.scan_step_um
        )
        ref_single = magnetostatics.field_at([inner], sol.local).power_total
        ref_dual = magnetostatics.field_at(pair, sol.local).power_total
        single = magnetostatics.line_scan(
            [inner], ORIGIN, X_AXIS, positions, g.z_um, reference_power=ref_single
        )
        dual = magnetostatics.line_scan(
            pair, ORIGIN, X_AXIS, positions, g.z_um, reference_power=ref_dual
        )

    with stage("neighbours"):
        site_db = {}
        for order, d in nn.items():
            p = Point3.um(d, 0.0, g.z_um)
            site_db[("single", order)] = magnetostatics.power_db(
                magnetostatics.field_at([inner], p).power_total, ref_single
            )
            site_db[("dual", order)] = magnetostatics.power_db(
                magnetostatics.field_at(pair, p).power_total, ref_dual
            )

    with stage("power_law_fits"):
        single_fit = magnetostatics.fit_power_law(single, *sw.single_fit_window_um)
        dual_fit = magnetostatics.fit_power_law(dual, *sw.dual_fit_window_um)
        beyond_fit = magnetostatics.fit_power_law(dual, *sw.dual_beyond_null_window_um)

    single_table = magnetostatics.scan_table(single)
    dual_table = magnetostatics.scan_table(dual)
    primary = pd.DataFrame(
        {
            "x_um": single_table["x_um"],
            "single_P_total_db": single_table["P_total_db"],
            "single_P_z_db": single_table["P_z_db"],
            "dual_P_total_db": dual_table["P_total_db"],
            "dual_P_z_db": dual_table["P_z_db"],
        }
    )
    summary = {
        "r_opt": sol.ratio,
        "phase_offset_deg": math.degrees(sol.phase_offset),
        "nn_distances_um": [nn[1], nn[2], nn[3]],
        "single_db_at_nn1": site_db[("single", 1)],
        "single_db_at_nn2": site_db[("single", 2)],
        "single_db_at_nn3": site_db[("single", 3)],
        "dual_db_at_nn2": site_db[("dual", 2)],
        "dual_db_at_nn3": site_db[("dual", 3)],
        "dual_z_db_at_target": sol.residual_power_db,
        "dual_total_db_at_target": sol.residual_total_db,
        "attenuation_db_nn2": site_db[("single", 2)] - site_db[("dual", 2)],
        "attenuation_db_nn3": site_db[("single", 3)] - site_db[("dual", 3)],
        "single_exponent": single_fit.exponent,
        "single_exponent_err": single_fit.stderr,
        "single_exponent_window_um": list(sw.single_fit_window_um),
        # dual_exponent fits the approach to the null, not the tail past it
        "dual_exponent": dual_fit.exponent,
        "dual_exponent_err": dual_fit.stderr,
        "dual_exponent_window_um": list(sw.dual_fit_window_um),
        "dual_exponent_beyond_null": beyond_fit.exponent,
        "dual_exponent_beyond_null_err": beyond_fit.stderr,
        "dual_exponent_beyond_null_window_um": list(sw.dual_beyond_null_window_um),
        "centre_power_ratio": sol.centre_coupling_ratio,
        "applied_centre_ratio": sol.applied_centre_ratio,
        "local_reduction_fraction": sol.local_reduction_fraction,
    }
    return {"single": single_table, "dual": dual_table, cfg.name: primary}, summary


def _fig1g_ratio_sweep(cfg: ScenarioConfig, stage) -> Tuple[Tables, Summary]:
    _, inner, outer, sol = _solved_pair(cfg, stage)
    with stage("ratio_sweep"):
        points = cancellation.sweep_ratio(
            inner, outer, sol, cfg.sweep.ratio_factors, cfg.sweep.ratio_scan_um
        )
    table = pd.DataFrame(
        {
            "ratio_factor": [p.factor for p in points],
            "null_x_um": [p.null_position / UM for p in points],
            "null_power_db": [p.null_power_db for p in points],
            "boundary": [p.boundary for p in points],
        }
    )
    interior = sorted((p for p in points if not p.boundary), key=lambda p: p.factor)
    nulls = np.array([p.null_position / UM for p in interior])
    unity = [p.null_position / UM for p in interior if p.factor == 1.0]
    summary = {
        "r_opt": sol.ratio,
        "null_at_unity_um": unity[0] if unity else float("nan"),
        "null_min_um": float(nulls.min()) if len(nulls) else float("nan"),
        "null_max_um": float(nulls.max()) if len(nulls) else float("nan"),
        "null_monotonic": bool(np.all(np.diff(nulls) > 0)),
        "boundary_factors": [p.factor for p in points if p.boundary],
    }
    return {cfg.name: table}, summary


def _fig1h_phase_sweep(cfg: ScenarioConfig, stage) -> Tuple[Tables, Summary]:
    _, inner, outer, sol = _solved_pair(cfg, stage)
    with stage("phase_sweep"):
        phases = np.radians(np.arange(0.0, 360.0, cfg.sweep.phase_step_deg))
        sweep = cancellation.sweep_phase(inner, outer, sol.ratio, phases, sol.local, sol.target)
        inner_only = magnetostatics.field_at([inner], sol.local).power_z

    table = pd.DataFrame(
        {
            "phase_rad": sweep.phases,
            "P_local": sweep.p_local,
            "P_remote": sweep.p_remote,
            "P_remote_db": magnetostatics.power_db(sweep.p_remote, sweep.p_local),
        }
    )
    summary = {
        "model": "quasi-static analytic analogue",
        "r_opt": sol.ratio,
        "remote_min_phase_deg": math.degrees(sweep.remote_fit.phase_min),
        "remote_fit_r2": sweep.remote_fit.r_squared,
        "remote_fit_max_rel_residual": sweep.remote_fit.max_relative_residual,
        "local_power_min_fraction": float(sweep.p_local.min() / inner_only),
        "local_power_max_fraction": float(sweep.p_local.max() / inner_only),
    }
    return {cfg.name: table}, summary


def _fig3k_power_scaling(cfg: ScenarioConfig, stage) -> Tuple[Tables, Summary]:
    g, sw, d = cfg.geometry, cfg.sweep, cfg.drive
    params = cfg.spin_params()
    gamma = params.gyromagnetic_ratio
    inner = g.inner_loop(1.0)
    local = Point3.um(0.0, 0.0, g.z_um)

    with stage("axial_scan"):
        z = np.logspace(
            np.log10(sw.axial_scan_um[0]), np.log10(sw.axial_scan_um[1]), sw.axial_points
        )
        axial = magnetostatics.line_scan([inner], ORIGIN, Z_AXIS, z, 0.0)
        far = magnetostatics.amplitude_decay_exponent(axial, *sw.axial_fit_window_um)
        near = magnetostatics.amplitude_decay_exponent(
            axial, sw.axial_scan_um[0], 10 * sw.axial_scan_um[0]
        )

    with stage("drive_current"):
        b_unit = magnetostatics.field_at([inner], local).magnitude
        current_ref = spin.required_field(d.reference_rabi, gamma) / b_unit
        powers = np.asarray(sw.power_mw, dtype=float)
        currents = current_ref * np.sqrt(powers / d.reference_power_mw)
        fields = np.array(
            [magnetostatics.field_at([inner.with_drive(i, 0.0)], local).magnitude for i in currents]
        )
        rabi_model = spin.rabi_frequency(fields, gamma)

    with stage("rabi_fits"):
        tau = cfg.tau_grid()
        rabi_fit = np.array(
            [
                spin.rabi_trace(
                    params, DriveTone(f), NoiseModel(), tau, workers=cfg.scenario.workers
                ).fit.frequency_hz
                for f in rabi_model
            ]
        )
        reg = stats.linregress(np.log10(powers), np.log10(rabi_fit))

    table = pd.DataFrame(
        {
            "power_mw": powers,
            "current_a": currents,
            "b_t": fields,
            "rabi_hz_model": rabi_model,
            "rabi_hz_fit": rabi_fit,
        }
    )
    axial_table = pd.DataFrame({"z_um": z, "B_abs_t": np.sqrt(axial.p_total)})
    summary = {
        "rabi_slope": float(reg.slope),
        "rabi_slope_err": float(reg.stderr),
        "axial_exponent": far.exponent,
        "axial_exponent_err": far.stderr,
        "near_field_exponent": near.exponent,
        "field_per_amp_t": b_unit,
        "current_for_reference_rabi_a": current_ref,
        "reference_rabi_hz": d.reference_rabi,
        "antenna_coupling_ratio": d.antenna_coupling_ratio,
        "drive_quality_ok": spin.drive_quality_ok(d.reference_rabi, params.t2),
    }
    return {cfg.name: table, "axial": axial_table}, summary


# ---------------------------------------------------------------------------
# Spin scenarios
# ---------------------------------------------------------------------------
def _contrast_table(result) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "phase_deg": np.degrees(result.phases),
            "contrast": result.contrast,
            "contrast_raw": result.contrast_raw,
            "contrast_err": result.contrast_err,
        }
    )


def _fig4c_phase_contrast(cfg: ScenarioConfig, stage) -> Tuple[Tables, Summary]:
    params = cfg.spin_params()
    o = cfg.odmr
    odmr_params = o.params()
    freq = odmr.default_grid(params, odmr_params, o.points)
    phases = np.radians(np.arange(0.0, 360.0, cfg.sweep.phase_step_deg))

    with stage("interference"):
        dual = odmr.contrast_vs_phase(
            params,
            DriveTone(o.inner_rabi),
            DriveTone(o.outer_rabi),
            math.radians(o.static_offset_deg),
            phases,
            odmr_params,
            freq,
        )
    with stage("phase_calibration"):
        single = odmr.contrast_vs_phase(
            params, DriveTone(o.inner_rabi), DriveTone(0.0), 0.0, phases, odmr_params, freq
        )
    with stage("power_linearity"):
        linearity = odmr.contrast_vs_power(params, o.power_rabi, odmr_params, freq)

    summary = {
        "min_phase_deg": dual.min_phase_deg,
        "max_phase_deg": (dual.min_phase_deg + 180.0) % 360.0,
        "min_phase_err_deg": math.degrees(dual.fit.phase_min_err),
        "normalized_min_power": dual.normalized_min_power,
        "r_squared": dual.fit.r_squared,
        "calibration_amplitude": single.fit.amplitude,
        "calibration_amplitude_err": single.fit.amplitude_err,
        "linearity_r2": linearity.attrs["r_squared"],
        "linearity_intercept": linearity.attrs["intercept"],
        "linearity_intercept_err": linearity.attrs["intercept_err"],
    }
    tables = {
        cfg.name: _contrast_table(dual),
        "calibration": _contrast_table(single),
        "linearity": linearity,
    }
    return tables, summary


def _fig4_rabi_suite(cfg: ScenarioConfig, stage) -> Tuple[Tables, Summary]:
    params = cfg.spin_params()
    drive = cfg.drive.tone()
    tau = cfg.tau_grid()
    omega = _noise_amplitude(cfg, params, drive, tau, stage)
    cases = {
        "clean": NoiseModel(),
        "noisy": cfg.noise_model(omega),
        "protected": cfg.noise_model(omega, cfg.noise.suppression),
        "in_phase": cfg.noise_model(omega, aggressors=2),
    }

    tables: Tables = {}
    rows = []
    fits = {}
    for case, noise in cases.items():
        with stage(f"rabi_{case}"):
            trace = spin.rabi_trace(params, drive, noise, tau, workers=cfg.scenario.workers)
        tables[case] = _trace_table(trace)
        fits[case] = trace.fit.summary(params.seed)
        rows.append(
            {
                "case": case,
                "noise_rabi_hz": noise.effective_rabi_hz,
                "t_rabi_ns": trace.fit.t_rabi * 1e9,
                "t_rabi_err_ns": trace.fit.t_rabi_err * 1e9,
                "frequency_hz": trace.fit.frequency_hz,
                "amplitude": trace.fit.amplitude,
                "offset": trace.fit.offset,
            }
        )
    tables[cfg.name] = pd.DataFrame(rows)

    t = {case: fits[case]["t_rabi_ns"] for case in cases}
    summary = {
        "noise_rabi_hz": omega,
        "suppression": cfg.noise.suppression,
        "t_clean_ns": t["clean"],
        "t_noisy_ns": t["noisy"],
        "t_protected_ns": t["protected"],
        "t_in_phase_ns": t["in_phase"],
        "recovery_ratio": t["protected"] / t["noisy"],
        "ordering_ok": t["in_phase"] < t["noisy"] < t["protected"],
        "fits": fits,
    }
    return tables, summary


def _detuning_equivalence(cfg: ScenarioConfig, stage) -> Tuple[Tables, Summary]:
    omega = cfg.drive.rabi
    rows = []
    with stage("detuning"):
        for s in cfg.sweep.suppressions:
            delta = spin.equivalent_detuning(omega, s)
            # peak of the generalised Rabi oscillation
            t_peak = 0.5 / math.hypot(omega, delta)
            peak = spin.bloch_evolve([ToneInterval(t_peak, (DriveTone(omega, 0.0, delta),))])[-1]
            rows.append(
                {
                    "suppression": s,
                    "suppression_db": 10 * math.log10(s),
                    "detuning_hz": delta,
                    "bloch_peak_population": peak,
                    "abs_error": abs(peak - s),
                }
            )
    table = pd.DataFrame(rows)
    target = spin.equivalent_detuning(omega, cfg.noise.suppression)
    summary = {
        "drive_rabi_hz": omega,
        "suppression": cfg.noise.suppression,
        "equivalent_detuning_hz": target,
        "equivalent_detuning_mhz": target / 1e6,
        "max_oracle_error": float(table["abs_error"].max()) if len(table) else 0.0,
    }
    return {cfg.name: table}, summary


def _coherence_penalty_curve(cfg: ScenarioConfig, stage) -> Tuple[Tables, Summary]:
    params = cfg.spin_params()
    drive = cfg.drive.tone()
    tau = cfg.tau_grid()
    workers = cfg.scenario.workers
    rows = []
    summary: Summary = {}

    for db in cfg.sweep.penalty_db:
        with stage(f"penalty_{_db_tag(db)}"):
            result = spin.coherence_penalty(params, drive, db, tau, workers=workers)
        rows.append({"case": "noise_power", "input_db": db, "noise_power_db": db, **vars(result)})
        summary[f"penalty_{_db_tag(db)}"] = result.reduction
        summary[f"penalty_{_db_tag(db)}_err"] = result.error

    if cfg.sweep.imbalance_db:
        _, inner, outer, sol = _solved_pair(cfg, stage)
        omega = _noise_amplitude(cfg, params, drive, tau, stage)
        for imb in cfg.sweep.imbalance_db:
            tag = _db_tag(imb)
            with stage(f"imbalance_{tag}"):
                ratio = cancellation.extinction_ratio(sol, (inner, outer), sol.target, imb)
                noise_db = 10 * math.log10(ratio * (omega / drive.rabi_hz) ** 2)
                result = spin.coherence_penalty(params, drive, noise_db, tau, workers=workers)
            rows.append(
                {"case": "imbalance", "input_db": imb, "noise_power_db": noise_db, **vars(result)}
            )
            summary[f"extinction_ratio_{tag}"] = ratio
            summary[f"penalty_imbalance_{tag}"] = result.reduction
            summary[f"penalty_imbalance_{tag}_err"] = result.error
        summary["noise_rabi_hz"] = omega

    table = pd.DataFrame(rows)
    return {cfg.name: table}, summary


SCENARIOS: Dict[str, Callable[[ScenarioConfig, _Stages], Tuple[Tables, Summary]]] = {
    "fig1d_line_scan": _fig1d_line_scan,
    "fig1g_ratio_sweep": _fig1g_ratio_sweep,
    "fig1h_phase_sweep": _fig1h_phase_sweep,
    "fig3k_power_scaling": _fig3k_power_scaling,
    "fig4c_phase_contrast": _fig4c_phase_contrast,
    "fig4_rabi_suite": _fig4_rabi_suite,
    "detuning_equivalence": _detuning_equivalence,
    "coherence_penalty_curve": _coherence_penalty_curve,
}


def check_scenario(name: str) -> None:
    if name not in SCENARIOS:
        raise UnknownScenarioError(name, sorted(SCENARIOS))


def run(config: ScenarioConfig) -> ScenarioResult:
    """Execute the scenario named in ``config`` and collect its tables and summary."""
    name = config.name
    check_scenario(name)
    start = time.perf_counter()
    logger.info(
        "Running scenario %s (seed %d, config %s)", name, config.seed, config.config_hash()
    )
    try:
        tables, summary = SCENARIOS[name](config, _Stages(name))
    except Exception:
        SCENARIO_RUNS.labels(name, "failed").inc()
        raise
    SCENARIO_RUNS.labels(name, "ok").inc()
    logger.info("Scenario %s finished in %.2f s", name, time.perf_counter() - start)
    provenance = {
        "scenario": name,
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "version": __version__,
    }
    return ScenarioResult(name, tables, summary, provenance)


async def _gather(configs: List[ScenarioConfig], workers: int) -> List[ScenarioResult]:
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        tasks = [loop.run_in_executor(pool, run, cfg) for cfg in configs]
        return list(await asyncio.gather(*tasks))


def run_many(configs: Iterable[ScenarioConfig], workers: int = 1) -> List[ScenarioResult]:
    """Run several scenarios concurrently; results come back in input order."""
    configs = list(configs)
    for cfg in configs:
        check_scenario(cfg.name)
    return asyncio.run(_gather(configs, max(1, workers)))


def load_reference(reference: Union[str, pd.DataFrame]) -> pd.DataFrame:
    if isinstance(reference, pd.DataFrame):
        return reference
    try:
        return pd.read_csv(reference, comment="#")
    except (OSError, pd.errors.ParserError) as e:
        raise ComparisonError(f"cannot read reference table {reference}: {e}") from e


def compare_to_reference(
    result: ScenarioResult, reference: Union[str, pd.DataFrame]
) -> ComparisonReport:
    """Check summary metrics against ``metric,expected,abs_tol,rel_tol`` rows."""
    table = load_reference(reference)
    missing = [c for c in REFERENCE_COLUMNS if c not in table.columns]
    if missing:
        raise ComparisonError(f"reference table lacks columns {missing}")
    if "scenario" in table.columns:
        other = set(table["scenario"].dropna()) - {result.scenario}
        if other:
            raise ComparisonError(
                f"reference rows for {sorted(other)} do not match scenario '{result.scenario}'"
            )

    checks = []
    for row in table.itertuples(index=False):
        if row.metric not in result.summary:
            raise ComparisonError(
                f"metric '{row.metric}' is not reported by scenario '{result.scenario}'"
            )
        actual = result.summary[row.metric]
        if isinstance(actual, (bool, np.bool_)) or not isinstance(actual, (int, float, np.number)):
            raise ComparisonError(f"metric '{row.metric}' is not numeric: {actual!r}")
        checks.append(
            MetricCheck(
                row.metric,
                float(row.expected),
                float(actual),
                float(row.abs_tol),
                float(row.rel_tol),
            )
        )
    report = ComparisonReport(result.scenario, checks)
    if report.failed:
        logger.warning("Scenario %s outside tolerance: %s", result.scenario, report.failed)
    return report


def result_paths(result: ScenarioResult, out_dir: str) -> Dict[str, str]:
    h = result.provenance["config_hash"]
    paths = {}
    for table in result.tables:
        stem = result.scenario if table == result.scenario else f"{result.scenario}_{table}"
        paths[table] = os.path.join(out_dir, f"{stem}__{h}.csv")
    paths["summary"] = os.path.join(out_dir, f"{result.scenario}__{h}.summary.json")
    return paths


def write_result(result: ScenarioResult, out_dir: str) -> List[str]:
    """Write every table as CSV and the summary with provenance as JSON."""
    paths = result_paths(result, out_dir)
    written = [write_csv(result.tables[t], paths[t]) for t in result.tables]
    written.append(
        write_json(
            {"summary": result.summary, "provenance": result.provenance}, paths["summary"]
        )
    )
    logger.info("Wrote %d files for %s to %s", len(written), result.scenario, out_dir)
    return written
