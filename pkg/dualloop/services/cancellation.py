"""
Active crosstalk cancellation for a concentric inner/outer loop pair.

The outer loop is driven out of phase with the inner loop at the amplitude
ratio that zeroes Bz at one target site. Because the field engine is linear
in each drive, everything here works from per-unit-current fields computed
once and then combined with the drive phasors.
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from dualloop.middleware.error_handler import InvalidParameterError, UnsolvableTargetError
from dualloop.models.fields import (
    POWER_FLOOR_T2,
    CancellationSolution,
    PhaseSweep,
    RatioSweepPoint,
)
from dualloop.models.geometry import UM, LoopSpec, Point3
from dualloop.services.fitting import fit_phase_sinusoid
from dualloop.services.magnetostatics import power_db, unit_field

logger = logging.getLogger(__name__)

DEFAULT_SCAN_UM = (21.0, 200.0)
COARSE_SAMPLES = 1000
ZERO_FIELD_T = 1e-25


def _unit_bz(loop: LoopSpec, p: Point3) -> float:
    return float(unit_field(loop, np.array([p.as_tuple()]))[0, 2])


def _unit_b(loop: LoopSpec, p: Point3) -> np.ndarray:
    return unit_field(loop, np.array([p.as_tuple()]))[0]


def _check_pair(inner: LoopSpec, outer: LoopSpec) -> None:
    if inner.centre != outer.centre:
        raise InvalidParameterError(
            f"loops must be concentric and coplanar, centres {inner.centre.as_um()} um "
            f"and {outer.centre.as_um()} um"
        )


def default_local(inner: LoopSpec, target: Point3) -> Point3:
    """The local site: loop centre lifted to the target height."""
    return Point3(inner.centre.x, inner.centre.y, target.z)


def apply_solution(
    solution: CancellationSolution, inner: LoopSpec, outer: LoopSpec
) -> Tuple[LoopSpec, LoopSpec]:
    """Drive the outer loop at ``ratio`` times the inner amplitude, shifted by the offset."""
    drive = inner.drive
    return inner, outer.with_drive(
        drive.amplitude * solution.ratio, drive.phase + solution.phase_offset
    )


def solve(
    inner: LoopSpec,
    outer: LoopSpec,
    target: Point3,
    local: Optional[Point3] = None,
) -> CancellationSolution:
    """Outer/inner drive ratio and phase that null Bz at ``target``.

    The ratio starts from the closed form ``|Bz_in| / |Bz_out|`` and is then
    refined by a bracketed root-find on the signed Bz of the driven pair.
    """
    _check_pair(inner, outer)
    if math.hypot(target.x - inner.centre.x, target.y - inner.centre.y) == 0:
        raise InvalidParameterError("cancellation target must not sit at the common centre")
    local = local or default_local(inner, target)

    b_in = _unit_b(inner, target)
    b_out = _unit_b(outer, target)
    bz_in, bz_out = float(b_in[2]), float(b_out[2])
    if abs(bz_out) < ZERO_FIELD_T:
        raise UnsolvableTargetError(
            f"outer loop has no Bz at target {target.as_um()} um; the ratio is undefined"
        )

    # same-sign fields cancel with opposite drive phase
    phase_offset = math.pi if bz_in * bz_out > 0 else 0.0
    sign = math.cos(phase_offset)
    ratio = abs(bz_in) / abs(bz_out)

    def signed_bz(r: float) -> float:
        return bz_in + sign * r * bz_out

    if signed_bz(ratio) != 0.0:
        lo, hi = 0.5 * ratio, 1.5 * ratio
        if signed_bz(lo) * signed_bz(hi) < 0:
            ratio = optimize.brentq(signed_bz, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)

    # phase offsets are 0 or pi, so the drive is a real sign
    drive = sign
    residual_z = abs(bz_in + ratio * drive * bz_out) ** 2
    residual_total = float(np.sum(np.abs(b_in + ratio * drive * b_out) ** 2))

    l_in = _unit_b(inner, local)
    l_out = _unit_b(outer, local)
    p_local_dual = float(np.sum(np.abs(l_in + ratio * drive * l_out) ** 2))
    p_local_inner = float(np.sum(l_in**2))
    coupling = float(l_in[2] ** 2 / l_out[2] ** 2) if l_out[2] != 0 else float("inf")
    # identical loops cancel at the local site too; fall back to the inner-only power
    p_ref = p_local_dual if p_local_dual > POWER_FLOOR_T2 else p_local_inner

    solution = CancellationSolution(
        ratio=float(ratio),
        phase_offset=phase_offset,
        target=target,
        residual_power_db=power_db(residual_z, p_ref),
        local_power_factor=p_local_dual / p_local_inner,
        residual_total_db=power_db(residual_total, p_ref),
        centre_coupling_ratio=coupling,
        applied_centre_ratio=coupling / ratio**2,
        local=local,
    )
    logger.info(
        "Solved cancellation at %s um: R_opt=%.6f, residual %.1f dB",
        tuple(round(c, 3) for c in target.as_um()),
        solution.ratio,
        solution.residual_power_db,
    )
    return solution


def residual_at(
    solution: CancellationSolution,
    loops: Tuple[LoopSpec, LoopSpec],
    site: Point3,
    component: str = "z",
) -> float:
    """Power at ``site`` relative to the local-site power with ``solution`` applied.

    ``component="z"`` reports |Bz|², ``"total"`` reports |B|².
    """
    inner, outer = apply_solution(solution, *loops)
    b_site = inner.drive.value * _unit_b(inner, site) + outer.drive.value * _unit_b(outer, site)
    b_local = inner.drive.value * _unit_b(inner, solution.local) + outer.drive.value * _unit_b(
        outer, solution.local
    )
    p_ref = float(np.sum(np.abs(b_local) ** 2))
    if p_ref <= POWER_FLOOR_T2:
        p_ref = float(np.sum(np.abs(inner.drive.value * _unit_b(inner, solution.local)) ** 2))
    if component == "total":
        return power_db(float(np.sum(np.abs(b_site) ** 2)), p_ref)
    if component != "z":
        raise InvalidParameterError(f"component must be 'z' or 'total', got '{component}'")
    return power_db(abs(b_site[2]) ** 2, p_ref)


def _axis_points(start: Point3, direction: np.ndarray, s: np.ndarray) -> np.ndarray:
    return np.asarray(start.as_tuple()) + np.outer(s, direction)


def sweep_ratio(
    inner: LoopSpec,
    outer: LoopSpec,
    base: CancellationSolution,
    ratio_factors: Sequence[float],
    scan_um: Tuple[float, float] = DEFAULT_SCAN_UM,
    direction: Sequence[float] = (1.0, 0.0, 0.0),
    samples: int = COARSE_SAMPLES,
) -> List[RatioSweepPoint]:
    """Position of the |Bz|² minimum along the scan axis for each ratio factor k.

    The outer amplitude is ``k * R_opt`` times the inner amplitude. Minima found
    at either end of the axis are returned with ``boundary=True``.
    """
    _check_pair(inner, outer)
    factors = [float(k) for k in ratio_factors]
    if any(k < 0 for k in factors):
        raise InvalidParameterError(f"ratio factors must be >= 0, got {factors}")
    if not scan_um[1] > scan_um[0] >= 0:
        raise InvalidParameterError(f"scan range must be increasing, got {scan_um}")

    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    start = Point3(inner.centre.x, inner.centre.y, base.target.z)
    s = np.linspace(scan_um[0], scan_um[1], samples) * UM
    pts = _axis_points(start, d, s)
    bz_in = unit_field(inner, pts)[:, 2]
    bz_out = unit_field(outer, pts)[:, 2]
    sign = math.cos(base.phase_offset)

    l_in = _unit_b(inner, base.local)
    l_out = _unit_b(outer, base.local)

    results = []
    for k in factors:
        r = k * base.ratio
        profile = (bz_in + sign * r * bz_out) ** 2
        i = int(np.argmin(profile))
        p_ref = float(np.sum((l_in + sign * r * l_out) ** 2))

        if i == 0 or i == samples - 1:
            results.append(RatioSweepPoint(k, float(s[i]), power_db(profile[i], p_ref), True))
            continue

        def power_along(x: float, r=r) -> float:
            p = _axis_points(start, d, np.array([x]))
            return float(
                (unit_field(inner, p)[0, 2] + sign * r * unit_field(outer, p)[0, 2]) ** 2
            )

        res = optimize.minimize_scalar(
            power_along, bracket=(s[i - 1], s[i], s[i + 1]), method="golden"
        )
        x_null = float(res.x)
        p_null = max(float(res.fun), 0.0)
        results.append(RatioSweepPoint(k, x_null, power_db(p_null, p_ref), False))
        logger.debug("Ratio factor %.3f: null at %.3f um", k, x_null / UM)
    return results


def sweep_phase(
    inner: LoopSpec,
    outer: LoopSpec,
    ratio: float,
    phases: Sequence[float],
    local: Point3,
    remote: Point3,
) -> PhaseSweep:
    """|Bz|² at a local and a remote point as the outer drive phase is swept."""
    _check_pair(inner, outer)
    phases = np.asarray(phases, dtype=float)
    if len(phases) < 3 or np.ptp(phases) < 2 * np.pi * (1 - 1 / len(phases)) - 1e-12:
        raise InvalidParameterError("phase sweep must cover at least one full period")
    if ratio < 0:
        raise InvalidParameterError(f"ratio must be >= 0, got {ratio}")

    a = inner.drive.value
    outer_drive = ratio * inner.drive.amplitude * np.exp(1j * (inner.drive.phase + phases))

    def power_z(p: Point3) -> np.ndarray:
        return np.abs(a * _unit_bz(inner, p) + outer_drive * _unit_bz(outer, p)) ** 2

    p_local = power_z(local)
    p_remote = power_z(remote)
    return PhaseSweep(
        phases=phases,
        p_local=p_local,
        p_remote=p_remote,
        remote_fit=fit_phase_sinusoid(phases, p_remote),
        local_fit=fit_phase_sinusoid(phases, p_local),
    )


def imbalance_residual_ratio(imbalance_db: float) -> float:
    """Residual crosstalk power ratio |1 - (1 + ε)|² for an outer drive off by ε in amplitude."""
    if imbalance_db > 0:
        raise InvalidParameterError(f"imbalance must be <= 0 dB, got {imbalance_db}")
    eps = 0.0 if math.isinf(imbalance_db) else 10 ** (imbalance_db / 20)
    return eps**2


def extinction_ratio(
    solution: CancellationSolution,
    loops: Tuple[LoopSpec, LoopSpec],
    site: Point3,
    imbalance_db: float = float("-inf"),
) -> float:
    """Residual |Bz|² at ``site`` under an imbalanced outer drive over the inner-only |Bz|²."""
    if imbalance_db > 0:
        raise InvalidParameterError(f"imbalance must be <= 0 dB, got {imbalance_db}")
    inner, outer = apply_solution(solution, *loops)
    eps = 0.0 if math.isinf(imbalance_db) else 10 ** (imbalance_db / 20)
    bz_in = inner.drive.value * _unit_bz(inner, site)
    bz_out = outer.drive.value * (1 + eps) * _unit_bz(outer, site)
    unmitigated = abs(bz_in) ** 2
    if unmitigated <= POWER_FLOOR_T2:
        raise InvalidParameterError(f"inner loop has no crosstalk at {site.as_um()} um")
    residual = abs(bz_in + bz_out) ** 2
    return residual / unmitigated if residual > POWER_FLOOR_T2 else 0.0
