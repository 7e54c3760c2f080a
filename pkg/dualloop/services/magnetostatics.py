"""
Quasi-static field engine.

Each loop is a closed polyline of straight segments; every segment contributes
the exact finite-wire Biot-Savart field

    B = μ0 I / 4π · (|r1| + |r2|) / (|r1| |r2| (|r1| |r2| + r1·r2)) · (r1 × r2)

with r1, r2 the vectors from the segment ends to the field point. Per-unit
current fields are real; a loop's complex drive phasor scales them.
"""

import logging
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from dualloop.middleware.error_handler import (
    FitDomainError,
    InvalidParameterError,
    SingularPointError,
)
from dualloop.models.fields import POWER_FLOOR_T2, FieldPhasor, LineScan, PowerLawFit
from dualloop.models.geometry import UM, LoopSpec, Point3
from dualloop.services.geometry import segment_arrays

logger = logging.getLogger(__name__)

MU0_OVER_4PI = 1e-7
SINGULAR_DISTANCE = 1e-9
POINT_CHUNK = 256
MIN_FIT_SAMPLES = 5

SCAN_COLUMNS = [
    "x_um",
    "z_um",
    "Bx_re",
    "Bx_im",
    "By_re",
    "By_im",
    "Bz_re",
    "Bz_im",
    "P_total",
    "P_z",
    "P_total_db",
    "P_z_db",
]


def _check_clearance(points: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> None:
    seg = ends - starts
    r1 = points[:, None, :] - starts[None, :, :]
    t = np.einsum("pmk,mk->pm", r1, seg) / np.einsum("mk,mk->m", seg, seg)
    t = np.clip(t, 0.0, 1.0)
    d = np.linalg.norm(r1 - t[..., None] * seg[None, :, :], axis=2)
    idx = np.unravel_index(np.argmin(d), d.shape)
    if d[idx] <= SINGULAR_DISTANCE:
        raise SingularPointError(points[idx[0]], float(d[idx]))


def unit_field(loop: LoopSpec, points: np.ndarray) -> np.ndarray:
    """Real (n, 3) field in tesla per ampere of ``loop`` at ``points`` (metres)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    starts, ends = segment_arrays(loop)
    out = np.empty_like(points)
    for lo in range(0, len(points), POINT_CHUNK):
        chunk = points[lo : lo + POINT_CHUNK]
        _check_clearance(chunk, starts, ends)
        r1 = chunk[:, None, :] - starts[None, :, :]
        r2 = chunk[:, None, :] - ends[None, :, :]
        n1 = np.linalg.norm(r1, axis=2)
        n2 = np.linalg.norm(r2, axis=2)
        scale = (n1 + n2) / (n1 * n2 * (n1 * n2 + np.einsum("pmk,pmk->pm", r1, r2)))
        out[lo : lo + POINT_CHUNK] = MU0_OVER_4PI * np.einsum(
            "pm,pmk->pk", scale, np.cross(r1, r2)
        )
    return out


def fields_at(loops: Sequence[LoopSpec], points: np.ndarray) -> np.ndarray:
    """Complex (n, 3) phasor field of the driven loop set at ``points`` (metres)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    total = np.zeros(points.shape, dtype=complex)
    for loop in loops:
        if loop.drive.amplitude == 0:
            continue
        total += loop.drive.value * unit_field(loop, points)
    return total


def field_at(loops: Sequence[LoopSpec], p: Point3) -> FieldPhasor:
    bx, by, bz = fields_at(loops, np.array([p.as_tuple()]))[0]
    return FieldPhasor(complex(bx), complex(by), complex(bz))


def power_db(p_value, p_ref):
    """``10 log10(p_value / p_ref)``; powers under the floor map to -inf."""
    p_ref = np.asarray(p_ref, dtype=float)
    if np.any(~(p_ref > 0)):
        raise InvalidParameterError(f"reference power must be > 0, got {p_ref}")
    p_value = np.asarray(p_value, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        db = np.where(p_value > POWER_FLOOR_T2, 10.0 * np.log10(p_value / p_ref), -np.inf)
    return float(db) if db.ndim == 0 else db


def _unit(direction: Sequence[float]) -> Tuple[float, float, float]:
    d = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(d)
    if not norm > 0:
        raise InvalidParameterError(f"scan direction must be non-zero, got {tuple(direction)}")
    return tuple(float(c) for c in d / norm)


def line_scan(
    loops: Sequence[LoopSpec],
    start: Point3,
    direction: Sequence[float],
    positions_um: Iterable[float],
    z_height_um: float = 0.0,
    reference_power: Optional[float] = None,
) -> LineScan:
    positions = np.asarray(list(positions_um), dtype=float) * UM
    if len(positions) < 2:
        raise InvalidParameterError("a line scan needs at least 2 positions")
    if np.any(np.diff(positions) <= 0):
        raise InvalidParameterError("scan positions must be strictly increasing")

    unit = _unit(direction)
    origin = np.asarray(start.as_tuple()) + np.array([0.0, 0.0, z_height_um * UM])
    points = origin + np.outer(positions, unit)
    b = fields_at(loops, points)

    p_total0 = float(np.sum(np.abs(b[0]) ** 2))
    p_z0 = float(abs(b[0, 2]) ** 2)
    if reference_power is None:
        reference_power = p_total0 if p_total0 > 0 else 1.0
    ref_z = p_z0 if p_z0 > 0 else reference_power
    logger.debug(
        "Line scan of %d points, reference power %.3e T^2", len(positions), reference_power
    )
    return LineScan(
        start=start,
        direction=unit,
        positions=positions,
        z_height=z_height_um * UM,
        b=b,
        reference_power=reference_power,
        reference_power_z=ref_z,
    )


def plane_map(
    loops: Sequence[LoopSpec],
    x_um: Sequence[float],
    y_um: Sequence[float],
    z_um: float,
) -> pd.DataFrame:
    """|B|² and |Bz|² over an x-y grid at height ``z_um``, normalised to the origin."""
    xx, yy = np.meshgrid(np.asarray(x_um, dtype=float), np.asarray(y_um, dtype=float))
    points = np.column_stack([xx.ravel(), yy.ravel(), np.full(xx.size, z_um)]) * UM
    b = fields_at(loops, points)
    ref = fields_at(loops, np.array([[0.0, 0.0, z_um * UM]]))[0]
    p_total = np.sum(np.abs(b) ** 2, axis=1)
    p_z = np.abs(b[:, 2]) ** 2
    ref_total = float(np.sum(np.abs(ref) ** 2)) or 1.0
    ref_z = float(abs(ref[2]) ** 2) or ref_total
    return pd.DataFrame(
        {
            "x_um": xx.ravel(),
            "y_um": yy.ravel(),
            "P_total": p_total,
            "P_z": p_z,
            "P_total_db": power_db(p_total, ref_total),
            "P_z_db": power_db(p_z, ref_z),
        }
    )


def scan_table(scan: LineScan) -> pd.DataFrame:
    pts = scan.points
    b = scan.b
    return pd.DataFrame(
        {
            "x_um": scan.positions / UM,
            "z_um": pts[:, 2] / UM,
            "Bx_re": b[:, 0].real,
            "Bx_im": b[:, 0].imag,
            "By_re": b[:, 1].real,
            "By_im": b[:, 1].imag,
            "Bz_re": b[:, 2].real,
            "Bz_im": b[:, 2].imag,
            "P_total": scan.p_total,
            "P_z": scan.p_z,
            "P_total_db": power_db(scan.p_total, scan.reference_power),
            "P_z_db": power_db(scan.p_z, scan.reference_power_z),
        },
        columns=SCAN_COLUMNS,
    )


def _fit_log_log(x: np.ndarray, y: np.ndarray, x_min: float, x_max: float) -> PowerLawFit:
    mask = (x >= x_min) & (x <= x_max)
    if np.count_nonzero(mask) < MIN_FIT_SAMPLES:
        raise FitDomainError(
            f"need >= {MIN_FIT_SAMPLES} samples in [{x_min / UM:g}, {x_max / UM:g}] um, "
            f"got {np.count_nonzero(mask)}"
        )
    xs, ys = x[mask], y[mask]
    if np.any(xs <= 0):
        raise FitDomainError("power-law fit window must lie at positive positions")
    if np.any(~(ys > 0)):
        raise FitDomainError("zero or negative power inside the fit window")
    reg = stats.linregress(np.log10(xs), np.log10(ys))
    return PowerLawFit(float(reg.slope), float(reg.stderr), float(reg.intercept), int(mask.sum()))


def fit_power_law(
    scan: LineScan, x_min_um: float, x_max_um: float, component: str = "total"
) -> PowerLawFit:
    """Least-squares exponent of power vs position on log-log axes."""
    power = scan.p_z if component == "z" else scan.p_total
    return _fit_log_log(scan.positions, power, x_min_um * UM, x_max_um * UM)


def amplitude_decay_exponent(scan: LineScan, x_min_um: float, x_max_um: float) -> PowerLawFit:
    return _fit_log_log(scan.positions, np.sqrt(scan.p_total), x_min_um * UM, x_max_um * UM)
