"""Field phasors, line scans and cancellation results."""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from dualloop.models.geometry import Point3

POWER_FLOOR_T2 = 1e-30


@dataclass(frozen=True)
class FieldPhasor:
    """Complex field per unit current at one point (tesla)."""

    bx: complex
    by: complex
    bz: complex

    @property
    def power_total(self) -> float:
        return abs(self.bx) ** 2 + abs(self.by) ** 2 + abs(self.bz) ** 2

    @property
    def power_z(self) -> float:
        return abs(self.bz) ** 2

    @property
    def magnitude(self) -> float:
        return float(np.sqrt(self.power_total))

    def as_array(self) -> np.ndarray:
        return np.array([self.bx, self.by, self.bz], dtype=complex)

    def __add__(self, other: "FieldPhasor") -> "FieldPhasor":
        return FieldPhasor(self.bx + other.bx, self.by + other.by, self.bz + other.bz)

    def __mul__(self, k: complex) -> "FieldPhasor":
        return FieldPhasor(self.bx * k, self.by * k, self.bz * k)

    __rmul__ = __mul__

    @classmethod
    def zero(cls) -> "FieldPhasor":
        return cls(0j, 0j, 0j)


@dataclass(frozen=True, eq=False)
class LineScan:
    """Fields sampled along ``start + s * direction`` lifted by ``z_height``."""

    start: Point3
    direction: Tuple[float, float, float]
    positions: np.ndarray  # metres along the axis
    z_height: float
    b: np.ndarray  # (n, 3) complex
    reference_power: float
    reference_power_z: float

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def points(self) -> np.ndarray:
        origin = np.asarray(self.start.as_tuple()) + np.array([0.0, 0.0, self.z_height])
        return origin + np.outer(self.positions, np.asarray(self.direction))

    @property
    def p_total(self) -> np.ndarray:
        return np.sum(np.abs(self.b) ** 2, axis=1)

    @property
    def p_z(self) -> np.ndarray:
        return np.abs(self.b[:, 2]) ** 2

    def field(self, i: int) -> FieldPhasor:
        bx, by, bz = self.b[i]
        return FieldPhasor(complex(bx), complex(by), complex(bz))


@dataclass(frozen=True)
class CancellationSolution:
    ratio: float
    phase_offset: float
    target: Point3
    residual_power_db: float
    local_power_factor: float
    residual_total_db: float = float("nan")
    centre_coupling_ratio: float = float("nan")
    applied_centre_ratio: float = float("nan")
    local: Point3 = field(default_factory=lambda: Point3(0.0, 0.0, 0.0))

    @property
    def local_reduction_fraction(self) -> float:
        return 1.0 - self.local_power_factor


@dataclass(frozen=True)
class RatioSweepPoint:
    factor: float
    null_position: float  # metres along the scan axis
    null_power_db: float
    boundary: bool = False


@dataclass(frozen=True)
class SinusoidFit:
    """``offset - amplitude * cos(phase - phase_min)``; amplitude >= 0."""

    offset: float
    amplitude: float
    phase_min: float
    offset_err: float = float("nan")
    amplitude_err: float = float("nan")
    phase_min_err: float = float("nan")
    r_squared: float = float("nan")
    max_relative_residual: float = float("nan")

    @property
    def minimum(self) -> float:
        return self.offset - self.amplitude

    @property
    def maximum(self) -> float:
        return self.offset + self.amplitude

    @property
    def normalized_minimum(self) -> float:
        return self.minimum / self.maximum if self.maximum > 0 else float("nan")


@dataclass(frozen=True, eq=False)
class PhaseSweep:
    phases: np.ndarray
    p_local: np.ndarray
    p_remote: np.ndarray
    remote_fit: SinusoidFit
    local_fit: Optional[SinusoidFit] = None

    @property
    def remote_min_phase(self) -> float:
        return float(self.phases[int(np.argmin(self.p_remote))])


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    stderr: float
    intercept: float
    samples: int
