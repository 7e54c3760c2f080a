"""
Geometry value types: points, loop specifications, segments and lattice sites.

Lengths are accepted in micrometres at every public constructor and stored in
metres on the instances.
"""

import cmath
import math
from dataclasses import dataclass, field
from typing import Iterator, Tuple, Union

from dualloop.middleware.error_handler import InvalidParameterError

UM = 1e-6
DEFAULT_CIRCLE_SEGMENTS = 1024
MIN_SEGMENTS = 16
RECT_MAX_SEGMENT_UM = 0.5


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise InvalidParameterError(f"non-finite coordinate in {self!r}")

    @classmethod
    def um(cls, x: float, y: float = 0.0, z: float = 0.0) -> "Point3":
        return cls(x * UM, y * UM, z * UM)

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def as_um(self) -> Tuple[float, float, float]:
        return (self.x / UM, self.y / UM, self.z / UM)

    def distance_to(self, other: "Point3") -> float:
        return math.dist(self.as_tuple(), other.as_tuple())

    def __iter__(self) -> Iterator[float]:
        return iter(self.as_tuple())


@dataclass(frozen=True)
class Phasor:
    """Complex drive: non-negative amplitude, phase folded into [0, 2π)."""

    amplitude: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.amplitude) or self.amplitude < 0:
            raise InvalidParameterError(f"phasor amplitude must be >= 0, got {self.amplitude}")
        phase = self.phase % (2 * math.pi)
        object.__setattr__(self, "phase", 0.0 if phase >= 2 * math.pi else phase)

    @property
    def value(self) -> complex:
        return cmath.rect(self.amplitude, self.phase)

    def scaled(self, factor: float) -> "Phasor":
        return Phasor(self.amplitude * factor, self.phase)

    def shifted(self, dphi: float) -> "Phasor":
        return Phasor(self.amplitude, self.phase + dphi)


@dataclass(frozen=True)
class Circle:
    diameter: float

    def __post_init__(self):
        if not self.diameter > 0:
            raise InvalidParameterError(f"circle diameter must be > 0, got {self.diameter}")

    @property
    def radius(self) -> float:
        return self.diameter / 2

    @property
    def perimeter(self) -> float:
        return math.pi * self.diameter


@dataclass(frozen=True)
class Rectangle:
    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise InvalidParameterError(
                f"rectangle sides must be > 0, got {self.width} x {self.height}"
            )

    @property
    def perimeter(self) -> float:
        return 2 * (self.width + self.height)


Shape = Union[Circle, Rectangle]


@dataclass(frozen=True)
class LoopSpec:
    """One planar current loop; ``centre.z`` is the loop plane height."""

    shape: Shape
    centre: Point3 = field(default_factory=lambda: Point3(0.0, 0.0, 0.0))
    winding: int = 1
    drive: Phasor = field(default_factory=Phasor)
    segment_count: int = DEFAULT_CIRCLE_SEGMENTS

    def __post_init__(self):
        if self.winding not in (1, -1):
            raise InvalidParameterError(f"winding sense must be +1 or -1, got {self.winding}")
        if self.segment_count < MIN_SEGMENTS:
            raise InvalidParameterError(
                f"segment_count must be >= {MIN_SEGMENTS}, got {self.segment_count}"
            )
        if isinstance(self.shape, Rectangle) and self.segment_count % 2:
            raise InvalidParameterError(
                f"rectangle segment_count must be even, got {self.segment_count}"
            )

    @classmethod
    def circle(
        cls,
        diameter_um: float,
        centre_um: Tuple[float, float, float] = (0.0, 0.0, 0.0),
        winding: int = 1,
        amplitude: float = 1.0,
        phase: float = 0.0,
        segment_count: int = DEFAULT_CIRCLE_SEGMENTS,
    ) -> "LoopSpec":
        return cls(
            shape=Circle(diameter_um * UM),
            centre=Point3.um(*centre_um),
            winding=winding,
            drive=Phasor(amplitude, phase),
            segment_count=segment_count,
        )

    @classmethod
    def rectangle(
        cls,
        width_um: float,
        height_um: float,
        centre_um: Tuple[float, float, float] = (0.0, 0.0, 0.0),
        winding: int = 1,
        amplitude: float = 1.0,
        phase: float = 0.0,
        segment_count: int = 0,
    ) -> "LoopSpec":
        # 0 selects the 0.5 um maximum segment length
        if segment_count <= 0:
            per_side = [
                max(4, math.ceil(side / RECT_MAX_SEGMENT_UM))
                for side in (width_um, height_um)
            ]
            segment_count = 2 * sum(per_side)
        return cls(
            shape=Rectangle(width_um * UM, height_um * UM),
            centre=Point3.um(*centre_um),
            winding=winding,
            drive=Phasor(amplitude, phase),
            segment_count=segment_count,
        )

    @property
    def z(self) -> float:
        return self.centre.z

    def with_drive(self, amplitude: float, phase: float) -> "LoopSpec":
        return LoopSpec(
            self.shape, self.centre, self.winding, Phasor(amplitude, phase), self.segment_count
        )

    def with_segments(self, segment_count: int) -> "LoopSpec":
        return LoopSpec(self.shape, self.centre, self.winding, self.drive, segment_count)

    def same_geometry(self, other: "LoopSpec") -> bool:
        return (
            self.shape == other.shape
            and self.centre == other.centre
            and self.winding == other.winding
            and self.segment_count == other.segment_count
        )


@dataclass(frozen=True)
class Segment:
    start: Point3
    end: Point3
    current: Phasor = field(default_factory=Phasor)

    def __post_init__(self):
        if self.length == 0:
            raise InvalidParameterError(f"segment has zero length at {self.start!r}")

    @property
    def length(self) -> float:
        return self.start.distance_to(self.end)


@dataclass(frozen=True)
class Site:
    position: Point3
    order: int  # 0 = origin, 1..3 = NN order, -1 = beyond third NN
    ring: int


@dataclass(frozen=True)
class SiteLayout:
    spacing: float
    ring_count: int
    sites: Tuple[Site, ...]

    def by_order(self, order: int) -> Tuple[Site, ...]:
        return tuple(s for s in self.sites if s.order == order)

    def __len__(self) -> int:
        return len(self.sites)
