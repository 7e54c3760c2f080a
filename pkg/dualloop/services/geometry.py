"""
Loop discretisation and the hexagonal site lattice.

Circles become regular polygons with the circle's area, so the loop's dipole
moment is exact at any segment count; rectangles are split into equal segments
per side. Orientation follows the winding sense: +1 is
counter-clockwise seen from +z.
"""

import logging
import math
from typing import List, Tuple

import numpy as np

from dualloop.middleware.error_handler import InvalidParameterError
from dualloop.models.geometry import (
    UM,
    Circle,
    LoopSpec,
    Point3,
    Rectangle,
    Segment,
    Site,
    SiteLayout,
)

logger = logging.getLogger(__name__)

# cube-coordinate steps around a hexagonal ring
HEX_DELTAS = ((1, -1, 0), (1, 0, -1), (0, 1, -1), (-1, 1, 0), (-1, 0, 1), (0, -1, 1))
NN_LADDER = ((1, 1.0), (2, math.sqrt(3.0)), (3, 2.0))
NN_RTOL = 1e-9


def _rectangle_side_counts(shape: Rectangle, segment_count: int) -> Tuple[int, int]:
    half = segment_count // 2
    n_w = min(half - 1, max(1, round(half * shape.width / (shape.width + shape.height))))
    return n_w, half - n_w


def equal_area_radius(radius: float, segment_count: int) -> float:
    """Vertex radius of the regular polygon enclosing the same area as the circle."""
    step = 2 * math.pi / segment_count
    return radius * math.sqrt(step / math.sin(step))


def vertices(loop: LoopSpec) -> np.ndarray:
    """Closed polyline of the loop as an (n + 1, 3) array in metres."""
    cx, cy, cz = loop.centre.as_tuple()
    shape = loop.shape
    if isinstance(shape, Circle):
        n = loop.segment_count
        angles = 2 * np.pi * np.arange(n + 1) / n
        xy = equal_area_radius(shape.radius, n) * np.column_stack([np.cos(angles), np.sin(angles)])
        xy[-1] = xy[0]
    elif isinstance(shape, Rectangle):
        n_w, n_h = _rectangle_side_counts(shape, loop.segment_count)
        hw, hh = shape.width / 2, shape.height / 2
        corners = [(hw, -hh), (hw, hh), (-hw, hh), (-hw, -hh), (hw, -hh)]
        counts = (n_h, n_w, n_h, n_w)
        pieces = []
        for (x0, y0), (x1, y1), n in zip(corners[:-1], corners[1:], counts):
            t = np.arange(n) / n
            pieces.append(np.column_stack([x0 + (x1 - x0) * t, y0 + (y1 - y0) * t]))
        pieces.append(np.array([corners[0]]))
        xy = np.vstack(pieces)
    else:
        raise InvalidParameterError(f"unsupported loop shape {shape!r}")

    if loop.winding < 0:
        xy = xy[::-1]
    pts = np.column_stack([xy[:, 0] + cx, xy[:, 1] + cy, np.full(len(xy), cz)])
    return pts


def segment_arrays(loop: LoopSpec) -> Tuple[np.ndarray, np.ndarray]:
    pts = vertices(loop)
    return pts[:-1], pts[1:]


def discretize(loop: LoopSpec) -> List[Segment]:
    pts = vertices(loop)
    points = [Point3(*map(float, p)) for p in pts[:-1]]
    points.append(points[0])
    segments = [Segment(a, b, loop.drive) for a, b in zip(points[:-1], points[1:])]
    logger.debug("Discretised %s into %d segments", type(loop.shape).__name__, len(segments))
    return segments


def perimeter(segments: List[Segment]) -> float:
    return math.fsum(s.length for s in segments)


def signed_area(segments: List[Segment]) -> float:
    """Shoelace area in the x-y plane; positive for counter-clockwise loops."""
    return 0.5 * math.fsum(s.start.x * s.end.y - s.end.x * s.start.y for s in segments)


def _nn_order(distance: float, spacing: float) -> int:
    if distance == 0:
        return 0
    for order, factor in NN_LADDER:
        if math.isclose(distance, factor * spacing, rel_tol=NN_RTOL):
            return order
    return -1


def hex_sites(s_um: float, ring_count: int) -> SiteLayout:
    """Origin plus every site of the first ``ring_count`` hexagonal rings.

    The first nearest neighbour sits on the +x axis, so NN distances along x
    follow s and 2s, with the second NN ring at √3·s.
    """
    if not s_um > 0 or not math.isfinite(s_um):
        raise InvalidParameterError(f"site spacing must be > 0, got {s_um}")
    if ring_count < 0:
        raise InvalidParameterError(f"ring_count must be >= 0, got {ring_count}")

    spacing = s_um * UM
    cells = [(0, 0, 0, 0)]
    for ring in range(1, ring_count + 1):
        a, b, c = -ring, 0, ring
        # six sides of `ring` steps each, corner to corner
        for dq, dr, ds in HEX_DELTAS:
            for _ in range(ring):
                cells.append((a, b, c, ring))
                a, b, c = a + dq, b + dr, c + ds

    sites = []
    for q, r, _, ring in cells:
        x = spacing * (q + 0.5 * r)
        y = spacing * (math.sqrt(3.0) / 2.0) * r
        pos = Point3(x, y, 0.0)
        sites.append(Site(pos, _nn_order(math.hypot(x, y), spacing), ring))

    sites.sort(
        key=lambda site: (site.ring, math.atan2(site.position.y, site.position.x) % (2 * math.pi))
    )
    return SiteLayout(spacing, ring_count, tuple(sites))
