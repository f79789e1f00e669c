"""Elliptical vehicle collision boundaries and boundary-to-boundary distance.

Each vehicle carries a rotated ellipse centered on the body; clearance is the
minimum Euclidean distance between two ellipse boundaries (0 when they
overlap). The distance solver alternates exact point-on-ellipse projections
between the two boundaries with a dense-sampling fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CollisionConfig",
    "EllipseBoundary",
    "boundary_of",
    "project_point",
    "min_distance",
    "min_distance_info",
    "rectangle_containment_check",
]

_PROJ_TOL = 1e-12
_MIN_DIST_TOL = 1e-12
_MAX_ITERS = 500
_OVERLAP_SAMPLES = 721


@dataclass(frozen=True)
class CollisionConfig:
    vehicle_length: float = 5.0
    vehicle_width: float = 2.0
    semi_major: float = 2.5
    semi_minor: float = 1.0

    def __post_init__(self):
        if min(self.vehicle_length, self.vehicle_width) < 0 or min(self.semi_major, self.semi_minor) <= 0:
            raise ValueError("collision geometry must be positive")


@dataclass(frozen=True)
class EllipseBoundary:
    cx: float
    cy: float
    heading: float
    semi_major: float
    semi_minor: float

    def __post_init__(self):
        if self.semi_major <= 0 or self.semi_minor <= 0:
            raise ValueError("semi-axes must be positive")

    def implicit(self, x, y):
        """M^2/Ca^2 + N^2/Cb^2 with the body-frame rotation; boundary = 1."""
        ct, st = math.cos(self.heading), math.sin(self.heading)
        dx = np.asarray(x) - self.cx
        dy = np.asarray(y) - self.cy
        m = dx * ct - dy * st
        n = dx * st + dy * ct
        return (m / self.semi_major) ** 2 + (n / self.semi_minor) ** 2

    def boundary_points(self, n: int) -> np.ndarray:
        """(n, 2) points sweeping the boundary."""
        phi = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
        bx = self.semi_major * np.cos(phi)
        by = self.semi_minor * np.sin(phi)
        return self._to_world(bx, by)

    def _to_world(self, bx, by) -> np.ndarray:
        ct, st = math.cos(self.heading), math.sin(self.heading)
        # implicit() maps world->body via [[ct, -st], [st, ct]]; invert it here
        x = self.cx + bx * ct + by * st
        y = self.cy - bx * st + by * ct
        return np.stack([np.asarray(x), np.asarray(y)], axis=-1)

    def _to_body(self, p) -> np.ndarray:
        ct, st = math.cos(self.heading), math.sin(self.heading)
        dx = p[0] - self.cx
        dy = p[1] - self.cy
        return np.array([dx * ct - dy * st, dx * st + dy * ct])


def boundary_of(center: tuple[float, float], heading: float, cfg: CollisionConfig) -> EllipseBoundary:
    return EllipseBoundary(center[0], center[1], heading, cfg.semi_major, cfg.semi_minor)


def _project_quadrant(p0: float, p1: float, a: float, b: float) -> tuple[float, float]:
    """Closest boundary point to (p0, p1) with p0, p1 >= 0, axis-aligned ellipse.

    Off-axis points solve f(lam) = (a*p0/(a^2+lam))^2 + (b*p1/(b^2+lam))^2 = 1,
    which is strictly decreasing on (-min(a,b)^2, inf), by safeguarded Newton.
    On-axis points need the evolute-cusp special case (nearest point leaves
    the axis when the point is close to the center of the flatter side).
    """
    if p0 < _PROJ_TOL and p1 < _PROJ_TOL:
        return (a, 0.0) if a <= b else (0.0, b)
    if p1 < _PROJ_TOL:
        if a > b and p0 < (a * a - b * b) / a:
            qx = a * a * p0 / (a * a - b * b)
            return qx, b * math.sqrt(max(0.0, 1.0 - (qx / a) ** 2))
        return a, 0.0
    if p0 < _PROJ_TOL:
        if b > a and p1 < (b * b - a * a) / b:
            qy = b * b * p1 / (b * b - a * a)
            return a * math.sqrt(max(0.0, 1.0 - (qy / b) ** 2)), qy
        return 0.0, b

    def f(lam):
        return (a * p0 / (a * a + lam)) ** 2 + (b * p1 / (b * b + lam)) ** 2 - 1.0

    lo = -min(a, b) ** 2 * (1.0 - 1e-12)
    hi = max(a * p0 + b * p1, 1e-9)
    while f(hi) > 0.0:
        hi *= 2.0
    lam = 0.5 * (lo + hi)
    for _ in range(120):
        val = f(lam)
        if abs(val) < 1e-15:
            break
        if val > 0.0:
            lo = lam
        else:
            hi = lam
        d0 = a * p0 / (a * a + lam)
        d1 = b * p1 / (b * b + lam)
        grad = -2.0 * (d0 * d0 / (a * a + lam) + d1 * d1 / (b * b + lam))
        lam_new = lam - val / grad if grad != 0.0 else 0.5 * (lo + hi)
        if not (lo < lam_new < hi):
            lam_new = 0.5 * (lo + hi)
        if abs(lam_new - lam) <= 1e-16 * max(1.0, abs(lam)):
            lam = lam_new
            break
        lam = lam_new
    return a * a * p0 / (a * a + lam), b * b * p1 / (b * b + lam)


def _project_body(p: np.ndarray, a: float, b: float) -> np.ndarray:
    qx, qy = _project_quadrant(abs(p[0]), abs(p[1]), a, b)
    return np.array([math.copysign(qx, p[0]) if abs(p[0]) >= _PROJ_TOL else qx,
                     math.copysign(qy, p[1]) if abs(p[1]) >= _PROJ_TOL else qy])


def project_point(e: EllipseBoundary, p) -> np.ndarray:
    """Closest point on the ellipse boundary to world point p."""
    body = e._to_body(np.asarray(p, dtype=float))
    q = _project_body(body, e.semi_major, e.semi_minor)
    return e._to_world(q[0], q[1])


def _boundaries_overlap(e1: EllipseBoundary, e2: EllipseBoundary) -> bool:
    pts2 = e2.boundary_points(_OVERLAP_SAMPLES)
    if np.any(e1.implicit(pts2[:, 0], pts2[:, 1]) <= 1.0):
        return True
    pts1 = e1.boundary_points(_OVERLAP_SAMPLES)
    if np.any(e2.implicit(pts1[:, 0], pts1[:, 1]) <= 1.0):
        return True
    # containment without boundary crossing
    if e1.implicit(e2.cx, e2.cy) <= 1.0 or e2.implicit(e1.cx, e1.cy) <= 1.0:
        return True
    return False


def _dense_min_distance(e1: EllipseBoundary, e2: EllipseBoundary, n: int = 2000) -> float:
    p1 = e1.boundary_points(n)
    p2 = e2.boundary_points(n)
    d2 = ((p1[:, None, :] - p2[None, :, :]) ** 2).sum(-1)
    return float(math.sqrt(d2.min()))


def min_distance_info(e1: EllipseBoundary, e2: EllipseBoundary) -> tuple[float, bool]:
    """(distance, overlap). Distance is 0 when the boundaries intersect or
    one ellipse contains the other. Arguments are ordered canonically first
    so the result is exactly symmetric."""
    if (e2.cx, e2.cy, e2.heading, e2.semi_major, e2.semi_minor) < (
            e1.cx, e1.cy, e1.heading, e1.semi_major, e1.semi_minor):
        e1, e2 = e2, e1
    if _boundaries_overlap(e1, e2):
        return 0.0, True
    # alternating projection between the two convex regions
    p = np.array([e2.cx, e2.cy])
    q = project_point(e1, p)
    prev = math.inf
    for _ in range(_MAX_ITERS):
        p = project_point(e2, q)
        q = project_point(e1, p)
        d = float(np.hypot(*(p - q)))
        if abs(prev - d) < _MIN_DIST_TOL * max(1.0, d):
            return d, False
        prev = d
    return _dense_min_distance(e1, e2), False


def min_distance(e1: EllipseBoundary, e2: EllipseBoundary) -> float:
    return min_distance_info(e1, e2)[0]


def rectangle_containment_check(cfg: CollisionConfig) -> tuple[bool, float]:
    """Whether the vehicle rectangle's corners fit inside the ellipse.

    Returns (contained, corner_value) with corner_value the implicit-function
    value (l_a/2)^2/Ca^2 + (l_b/2)^2/Cb^2; values above 1 mean the corners
    stick out.
    """
    value = (cfg.vehicle_length / 2.0) ** 2 / cfg.semi_major**2 + (
        cfg.vehicle_width / 2.0
    ) ** 2 / cfg.semi_minor**2
    return value <= 1.0, value
