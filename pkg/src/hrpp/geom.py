"""Geometric primitives and the reference ray intersection predicates.

Vectors are numpy float32 arrays of shape (3,); scene data is stored in
float32 while intersection arithmetic runs in float64.  The conventions
below are shared verbatim by the compiled traversal kernels so that the
reference predicates here can serve as oracles for them:

* Slab test: reciprocal directions with IEEE signed-infinity semantics
  for zero components; boundary touches count as hits (all comparisons
  inclusive).  A 0 * inf NaN arising from an origin sitting exactly on a
  slab plane is treated as "no constraint", which matches the inclusive
  rule.
* Triangle test: Moller-Trumbore with rays rejected as parallel when
  |det| <= 1e-9; barycentric acceptance is inclusive (u >= 0, v >= 0,
  u + v <= 1), so a ray through the interior of a shared edge can report
  a hit on both face-on triangles (the deterministic traversal order
  breaks the tie), while an edge-on neighbour is rejected by the
  determinant cutoff.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import NonFiniteInput

log = logging.getLogger(__name__)

DET_EPS = 1e-9
DEGENERATE_AREA_EPS = 1e-12
DIRECTION_NORM_TOL = 1e-4


class RayKind(Enum):
    HIT_ANY = "hit_any"
    CLOSEST_HIT = "closest_hit"


def vec3(x, y, z) -> np.ndarray:
    """Build a float32 3-vector, rejecting non-finite components."""
    v = np.array([x, y, z], dtype=np.float32)
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput(f"non-finite vector component in ({x}, {y}, {z})")
    return v


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float32)
    if a.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteInput("non-finite vector component")
    return a


@dataclass(frozen=True)
class Ray:
    """A ray with a parametric extent and a query kind.

    ``direction`` must be unit length (within 1e-4); origin and direction
    are stored as float32 because their exact bit patterns feed the
    predictor hash.
    """

    origin: np.ndarray
    direction: np.ndarray
    t_min: float = 0.0
    t_max: float = math.inf
    kind: RayKind = RayKind.CLOSEST_HIT

    def __post_init__(self):
        object.__setattr__(self, "origin", _as_vec3(self.origin))
        object.__setattr__(self, "direction", _as_vec3(self.direction))
        n = float(np.linalg.norm(self.direction.astype(np.float64)))
        if abs(n - 1.0) > DIRECTION_NORM_TOL:
            raise ValueError(f"direction must be unit length, |d| = {n}")
        if self.t_min < 0.0:
            raise ValueError("t_min must be >= 0")
        if not self.t_max > self.t_min:
            raise ValueError("t_max must be > t_min")


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box; ``min <= max`` componentwise."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min", _as_vec3(self.min))
        object.__setattr__(self, "max", _as_vec3(self.max))
        if not np.all(self.min <= self.max):
            raise ValueError("Aabb requires min <= max componentwise")

    def contains_point(self, p) -> bool:
        p = np.asarray(p, dtype=np.float32)
        return bool(np.all(self.min <= p) and np.all(p <= self.max))


@dataclass(frozen=True)
class Triangle:
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "v0", _as_vec3(self.v0))
        object.__setattr__(self, "v1", _as_vec3(self.v1))
        object.__setattr__(self, "v2", _as_vec3(self.v2))

    @property
    def area(self) -> float:
        e1 = self.v1.astype(np.float64) - self.v0.astype(np.float64)
        e2 = self.v2.astype(np.float64) - self.v0.astype(np.float64)
        return 0.5 * float(np.linalg.norm(np.cross(e1, e2)))


@dataclass
class HitRecord:
    """Closest or first intersection along a ray.

    ``leaf_node`` is the BVH leaf that produced the hit (-1 when the hit
    came from a bare triangle test outside any tree).
    """

    t: float
    triangle_id: int
    leaf_node: int = -1
    u: float = 0.0
    v: float = 0.0


def ray_aabb_intersect(ray: Ray, box: Aabb):
    """Slab test; returns ``(hit, t_enter, t_exit)``.

    Total over all finite rays: zero direction components use the
    signed-infinity reciprocal convention and boundary touches count as
    hits.
    """
    o = ray.origin.astype(np.float64)
    d = ray.direction.astype(np.float64)
    bmin = box.min.astype(np.float64)
    bmax = box.max.astype(np.float64)
    tn = float(ray.t_min)
    tf = float(ray.t_max)
    for i in range(3):
        di = float(d[i])
        inv = 1.0 / di if di != 0.0 else math.copysign(math.inf, di)
        a = (float(bmin[i]) - float(o[i])) * inv
        b = (float(bmax[i]) - float(o[i])) * inv
        if inv < 0.0:
            a, b = b, a
        # NaN from 0 * inf compares false on purpose: an origin on the slab
        # plane of a parallel ray imposes no constraint (inclusive rule).
        if a > tn:
            tn = a
        if b < tf:
            tf = b
    return tn <= tf, tn, tf


def ray_triangle_intersect(ray: Ray, tri: Triangle) -> Optional[HitRecord]:
    """Moller-Trumbore test; returns the hit with t in range, or None."""
    o = ray.origin.astype(np.float64)
    d = ray.direction.astype(np.float64)
    v0 = tri.v0.astype(np.float64)
    e1 = tri.v1.astype(np.float64) - v0
    e2 = tri.v2.astype(np.float64) - v0
    pvec = np.cross(d, e2)
    det = float(np.dot(e1, pvec))
    if abs(det) <= DET_EPS:
        return None
    inv_det = 1.0 / det
    tvec = o - v0
    u = float(np.dot(tvec, pvec)) * inv_det
    if u < 0.0 or u > 1.0:
        return None
    qvec = np.cross(tvec, e1)
    v = float(np.dot(d, qvec)) * inv_det
    if v < 0.0 or u + v > 1.0:
        return None
    t = float(np.dot(e2, qvec)) * inv_det
    if t < ray.t_min or t > ray.t_max:
        return None
    return HitRecord(t=t, triangle_id=tri.id, u=u, v=v)


def drop_degenerate(triangles):
    """Filter out triangles with area <= 1e-12, logging how many fell."""
    kept = [t for t in triangles if t.area > DEGENERATE_AREA_EPS]
    dropped = len(triangles) - len(kept)
    if dropped:
        log.warning("dropped %d degenerate triangle(s) during ingestion", dropped)
    return kept
