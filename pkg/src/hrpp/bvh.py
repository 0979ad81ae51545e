"""Binary BVH: binned-SAH builder, instrumented traversal, ancestor lookup.

The tree is stored flat in structure-of-arrays form (root at index 0)
with parent links so the predictor's go-up-level can walk toward the
root.  Triangles are reordered so each leaf references a contiguous
slot range; ``tri_ids[slot]`` recovers the original primitive index.

Builder: binned SAH (16 bins) over all three axes with a stable median
split fallback when SAH finds no improving split.  Groups of coincident
centroids that cannot be separated become an oversized leaf (logged)
rather than recursing forever.  Traversal visits the near child first by
the sign of the ray direction on the split axis, ties to the left, so
runs are bit-identical for a fixed ray stream.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import EmptyScene
from .geom import (DEGENERATE_AREA_EPS, Aabb, HitRecord, Ray, RayKind,
                   Triangle)

log = logging.getLogger(__name__)

SAH_BINS = 16
DEFAULT_MAX_LEAF_SIZE = 4
# Headroom below the kernels' fixed traversal stack.
_MAX_SUPPORTED_DEPTH = kernels.MAX_STACK // 2 - 2


@dataclass
class TraversalCounters:
    """Per-run tallies; counters only ever increase within a run."""

    box_tests: int = 0
    tri_tests: int = 0
    nodes_visited: int = 0

    def add(self, box_tests=0, tri_tests=0, nodes_visited=0):
        self.box_tests += int(box_tests)
        self.tri_tests += int(tri_tests)
        self.nodes_visited += int(nodes_visited)

    def merge(self, other: "TraversalCounters"):
        self.add(other.box_tests, other.tri_tests, other.nodes_visited)


@dataclass(frozen=True)
class BvhNode:
    """Friendly view of one flat node."""

    index: int
    bounds: Aabb
    parent: Optional[int]
    depth: int
    left: Optional[int] = None
    right: Optional[int] = None
    first_prim: Optional[int] = None
    prim_count: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.first_prim is not None


class Bvh:
    """Flat binary BVH over a fixed triangle set."""

    def __init__(self, bmin, bmax, left, right, axis, first, count, parent,
                 depth, tv0, tv1, tv2, tri_ids, max_depth):
        self.bmin = bmin
        self.bmax = bmax
        self.left = left
        self.right = right
        self.axis = axis
        self.first = first
        self.count = count
        self.parent = parent
        self.depth = depth
        self.tv0 = tv0
        self.tv1 = tv1
        self.tv2 = tv2
        self.tri_ids = tri_ids
        self.max_depth = int(max_depth)
        self._ancestor_luts: dict[int, np.ndarray] = {}
        self._slot_normals: Optional[np.ndarray] = None

    # -- structure ---------------------------------------------------------

    @property
    def node_count(self) -> int:
        return self.bmin.shape[0]

    @property
    def triangle_count(self) -> int:
        return self.tv0.shape[0]

    @property
    def prim_order(self) -> np.ndarray:
        """Permutation: reordered slot -> original triangle id."""
        return self.tri_ids

    def is_leaf(self, i: int) -> bool:
        return self.left[i] < 0

    def node(self, i: int) -> BvhNode:
        bounds = Aabb(self.bmin[i].copy(), self.bmax[i].copy())
        parent = int(self.parent[i])
        par = None if parent < 0 else parent
        if self.is_leaf(i):
            return BvhNode(i, bounds, par, int(self.depth[i]),
                           first_prim=int(self.first[i]),
                           prim_count=int(self.count[i]))
        return BvhNode(i, bounds, par, int(self.depth[i]),
                       left=int(self.left[i]), right=int(self.right[i]))

    def leaf_indices(self) -> np.ndarray:
        return np.nonzero(self.left < 0)[0].astype(np.int32)

    def _arrays(self):
        return (self.bmin, self.bmax, self.left, self.right, self.axis,
                self.first, self.count, self.tv0, self.tv1, self.tv2)

    def slot_normals(self) -> np.ndarray:
        """Unit geometric normals per reordered triangle slot (float64)."""
        if self._slot_normals is None:
            e1 = self.tv1.astype(np.float64) - self.tv0.astype(np.float64)
            e2 = self.tv2.astype(np.float64) - self.tv0.astype(np.float64)
            n = np.cross(e1, e2)
            n /= np.linalg.norm(n, axis=1, keepdims=True)
            self._slot_normals = n
        return self._slot_normals

    def ancestor_lut(self, go_up_level: int) -> np.ndarray:
        """node index -> ancestor ``go_up_level`` steps up, clamped at root."""
        if go_up_level < 0:
            raise ValueError("go_up_level must be >= 0")
        lut = self._ancestor_luts.get(go_up_level)
        if lut is None:
            lut = np.arange(self.node_count, dtype=np.int32)
            for _ in range(go_up_level):
                up = self.parent[lut]
                lut = np.where(up < 0, lut, up).astype(np.int32)
            self._ancestor_luts[go_up_level] = lut
        return lut


def ancestor_at(bvh: Bvh, leaf: int, go_up_level: int) -> int:
    """Follow ``go_up_level`` parent links from ``leaf``, clamping at the root."""
    if not (0 <= leaf < bvh.node_count):
        raise ValueError(f"node index {leaf} out of range")
    if go_up_level < 0:
        raise ValueError("go_up_level must be >= 0")
    node = int(leaf)
    for _ in range(go_up_level):
        up = int(bvh.parent[node])
        if up < 0:
            break
        node = up
    return node


# -- build ------------------------------------------------------------------


def build_bvh(triangles: Sequence[Triangle],
              max_leaf_size: int = DEFAULT_MAX_LEAF_SIZE) -> Bvh:
    """Build a BVH from Triangle objects; deterministic for a fixed order."""
    if len(triangles) == 0:
        raise EmptyScene("no triangles supplied")
    v0 = np.array([t.v0 for t in triangles], dtype=np.float32).reshape(-1, 3)
    v1 = np.array([t.v1 for t in triangles], dtype=np.float32).reshape(-1, 3)
    v2 = np.array([t.v2 for t in triangles], dtype=np.float32).reshape(-1, 3)
    ids = np.array([t.id for t in triangles], dtype=np.int32)
    return build_bvh_from_arrays(v0, v1, v2, ids=ids, max_leaf_size=max_leaf_size)


def build_bvh_from_arrays(v0, v1, v2, ids=None,
                          max_leaf_size: int = DEFAULT_MAX_LEAF_SIZE) -> Bvh:
    v0 = np.ascontiguousarray(v0, dtype=np.float32)
    v1 = np.ascontiguousarray(v1, dtype=np.float32)
    v2 = np.ascontiguousarray(v2, dtype=np.float32)
    if ids is None:
        ids = np.arange(v0.shape[0], dtype=np.int32)
    ids = np.asarray(ids, dtype=np.int32)
    if max_leaf_size < 1:
        raise ValueError("max_leaf_size must be >= 1")

    keep = _area2_f64(v0, v1, v2) > 2.0 * DEGENERATE_AREA_EPS
    dropped = int(v0.shape[0] - keep.sum())
    if dropped:
        log.warning("dropped %d degenerate triangle(s) before BVH build", dropped)
        v0, v1, v2, ids = v0[keep], v1[keep], v2[keep], ids[keep]
    m = v0.shape[0]
    if m == 0:
        raise EmptyScene("no valid triangles remain after filtering")

    tb_min = np.minimum(np.minimum(v0, v1), v2)
    tb_max = np.maximum(np.maximum(v0, v1), v2)
    cent = (tb_min.astype(np.float64) + tb_max.astype(np.float64)) * 0.5

    n_bmin, n_bmax, n_left, n_right = [], [], [], []
    n_axis, n_first, n_count, n_parent, n_depth = [], [], [], [], []
    order_chunks = []
    order_len = 0
    max_depth = 0
    oversized = 0

    # (triangle index array, parent node, is_left_child, depth)
    stack = [(np.arange(m, dtype=np.int64), -1, False, 0)]
    while stack:
        idx, parent, is_left, depth = stack.pop()
        me = len(n_bmin)
        n_bmin.append(tb_min[idx].min(axis=0))
        n_bmax.append(tb_max[idx].max(axis=0))
        n_left.append(-1)
        n_right.append(-1)
        n_axis.append(0)
        n_first.append(-1)
        n_count.append(0)
        n_parent.append(parent)
        n_depth.append(depth)
        if parent >= 0:
            if is_left:
                n_left[parent] = me
            else:
                n_right[parent] = me

        n = idx.shape[0]
        split = None
        if n > 1:
            split = _find_split(idx, cent, tb_min, tb_max, n, max_leaf_size)
        if split is None:
            if n > max_leaf_size:
                oversized += 1
                log.warning(
                    "coincident centroids: emitting oversized leaf with %d prims", n)
            n_first[me] = order_len
            n_count[me] = n
            order_chunks.append(idx)
            order_len += n
            max_depth = max(max_depth, depth)
            continue
        ax, left_idx, right_idx = split
        n_axis[me] = ax
        if depth + 1 > _MAX_SUPPORTED_DEPTH:
            raise RuntimeError(
                f"BVH depth exceeds supported maximum {_MAX_SUPPORTED_DEPTH}")
        # Push right first so the left child is created (and indexed) first.
        stack.append((right_idx, me, False, depth + 1))
        stack.append((left_idx, me, True, depth + 1))

    order = np.concatenate(order_chunks)
    bvh = Bvh(
        bmin=np.ascontiguousarray(np.stack(n_bmin), dtype=np.float32),
        bmax=np.ascontiguousarray(np.stack(n_bmax), dtype=np.float32),
        left=np.array(n_left, dtype=np.int32),
        right=np.array(n_right, dtype=np.int32),
        axis=np.array(n_axis, dtype=np.int8),
        first=np.array(n_first, dtype=np.int32),
        count=np.array(n_count, dtype=np.int32),
        parent=np.array(n_parent, dtype=np.int32),
        depth=np.array(n_depth, dtype=np.int32),
        tv0=np.ascontiguousarray(v0[order]),
        tv1=np.ascontiguousarray(v1[order]),
        tv2=np.ascontiguousarray(v2[order]),
        tri_ids=np.ascontiguousarray(ids[order]),
        max_depth=max_depth,
    )
    return bvh


def _area2_f64(v0, v1, v2):
    e1 = v1.astype(np.float64) - v0.astype(np.float64)
    e2 = v2.astype(np.float64) - v0.astype(np.float64)
    return np.linalg.norm(np.cross(e1, e2), axis=1)


def _half_area(lo, hi):
    d = np.maximum(hi - lo, 0.0)
    return d[..., 0] * d[..., 1] + d[..., 1] * d[..., 2] + d[..., 2] * d[..., 0]


def _find_split(idx, cent, tb_min, tb_max, n, max_leaf_size):
    """Pick the best binned-SAH split; returns (axis, left_idx, right_idx).

    Returns None when every centroid coincides (nothing can separate the
    group).  When SAH finds no improving split the result is a stable
    median split for oversized nodes, or None for nodes small enough to
    become a leaf.
    """
    c = cent[idx]
    cmin = c.min(axis=0)
    cmax = c.max(axis=0)
    extent = cmax - cmin
    best_cost = np.inf
    best = None

    for ax in range(3):
        if extent[ax] <= 0.0:
            continue
        scale = SAH_BINS / extent[ax]
        bins = np.minimum(((c[:, ax] - cmin[ax]) * scale).astype(np.int64),
                          SAH_BINS - 1)
        counts = np.bincount(bins, minlength=SAH_BINS)
        bin_lo = np.full((SAH_BINS, 3), np.inf)
        bin_hi = np.full((SAH_BINS, 3), -np.inf)
        lo = tb_min[idx].astype(np.float64)
        hi = tb_max[idx].astype(np.float64)
        for b in range(SAH_BINS):
            mask = bins == b
            if counts[b]:
                bin_lo[b] = lo[mask].min(axis=0)
                bin_hi[b] = hi[mask].max(axis=0)
        # Prefix/suffix sweeps over the bin boundaries.
        lo_l = np.minimum.accumulate(bin_lo, axis=0)
        hi_l = np.maximum.accumulate(bin_hi, axis=0)
        lo_r = np.minimum.accumulate(bin_lo[::-1], axis=0)[::-1]
        hi_r = np.maximum.accumulate(bin_hi[::-1], axis=0)[::-1]
        cnt_l = np.cumsum(counts)
        cnt_r = n - cnt_l
        for k in range(SAH_BINS - 1):
            nl = cnt_l[k]
            nr = cnt_r[k]
            if nl == 0 or nr == 0:
                continue
            cost = (_half_area(lo_l[k], hi_l[k]) * nl
                    + _half_area(lo_r[k + 1], hi_r[k + 1]) * nr)
            if cost < best_cost:
                best_cost = cost
                best = (ax, bins, k)

    if np.all(extent <= 0.0):
        return None

    parent_area = _half_area(tb_min[idx].astype(np.float64).min(axis=0),
                             tb_max[idx].astype(np.float64).max(axis=0))
    improving = (best is not None and parent_area > 0.0
                 and 1.0 + best_cost / parent_area < float(n))

    if improving:
        ax, bins, k = best
        mask = bins <= k
        return ax, idx[mask], idx[~mask]
    if n <= max_leaf_size:
        return None
    # Forced split: stable median on the widest centroid axis.
    ax = int(np.argmax(extent))
    order = np.argsort(c[:, ax], kind="stable")
    half = n // 2
    return ax, idx[order[:half]], idx[order[half:]]


# -- traversal ---------------------------------------------------------------


def intersect_closest(bvh: Bvh, ray: Ray,
                      counters: TraversalCounters) -> Optional[HitRecord]:
    """Globally minimal-t hit; counts every box and triangle test."""
    if ray.kind is not RayKind.CLOSEST_HIT:
        raise ValueError("intersect_closest requires a CLOSEST_HIT ray")
    return intersect_from_node(bvh, 0, ray, counters)


def intersect_any(bvh: Bvh, ray: Ray,
                  counters: TraversalCounters) -> Optional[HitRecord]:
    """Any valid hit under the deterministic child order; early exit."""
    if ray.kind is not RayKind.HIT_ANY:
        raise ValueError("intersect_any requires a HIT_ANY ray")
    return intersect_from_node(bvh, 0, ray, counters)


def intersect_from_node(bvh: Bvh, start: int, ray: Ray,
                        counters: TraversalCounters) -> Optional[HitRecord]:
    """Traversal restricted to the subtree rooted at ``start``."""
    if not (0 <= start < bvh.node_count):
        raise ValueError(f"start node {start} out of range")
    o = ray.origin.astype(np.float64)
    d = ray.direction.astype(np.float64)
    kern = (kernels.trace_any if ray.kind is RayKind.HIT_ANY
            else kernels.trace_closest)
    found, t, slot, leaf, u, v, boxes, tris, visited = kern(
        *bvh._arrays(), o[0], o[1], o[2], d[0], d[1], d[2],
        float(ray.t_min), float(ray.t_max), start)
    counters.add(boxes, tris, visited)
    if not found:
        return None
    return HitRecord(t=float(t), triangle_id=int(bvh.tri_ids[slot]),
                     leaf_node=int(leaf), u=float(u), v=float(v))


def intersect_closest_batch(bvh: Bvh, O, D, tmins, tmaxs, start: int = 0):
    """Vectorized closest-hit traversal; returns a dict of per-ray arrays."""
    n = O.shape[0]
    O8 = np.ascontiguousarray(O, dtype=np.float64)
    D8 = np.ascontiguousarray(D, dtype=np.float64)
    out = {
        "found": np.zeros(n, np.bool_),
        "t": np.zeros(n, np.float64),
        "slot": np.zeros(n, np.int32),
        "leaf": np.zeros(n, np.int32),
        "u": np.zeros(n, np.float64),
        "v": np.zeros(n, np.float64),
        "box": np.zeros(n, np.int64),
        "tri": np.zeros(n, np.int64),
        "visited": np.zeros(n, np.int64),
    }
    kernels.trace_closest_batch(
        *bvh._arrays(), O8, D8,
        np.ascontiguousarray(tmins, dtype=np.float64),
        np.ascontiguousarray(tmaxs, dtype=np.float64), start,
        out["found"], out["t"], out["slot"], out["leaf"], out["u"], out["v"],
        out["box"], out["tri"], out["visited"])
    return out


def intersect_any_batch(bvh: Bvh, O, D, tmins, tmaxs, start: int = 0):
    n = O.shape[0]
    O8 = np.ascontiguousarray(O, dtype=np.float64)
    D8 = np.ascontiguousarray(D, dtype=np.float64)
    out = {
        "found": np.zeros(n, np.bool_),
        "t": np.zeros(n, np.float64),
        "slot": np.zeros(n, np.int32),
        "leaf": np.zeros(n, np.int32),
        "box": np.zeros(n, np.int64),
        "tri": np.zeros(n, np.int64),
        "visited": np.zeros(n, np.int64),
    }
    kernels.trace_any_batch(
        *bvh._arrays(), O8, D8,
        np.ascontiguousarray(tmins, dtype=np.float64),
        np.ascontiguousarray(tmaxs, dtype=np.float64), start,
        out["found"], out["t"], out["slot"], out["leaf"],
        out["box"], out["tri"], out["visited"])
    return out


# -- validation (used by the test suite) -------------------------------------


def validate(bvh: Bvh, max_leaf_size: int = None, bounds_eps: float = 1e-5):
    """Check structural invariants; raises AssertionError on violation."""
    n = bvh.node_count
    seen = np.zeros(n, np.bool_)
    stack = [0]
    leaf_depths = []
    while stack:
        i = stack.pop()
        assert not seen[i], f"node {i} reachable twice"
        seen[i] = True
        if bvh.is_leaf(i):
            assert bvh.count[i] >= 1, "empty leaf"
            leaf_depths.append(int(bvh.depth[i]))
            continue
        for c in (int(bvh.left[i]), int(bvh.right[i])):
            assert 0 <= c < n, "child index out of range"
            assert int(bvh.parent[c]) == i, "parent link mismatch"
            assert int(bvh.depth[c]) == int(bvh.depth[i]) + 1
            assert np.all(bvh.bmin[c] >= bvh.bmin[i] - bounds_eps)
            assert np.all(bvh.bmax[c] <= bvh.bmax[i] + bounds_eps)
            stack.append(c)
    assert seen.all(), "unreachable nodes"
    assert bvh.max_depth == max(leaf_depths), "max_depth mismatch"
    covered = np.zeros(bvh.triangle_count, np.bool_)
    for i in np.nonzero(bvh.left < 0)[0]:
        f, c = int(bvh.first[i]), int(bvh.count[i])
        assert not covered[f:f + c].any(), "overlapping leaf ranges"
        covered[f:f + c] = True
    assert covered.all(), "triangle slots not covered by leaves"
