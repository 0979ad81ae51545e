"""Compiled single-ray and batch traversal kernels.

These mirror the reference predicates in :mod:`hrpp.geom` exactly:
float64 arithmetic over float32 inputs, inclusive slab boundaries with
signed-infinity reciprocals, and Moller-Trumbore with a 1e-9 determinant
cutoff.  Traversal pops a node, box-tests it (counted), and visits the
near child first by the sign of the ray direction on the node's split
axis (ties go left), which keeps limit-study runs bit-identical.

The BVH is passed as the flat arrays owned by :class:`hrpp.bvh.Bvh`.
"""

import math

import numpy as np
from numba import njit, prange

MAX_STACK = 512

DET_EPS = 1e-9


@njit(inline="always")
def _box_hit(bnx, bny, bnz, bxx, bxy, bxz, ox, oy, oz, ivx, ivy, ivz, t0, t1):
    tn = t0
    tf = t1
    a = (bnx - ox) * ivx
    b = (bxx - ox) * ivx
    if ivx < 0.0:
        a, b = b, a
    if a > tn:
        tn = a
    if b < tf:
        tf = b
    a = (bny - oy) * ivy
    b = (bxy - oy) * ivy
    if ivy < 0.0:
        a, b = b, a
    if a > tn:
        tn = a
    if b < tf:
        tf = b
    a = (bnz - oz) * ivz
    b = (bxz - oz) * ivz
    if ivz < 0.0:
        a, b = b, a
    if a > tn:
        tn = a
    if b < tf:
        tf = b
    return tn <= tf, tn


@njit(inline="always")
def _tri_test(tv0, tv1, tv2, k, ox, oy, oz, dx, dy, dz):
    """Returns (hit, t, u, v); range checks against t bounds happen in the caller."""
    ax = np.float64(tv0[k, 0])
    ay = np.float64(tv0[k, 1])
    az = np.float64(tv0[k, 2])
    e1x = np.float64(tv1[k, 0]) - ax
    e1y = np.float64(tv1[k, 1]) - ay
    e1z = np.float64(tv1[k, 2]) - az
    e2x = np.float64(tv2[k, 0]) - ax
    e2y = np.float64(tv2[k, 1]) - ay
    e2z = np.float64(tv2[k, 2]) - az
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) <= DET_EPS:
        return False, 0.0, 0.0, 0.0
    inv_det = 1.0 / det
    tx = ox - ax
    ty = oy - ay
    tz = oz - az
    u = (tx * px + ty * py + tz * pz) * inv_det
    if u < 0.0 or u > 1.0:
        return False, 0.0, 0.0, 0.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv_det
    if v < 0.0 or u + v > 1.0:
        return False, 0.0, 0.0, 0.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv_det
    return True, t, u, v


@njit(cache=True)
def trace_closest(bmin, bmax, left, right, axis, first, count, tv0, tv1, tv2,
                  ox, oy, oz, dx, dy, dz, rtmin, rtmax, start):
    """Closest hit within the subtree rooted at ``start``.

    Returns (found, t, slot, leaf, u, v, box_tests, tri_tests, visited)
    where ``slot`` indexes the BVH's reordered triangle arrays.
    """
    ivx = 1.0 / dx if dx != 0.0 else math.copysign(np.inf, dx)
    ivy = 1.0 / dy if dy != 0.0 else math.copysign(np.inf, dy)
    ivz = 1.0 / dz if dz != 0.0 else math.copysign(np.inf, dz)
    stack = np.empty(MAX_STACK, np.int32)
    stack[0] = start
    top = 1
    found = False
    best_t = rtmax
    best_slot = -1
    best_leaf = -1
    best_u = 0.0
    best_v = 0.0
    boxes = np.int64(0)
    tris = np.int64(0)
    visited = np.int64(0)
    while top > 0:
        top -= 1
        nd = stack[top]
        visited += 1
        boxes += 1
        hit, _ = _box_hit(np.float64(bmin[nd, 0]), np.float64(bmin[nd, 1]),
                          np.float64(bmin[nd, 2]), np.float64(bmax[nd, 0]),
                          np.float64(bmax[nd, 1]), np.float64(bmax[nd, 2]),
                          ox, oy, oz, ivx, ivy, ivz, rtmin, best_t)
        if not hit:
            continue
        l = left[nd]
        if l < 0:
            f = first[nd]
            for k in range(f, f + count[nd]):
                tris += 1
                th, t, u, v = _tri_test(tv0, tv1, tv2, k, ox, oy, oz, dx, dy, dz)
                if th and t >= rtmin and t <= rtmax:
                    if (not found) or t < best_t:
                        found = True
                        best_t = t
                        best_slot = k
                        best_leaf = nd
                        best_u = u
                        best_v = v
        else:
            ax = axis[nd]
            dval = dx
            if ax == 1:
                dval = dy
            elif ax == 2:
                dval = dz
            if dval >= 0.0:
                near = l
                far = right[nd]
            else:
                near = right[nd]
                far = l
            stack[top] = far
            top += 1
            stack[top] = near
            top += 1
    return found, best_t, best_slot, best_leaf, best_u, best_v, boxes, tris, visited


@njit(cache=True)
def trace_any(bmin, bmax, left, right, axis, first, count, tv0, tv1, tv2,
              ox, oy, oz, dx, dy, dz, rtmin, rtmax, start):
    """First hit found within the subtree rooted at ``start``; early exit."""
    ivx = 1.0 / dx if dx != 0.0 else math.copysign(np.inf, dx)
    ivy = 1.0 / dy if dy != 0.0 else math.copysign(np.inf, dy)
    ivz = 1.0 / dz if dz != 0.0 else math.copysign(np.inf, dz)
    stack = np.empty(MAX_STACK, np.int32)
    stack[0] = start
    top = 1
    boxes = np.int64(0)
    tris = np.int64(0)
    visited = np.int64(0)
    while top > 0:
        top -= 1
        nd = stack[top]
        visited += 1
        boxes += 1
        hit, _ = _box_hit(np.float64(bmin[nd, 0]), np.float64(bmin[nd, 1]),
                          np.float64(bmin[nd, 2]), np.float64(bmax[nd, 0]),
                          np.float64(bmax[nd, 1]), np.float64(bmax[nd, 2]),
                          ox, oy, oz, ivx, ivy, ivz, rtmin, rtmax)
        if not hit:
            continue
        l = left[nd]
        if l < 0:
            f = first[nd]
            for k in range(f, f + count[nd]):
                tris += 1
                th, t, u, v = _tri_test(tv0, tv1, tv2, k, ox, oy, oz, dx, dy, dz)
                if th and t >= rtmin and t <= rtmax:
                    return True, t, k, nd, u, v, boxes, tris, visited
        else:
            ax = axis[nd]
            dval = dx
            if ax == 1:
                dval = dy
            elif ax == 2:
                dval = dz
            if dval >= 0.0:
                near = l
                far = right[nd]
            else:
                near = right[nd]
                far = l
            stack[top] = far
            top += 1
            stack[top] = near
            top += 1
    return False, 0.0, -1, -1, 0.0, 0.0, boxes, tris, visited


@njit(cache=True, parallel=True)
def trace_closest_batch(bmin, bmax, left, right, axis, first, count, tv0, tv1, tv2,
                        O, D, tmins, tmaxs, start,
                        out_found, out_t, out_slot, out_leaf, out_u, out_v,
                        out_box, out_tri, out_vis):
    n = O.shape[0]
    for i in prange(n):
        f, t, slot, leaf, u, v, b, tr, vz = trace_closest(
            bmin, bmax, left, right, axis, first, count, tv0, tv1, tv2,
            O[i, 0], O[i, 1], O[i, 2], D[i, 0], D[i, 1], D[i, 2],
            tmins[i], tmaxs[i], start)
        out_found[i] = f
        out_t[i] = t
        out_slot[i] = slot
        out_leaf[i] = leaf
        out_u[i] = u
        out_v[i] = v
        out_box[i] = b
        out_tri[i] = tr
        out_vis[i] = vz


@njit(cache=True, parallel=True)
def trace_any_batch(bmin, bmax, left, right, axis, first, count, tv0, tv1, tv2,
                    O, D, tmins, tmaxs, start,
                    out_found, out_t, out_slot, out_leaf,
                    out_box, out_tri, out_vis):
    n = O.shape[0]
    for i in prange(n):
        f, t, slot, leaf, u, v, b, tr, vz = trace_any(
            bmin, bmax, left, right, axis, first, count, tv0, tv1, tv2,
            O[i, 0], O[i, 1], O[i, 2], D[i, 0], D[i, 1], D[i, 2],
            tmins[i], tmaxs[i], start)
        out_found[i] = f
        out_t[i] = t
        out_slot[i] = slot
        out_leaf[i] = leaf
        out_box[i] = b
        out_tri[i] = tr
        out_vis[i] = vz


@njit(cache=True)
def eval_entry_closest(bmin, bmax, left, right, axis, first, count, tv0, tv1, tv2,
                       nodes, n_nodes, ox, oy, oz, dx, dy, dz, rtmin, rtmax):
    """Evaluate every stored node independently and keep the minimal-t hit."""
    found = False
    best_t = np.inf
    best_slot = -1
    best_leaf = -1
    best_u = 0.0
    best_v = 0.0
    boxes = np.int64(0)
    tris = np.int64(0)
    visited = np.int64(0)
    for j in range(n_nodes):
        f, t, slot, leaf, u, v, b, tr, vz = trace_closest(
            bmin, bmax, left, right, axis, first, count, tv0, tv1, tv2,
            ox, oy, oz, dx, dy, dz, rtmin, rtmax, nodes[j])
        boxes += b
        tris += tr
        visited += vz
        if f and ((not found) or t < best_t):
            found = True
            best_t = t
            best_slot = slot
            best_leaf = leaf
            best_u = u
            best_v = v
    return found, best_t, best_slot, best_leaf, best_u, best_v, boxes, tris, visited


@njit(cache=True)
def eval_entry_any(bmin, bmax, left, right, axis, first, count, tv0, tv1, tv2,
                   nodes, n_nodes, ox, oy, oz, dx, dy, dz, rtmin, rtmax):
    """Evaluate stored nodes in entry order, stopping at the first valid hit."""
    boxes = np.int64(0)
    tris = np.int64(0)
    visited = np.int64(0)
    for j in range(n_nodes):
        f, t, slot, leaf, u, v, b, tr, vz = trace_any(
            bmin, bmax, left, right, axis, first, count, tv0, tv1, tv2,
            ox, oy, oz, dx, dy, dz, rtmin, rtmax, nodes[j])
        boxes += b
        tris += tr
        visited += vz
        if f:
            return True, t, slot, leaf, u, v, boxes, tris, visited
    return False, 0.0, -1, -1, 0.0, 0.0, boxes, tris, visited
