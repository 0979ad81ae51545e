"""Independent oracles and small scene builders shared by the test suite.

The oracles deliberately avoid the package's compiled kernels: the
closest/any oracle is a vectorized all-triangles Moller-Trumbore sweep,
and the hash oracle slices the binary32 bit string directly.
"""

import struct

import numpy as np

from hrpp import Triangle, vec3

DET_EPS = 1e-9


def brute_force_closest(v0, v1, v2, o, d, t_min=0.0, t_max=np.inf):
    """All-triangles minimum-t search mirroring the documented edge rules.

    Returns (found, t, index) with ties broken by lowest triangle index.
    """
    v0 = np.asarray(v0, np.float64)
    v1 = np.asarray(v1, np.float64)
    v2 = np.asarray(v2, np.float64)
    o = np.asarray(o, np.float64)
    d = np.asarray(d, np.float64)
    e1 = v1 - v0
    e2 = v2 - v0
    pvec = np.cross(np.broadcast_to(d, e2.shape), e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_det = 1.0 / det
        tvec = o[None, :] - v0
        u = np.einsum("ij,ij->i", tvec, pvec) * inv_det
        qvec = np.cross(tvec, e1)
        v = (qvec @ d) * inv_det
        t = np.einsum("ij,ij->i", e2, qvec) * inv_det
    valid = ((np.abs(det) > DET_EPS) & (u >= 0.0) & (u <= 1.0)
             & (v >= 0.0) & (u + v <= 1.0) & (t >= t_min) & (t <= t_max))
    if not valid.any():
        return False, np.inf, -1
    t = np.where(valid, t, np.inf)
    idx = int(np.argmin(t))
    return True, float(t[idx]), idx


def brute_force_any(v0, v1, v2, o, d, t_min=0.0, t_max=np.inf):
    """Existence oracle: does any triangle intersect the ray's extent?"""
    return brute_force_closest(v0, v1, v2, o, d, t_min, t_max)[0]


def bitstring_float_hash(f, p):
    """Hash oracle by slicing the binary32 bit string of ``f``."""
    bits = struct.unpack("<I", struct.pack("<f", np.float32(f)))[0]
    s = f"{bits:032b}"
    sign, exponent, mantissa = s[0], s[1:9], s[9:32]
    return int(sign + exponent[:p] + mantissa[:p], 2)


def bitstring_key(origin, direction, p):
    ho = [bitstring_float_hash(c, p) for c in origin]
    hd = [bitstring_float_hash(c, p) for c in direction]
    lanes = (ho[0] ^ hd[2], ho[1] ^ hd[1], ho[2] ^ hd[0])
    return lanes[0] | (lanes[1] << 16) | (lanes[2] << 32)


def separated_strip(n=8):
    """n axis-separated triangles along +x; clean median splits."""
    tris = []
    for i in range(n):
        x = 2.0 * i
        tris.append(Triangle(vec3(x, 0.0, 0.0), vec3(x + 1.0, 0.0, 0.0),
                             vec3(x, 1.0, 0.0), id=i))
    return tris


def random_soup(n=256, seed=7, extent=4.0, size=0.6):
    rng = np.random.default_rng(seed)
    base = rng.uniform(-extent, extent, size=(n, 3))
    off1 = rng.uniform(-size, size, size=(n, 3))
    off2 = rng.uniform(-size, size, size=(n, 3))
    v0 = base.astype(np.float32)
    v1 = (base + off1).astype(np.float32)
    v2 = (base + off2).astype(np.float32)
    return [Triangle(v0[i], v1[i], v2[i], id=i) for i in range(n)]


def random_rays(n, seed=11, radius=9.0):
    """Inward-looking rays from a sphere shell; unit float32 directions."""
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(n, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    origins = (u * radius).astype(np.float32)
    target = rng.uniform(-2.0, 2.0, size=(n, 3))
    d = target - origins
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return origins, d.astype(np.float32)


def tiny_scene_dict(resolution=(32, 32), reflective_floor=False, lights=1):
    doc = {
        "version": 1,
        "camera": {
            "position": [0.0, 6.0, 8.0],
            "look_at": [0.0, 0.0, 0.0],
            "up": [0.0, 1.0, 0.0],
            "vertical_fov": 45.0,
            "resolution": list(resolution),
        },
        "lights": [
            {"position": [5.0, 9.0, 5.0], "intensity": [150.0, 150.0, 140.0]},
        ],
        "background": [0.1, 0.1, 0.12],
        "meshes": [
            {
                "generator": "grid",
                "params": {"n": 6, "size": 12.0},
                "albedo": [0.6, 0.62, 0.65],
                "reflective": bool(reflective_floor),
                "reflectance": 0.5,
            },
            {
                "generator": "spheres",
                "params": {"grid": 1, "tessellation": 8, "radius": 1.0},
                "albedo": [0.8, 0.4, 0.3],
            },
        ],
    }
    if lights > 1:
        doc["lights"].append(
            {"position": [-6.0, 7.0, -3.0], "intensity": [50.0, 55.0, 70.0]})
    return doc
