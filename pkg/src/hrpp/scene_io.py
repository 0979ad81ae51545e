"""Scene ingestion: OBJ meshes, JSON scene descriptions, procedural generators.

The JSON schema (version 1) is documented in the README.  Only the
``v``/``f`` records of Wavefront OBJ are honoured; faces are
fan-triangulated, 1-based and negative indices are supported, everything
else is skipped with a warning.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (EmptyScene, IndexOutOfRange, ParseError, SceneError,
                     UnknownGenerator)
from .geom import DEGENERATE_AREA_EPS, Triangle, drop_degenerate, vec3
from .tracer import Camera, PointLight

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

DEFAULT_ALBEDO = (0.75, 0.75, 0.75)
DEFAULT_REFLECTANCE = 0.8


# -- OBJ --------------------------------------------------------------------


def load_obj(path) -> list[Triangle]:
    """Parse ``v``/``f`` records; polygons are fan-triangulated."""
    path = Path(path)
    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    skipped = 0
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            toks = raw.split()
            if not toks or toks[0].startswith("#"):
                continue
            rec = toks[0]
            if rec == "v":
                if len(toks) < 4:
                    raise ParseError("vertex record needs 3 coordinates",
                                     path=path, line=lineno)
                try:
                    verts.append((float(toks[1]), float(toks[2]), float(toks[3])))
                except ValueError:
                    raise ParseError(f"bad vertex coordinate in {toks[1:4]}",
                                     path=path, line=lineno)
            elif rec == "f":
                if len(toks) < 4:
                    raise ParseError("face record needs at least 3 vertices",
                                     path=path, line=lineno)
                idxs = []
                for tok in toks[1:]:
                    vstr = tok.split("/")[0]
                    try:
                        i = int(vstr)
                    except ValueError:
                        raise ParseError(f"bad face index {tok!r}",
                                         path=path, line=lineno)
                    if i == 0:
                        raise IndexOutOfRange("face index 0 (OBJ is 1-based)",
                                              path=path, line=lineno)
                    j = i - 1 if i > 0 else len(verts) + i
                    if not (0 <= j < len(verts)):
                        raise IndexOutOfRange(
                            f"face index {i} out of range (have {len(verts)} vertices)",
                            path=path, line=lineno)
                    idxs.append(j)
                for k in range(1, len(idxs) - 1):
                    faces.append((idxs[0], idxs[k], idxs[k + 1]))
            else:
                skipped += 1
    if skipped:
        log.warning("%s: skipped %d unsupported OBJ record(s)", path, skipped)
    va = np.array(verts, dtype=np.float32).reshape(-1, 3)
    tris = [Triangle(va[a], va[b], va[c], id=i)
            for i, (a, b, c) in enumerate(faces)]
    tris = drop_degenerate(tris)
    return [Triangle(t.v0, t.v1, t.v2, id=i) for i, t in enumerate(tris)]


def save_obj(path, triangles: Sequence[Triangle]):
    """Write one v-triple per triangle; reloads to an identical set."""
    with open(path, "w", encoding="utf-8") as f:
        for t in triangles:
            for v in (t.v0, t.v1, t.v2):
                f.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for i in range(len(triangles)):
            base = 3 * i
            f.write(f"f {base + 1} {base + 2} {base + 3}\n")


# -- procedural generators -----------------------------------------------------


def _grid(params: dict) -> list[Triangle]:
    n = int(params.get("n", 16))
    size = float(params.get("size", 10.0))
    y = float(params.get("y", 0.0))
    if n < 1:
        raise SceneError("grid generator needs n >= 1")
    xs = np.linspace(-size / 2.0, size / 2.0, n + 1)
    tris = []
    tid = 0
    for j in range(n):
        for i in range(n):
            x0, x1 = xs[i], xs[i + 1]
            z0, z1 = xs[j], xs[j + 1]
            a = vec3(x0, y, z0)
            b = vec3(x1, y, z0)
            c = vec3(x1, y, z1)
            d = vec3(x0, y, z1)
            tris.append(Triangle(a, c, b, id=tid)); tid += 1
            tris.append(Triangle(a, d, c, id=tid)); tid += 1
    return tris


def _uv_sphere(center, radius: float, seg: int, tid0: int) -> list[Triangle]:
    """2 * seg * (seg - 1) triangles: seg slices around, seg stacks down."""
    cx, cy, cz = center
    ring = []
    for st in range(seg + 1):
        phi = math.pi * st / seg
        for sl in range(seg):
            theta = 2.0 * math.pi * sl / seg
            x = cx + radius * math.sin(phi) * math.cos(theta)
            y = cy + radius * math.cos(phi)
            z = cz + radius * math.sin(phi) * math.sin(theta)
            ring.append((x, y, z))
    pts = np.array(ring, dtype=np.float32).reshape(seg + 1, seg, 3)
    tris = []
    tid = tid0
    for st in range(seg):
        for sl in range(seg):
            sl1 = (sl + 1) % seg
            a = pts[st, sl]
            b = pts[st, sl1]
            c = pts[st + 1, sl1]
            d = pts[st + 1, sl]
            if st > 0:
                tris.append(Triangle(a, b, c, id=tid)); tid += 1
            if st < seg - 1:
                tris.append(Triangle(a, c, d, id=tid)); tid += 1
    return tris


def _spheres(params: dict) -> list[Triangle]:
    grid = int(params.get("grid", 4))
    seg = int(params.get("tessellation", 16))
    radius = float(params.get("radius", 0.9))
    spacing = float(params.get("spacing", 2.5))
    y = float(params.get("y", radius))
    if grid < 1 or seg < 3:
        raise SceneError("spheres generator needs grid >= 1 and tessellation >= 3")
    tris: list[Triangle] = []
    half = (grid - 1) / 2.0
    for gz in range(grid):
        for gx in range(grid):
            cx = (gx - half) * spacing
            cz = (gz - half) * spacing
            tris.extend(_uv_sphere((cx, y, cz), radius, seg, len(tris)))
    return tris


def _cube_tris(lo, hi, tid0: int) -> list[Triangle]:
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    p = [vec3(x0, y0, z0), vec3(x1, y0, z0), vec3(x1, y1, z0), vec3(x0, y1, z0),
         vec3(x0, y0, z1), vec3(x1, y0, z1), vec3(x1, y1, z1), vec3(x0, y1, z1)]
    quads = [(0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4),
             (2, 3, 7, 6), (0, 4, 7, 3), (1, 2, 6, 5)]
    tris = []
    tid = tid0
    for a, b, c, d in quads:
        tris.append(Triangle(p[a], p[b], p[c], id=tid)); tid += 1
        tris.append(Triangle(p[a], p[c], p[d], id=tid)); tid += 1
    return tris


def _menger(params: dict) -> list[Triangle]:
    level = int(params.get("level", 2))
    size = float(params.get("size", 3.0))
    if not (0 <= level <= 3):
        raise SceneError("menger generator supports level 0..3")
    half = size / 2.0
    cubes = [(-half, -half, -half, size)]
    for _ in range(level):
        nxt = []
        for (x, y, z, s) in cubes:
            s3 = s / 3.0
            for i in range(3):
                for j in range(3):
                    for k in range(3):
                        if (i == 1) + (j == 1) + (k == 1) >= 2:
                            continue
                        nxt.append((x + i * s3, y + j * s3, z + k * s3, s3))
        cubes = nxt
    tris: list[Triangle] = []
    for (x, y, z, s) in cubes:
        tris.extend(_cube_tris((x, y, z), (x + s, y + s, z + s), len(tris)))
    return tris


_GENERATORS = {"grid": _grid, "spheres": _spheres, "menger": _menger}


def generate_scene(name: str, params: Optional[dict] = None) -> list[Triangle]:
    """Deterministic procedural geometry; see the README for parameters."""
    gen = _GENERATORS.get(name)
    if gen is None:
        raise UnknownGenerator(
            f"unknown generator {name!r}; available: {sorted(_GENERATORS)}")
    return gen(params or {})


# -- scene descriptions ----------------------------------------------------------


@dataclass
class Scene:
    """Runtime scene: flattened triangles plus per-mesh shading data."""

    name: str
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    tri_mesh: np.ndarray
    mesh_albedo: np.ndarray
    mesh_reflective: np.ndarray
    mesh_reflectance: np.ndarray
    camera: Camera
    lights: list[PointLight]
    background: np.ndarray

    @property
    def triangle_count(self) -> int:
        return self.v0.shape[0]

    def triangles(self) -> list[Triangle]:
        return [Triangle(self.v0[i], self.v1[i], self.v2[i], id=i)
                for i in range(self.triangle_count)]


def _vec(data, what, n=3):
    try:
        a = np.asarray(data, dtype=np.float64)
    except (TypeError, ValueError):
        raise SceneError(f"{what} must be a list of {n} numbers")
    if a.shape != (n,):
        raise SceneError(f"{what} must have exactly {n} components")
    if not np.all(np.isfinite(a)):
        raise SceneError(f"{what} must be finite")
    return a


def _apply_transform(tris: list[Triangle], matrix) -> list[Triangle]:
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (4, 4):
        raise SceneError("transform must be a 4x4 matrix")
    if abs(np.linalg.det(m)) < 1e-12:
        raise SceneError("transform must be invertible")
    lin = m[:3, :3]
    trans = m[:3, 3]
    out = []
    for t in tris:
        vs = [lin @ v.astype(np.float64) + trans for v in (t.v0, t.v1, t.v2)]
        out.append(Triangle(np.asarray(vs[0], dtype=np.float32),
                            np.asarray(vs[1], dtype=np.float32),
                            np.asarray(vs[2], dtype=np.float32), id=t.id))
    return out


def load_scene(path) -> Scene:
    """Load a version-1 JSON scene description."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", path=path, line=e.lineno)
    return scene_from_dict(doc, name=path.stem, base_dir=path.parent)


def scene_from_dict(doc: dict, name: str = "scene",
                    base_dir: Optional[Path] = None) -> Scene:
    if doc.get("version") != SCHEMA_VERSION:
        raise SceneError(
            f"unsupported scene schema version {doc.get('version')!r}; expected {SCHEMA_VERSION}")
    meshes = doc.get("meshes")
    if not meshes:
        raise SceneError("scene needs at least one mesh")
    lights_doc = doc.get("lights")
    if not lights_doc:
        raise SceneError("scene needs at least one light")

    all_v0, all_v1, all_v2, tri_mesh = [], [], [], []
    albedo, reflective, reflectance = [], [], []
    for mi, mesh in enumerate(meshes):
        if "generator" in mesh:
            tris = generate_scene(mesh["generator"], mesh.get("params"))
        elif "obj" in mesh:
            obj_path = Path(mesh["obj"])
            if base_dir is not None and not obj_path.is_absolute():
                obj_path = base_dir / obj_path
            tris = load_obj(obj_path)
        else:
            raise SceneError(f"mesh {mi} needs either 'generator' or 'obj'")
        if "transform" in mesh:
            tris = _apply_transform(tris, mesh["transform"])
        tris = drop_degenerate(tris)
        for t in tris:
            all_v0.append(t.v0)
            all_v1.append(t.v1)
            all_v2.append(t.v2)
            tri_mesh.append(mi)
        albedo.append(_vec(mesh.get("albedo", DEFAULT_ALBEDO), f"mesh {mi} albedo"))
        reflective.append(bool(mesh.get("reflective", False)))
        reflectance.append(float(mesh.get("reflectance", DEFAULT_REFLECTANCE)))

    if not all_v0:
        raise EmptyScene("scene has no valid triangles")

    cam_doc = doc.get("camera")
    if cam_doc is None:
        raise SceneError("scene needs a camera")
    res = cam_doc.get("resolution", [256, 256])
    if (not isinstance(res, (list, tuple)) or len(res) != 2
            or any(int(r) < 1 for r in res)):
        raise SceneError("camera resolution must be [width, height] >= 1")
    camera = Camera(
        position=_vec(cam_doc.get("position"), "camera position").astype(np.float32),
        look_at=_vec(cam_doc.get("look_at"), "camera look_at").astype(np.float32),
        up=_vec(cam_doc.get("up", [0.0, 1.0, 0.0]), "camera up").astype(np.float32),
        vertical_fov=float(cam_doc.get("vertical_fov", 45.0)),
        resolution=(int(res[0]), int(res[1])),
    )
    lights = []
    for li, light in enumerate(lights_doc):
        lights.append(PointLight(
            position=_vec(light.get("position"), f"light {li} position").astype(np.float32),
            intensity=_vec(light.get("intensity", [1, 1, 1]), f"light {li} intensity").astype(np.float32),
        ))
    background = _vec(doc.get("background", [0.0, 0.0, 0.0]), "background").astype(np.float32)

    return Scene(
        name=name,
        v0=np.ascontiguousarray(np.stack(all_v0), dtype=np.float32),
        v1=np.ascontiguousarray(np.stack(all_v1), dtype=np.float32),
        v2=np.ascontiguousarray(np.stack(all_v2), dtype=np.float32),
        tri_mesh=np.array(tri_mesh, dtype=np.int32),
        mesh_albedo=np.array(albedo, dtype=np.float32).reshape(-1, 3),
        mesh_reflective=np.array(reflective, dtype=np.bool_),
        mesh_reflectance=np.array(reflectance, dtype=np.float32),
        camera=camera,
        lights=lights,
        background=background,
    )


# -- bundled scenes -----------------------------------------------------------------


def bundled_scene_names() -> list[str]:
    root = resources.files("hrpp").joinpath("data/scenes")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_scene_path(name: str) -> Path:
    p = resources.files("hrpp").joinpath(f"data/scenes/{name}.json")
    if not p.is_file():
        raise FileNotFoundError(
            f"no bundled scene {name!r}; available: {bundled_scene_names()}")
    return Path(str(p))


def load_bundled_scene(name: str) -> Scene:
    return load_scene(bundled_scene_path(name))
