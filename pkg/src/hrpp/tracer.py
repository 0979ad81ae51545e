"""Whitted-style renderer driving baseline, limit and live predictor modes.

Ray populations and their tables:

* primary rays (closest-hit) - camera rays, pixel-major / sample-minor;
* shadow rays (hit-any) - one per (hit, light), offset 1e-4 along the
  geometric normal (this perturbs hash inputs, deliberately documented);
* reflection rays (closest-hit) - perfect mirror bounces off reflective
  meshes, sharing the closest-hit table with primaries.

Waves are processed breadth-first: all primaries, then their shadow
rays, then the reflection wave, its shadow rays, and so on.  Within a
wave the predictor is consulted strictly in ray order, so runs are
bit-identical for a fixed seed regardless of the thread count (threads
only parallelize the ray-independent traversal batches).

Modes:

* baseline - no predictor; counters fill the denominators.
* limit - every ray runs both the predictor consult and the full
  traversal; shading always uses the full-traversal result, so the image
  is byte-identical to baseline, while skipped work is measured exactly.
* live - a true positive short-circuits shading with the predicted hit;
  anything else falls back to a full traversal and then trains.

Shading: Lambertian direct lighting per point light with inverse-square
falloff, gated by the shadow rays, plus a mirror term scaled by the mesh
reflectance.  Output images are written as binary PPM (P6, 8-bit) with
gamma 2.2 applied at write time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numba
import numpy as np

from . import kernels, metrics
from .bvh import Bvh, intersect_any_batch, intersect_closest_batch
from .errors import NonFiniteInput
from .geom import RayKind
from .metrics import RayKindStats
from .predictor import PredictorTable
from .rayhash import hash_rays
from .rng import unit_floats

SHADOW_OFFSET = 1e-4
WRONG_CLOSEST_EPS = 1e-9
GAMMA = 2.2

RAY_KIND_LABELS = ("primary", "shadow", "reflection")


class RenderMode(Enum):
    BASELINE = "baseline"
    LIMIT = "limit"
    LIVE = "live"


@dataclass(frozen=True)
class Camera:
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray
    vertical_fov: float
    resolution: tuple[int, int]

    def __post_init__(self):
        if not (0.0 < self.vertical_fov < 180.0):
            raise ValueError("vertical_fov must be in (0, 180) degrees")
        w, h = self.resolution
        if w < 1 or h < 1:
            raise ValueError("resolution must be at least 1x1")
        for name in ("position", "look_at", "up"):
            v = np.asarray(getattr(self, name), dtype=np.float32)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise ValueError(f"camera {name} must be a finite 3-vector")
            object.__setattr__(self, name, v)

    def basis(self):
        """Right-handed (forward, right, up) in float64."""
        fwd = self.look_at.astype(np.float64) - self.position.astype(np.float64)
        n = np.linalg.norm(fwd)
        if n == 0.0:
            raise ValueError("camera position and look_at coincide")
        fwd /= n
        right = np.cross(fwd, self.up.astype(np.float64))
        rn = np.linalg.norm(right)
        if rn == 0.0:
            raise ValueError("camera up vector is parallel to the view direction")
        right /= rn
        up = np.cross(right, fwd)
        return fwd, right, up


@dataclass(frozen=True)
class PointLight:
    position: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float32)
        i = np.asarray(self.intensity, dtype=np.float32)
        if p.shape != (3,) or not np.all(np.isfinite(p)):
            raise ValueError("light position must be a finite 3-vector")
        if i.shape != (3,) or np.any(i < 0):
            raise ValueError("light intensity must be non-negative RGB")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "intensity", i)


@dataclass
class RenderConfig:
    spp: int = 8
    max_reflection_depth: int = 2
    mode: RenderMode = RenderMode.BASELINE
    rng_seed: int = 0
    jitter: bool = True
    threads: int = 1
    capture_shadow_queries: bool = False
    capture_outcomes: bool = False

    def __post_init__(self):
        if self.spp < 1:
            raise ValueError("spp must be >= 1")
        if self.max_reflection_depth < 0:
            raise ValueError("max_reflection_depth must be >= 0")


@dataclass
class ShadowQueryLog:
    """Every shadow query issued, with the occlusion bit shading used."""

    origins: np.ndarray
    directions: np.ndarray
    t_max: np.ndarray
    occluded: np.ndarray


@dataclass
class OutcomeLog:
    """Per-consulted-ray records (limit mode), for accounting tests."""

    classification: np.ndarray  # 0=TP, 1=FP, 2=negative
    eval_box_tests: np.ndarray
    baseline_box_tests: np.ndarray
    predicted_t: np.ndarray
    predicted_slot: np.ndarray
    keys: np.ndarray


@dataclass
class RenderOutput:
    image: np.ndarray
    stats: dict[str, RayKindStats]
    table_stats: dict[str, Optional[metrics.TableStats]]
    mode: RenderMode
    shadow_log: Optional[ShadowQueryLog] = None
    outcome_logs: Optional[dict[str, OutcomeLog]] = None


def _stratum_grid(spp: int) -> tuple[int, int]:
    sx = max(1, int(math.sqrt(spp)))
    while spp % sx:
        sx -= 1
    return sx, spp // sx


def generate_primary_rays(camera: Camera, cfg: RenderConfig):
    """Seeded, stratified camera rays in pixel-major, sample-minor order.

    Returns float32 (n, 3) origin and unit direction arrays with
    n = width * height * spp.  With ``jitter=False`` every sample aims at
    the pixel centre, so a pixel's spp rays are bit-identical.
    """
    w, h = camera.resolution
    spp = cfg.spp
    n = w * h * spp
    ray_idx = np.arange(n, dtype=np.uint64)
    pixel = ray_idx // np.uint64(spp)
    sample = ray_idx % np.uint64(spp)
    px = (pixel % np.uint64(w)).astype(np.float64)
    py = (pixel // np.uint64(w)).astype(np.float64)

    if cfg.jitter:
        sx, sy = _stratum_grid(spp)
        six = (sample % np.uint64(sx)).astype(np.float64)
        siy = (sample // np.uint64(sx)).astype(np.float64)
        jx = unit_floats(cfg.rng_seed, pixel, sample, dim=0)
        jy = unit_floats(cfg.rng_seed, pixel, sample, dim=1)
        offx = (six + jx) / sx
        offy = (siy + jy) / sy
    else:
        offx = np.full(n, 0.5)
        offy = np.full(n, 0.5)

    fwd, right, up = camera.basis()
    tan_half = math.tan(math.radians(camera.vertical_fov) / 2.0)
    aspect = w / h
    ndc_x = ((px + offx) / w) * 2.0 - 1.0
    ndc_y = 1.0 - ((py + offy) / h) * 2.0
    d = (fwd[None, :]
         + ndc_x[:, None] * (tan_half * aspect) * right[None, :]
         + ndc_y[:, None] * tan_half * up[None, :])
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    origins = np.broadcast_to(camera.position, (n, 3)).astype(np.float32).copy()
    return origins, d.astype(np.float32)


# -- predictor consult loops ---------------------------------------------------


def _consult_limit(table, bvh, keys, O8, D8, tmins, tmaxs, base, stats,
                   closest: bool, log_lists):
    """Sequential classify-and-train pass against known baseline results."""
    b0, b1, b2, b3, b4, b5, b6, b7, b8, b9 = bvh._arrays()
    depth = bvh.depth
    anc = bvh.ancestor_lut(table.go_up_level)
    lookup = table.lookup
    record = table.record
    ek = kernels.eval_entry_closest if closest else kernels.eval_entry_any
    base_found = base["found"]
    base_t = base["t"]
    base_leaf = base["leaf"]
    base_box = base["box"]
    keys_list = keys.tolist()
    tp = fp = neg = 0
    ob = ot = skipped = est = wrong = 0
    for i in range(len(keys_list)):
        key = keys_list[i]
        entry = lookup(key)
        if entry is None:
            neg += 1
            if log_lists is not None:
                log_lists["cls"].append(2)
                log_lists["eval_box"].append(0)
                log_lists["pred_t"].append(np.inf)
                log_lists["pred_slot"].append(-1)
            if base_found[i]:
                record(key, int(anc[base_leaf[i]]))
            continue
        nodes = entry.nodes
        f, t, slot, leaf, u, v, bx, tr, vz = ek(
            b0, b1, b2, b3, b4, b5, b6, b7, b8, b9, nodes, len(nodes),
            O8[i, 0], O8[i, 1], O8[i, 2], D8[i, 0], D8[i, 1], D8[i, 2],
            tmins[i], tmaxs[i])
        ob += bx
        ot += tr
        if f:
            tp += 1
            skipped += int(base_box[i]) - int(bx)
            est += max(0, int(depth[leaf]) + 1 - int(bx))
            if closest and t > base_t[i] + WRONG_CLOSEST_EPS:
                wrong += 1
        else:
            fp += 1
            if base_found[i]:
                record(key, int(anc[base_leaf[i]]))
        if log_lists is not None:
            log_lists["cls"].append(0 if f else 1)
            log_lists["eval_box"].append(int(bx))
            log_lists["pred_t"].append(float(t) if f else np.inf)
            log_lists["pred_slot"].append(int(slot) if f else -1)
    stats.tp += tp
    stats.fp += fp
    stats.neg += neg
    stats.overhead_box_tests += int(ob)
    stats.overhead_tri_tests += int(ot)
    stats.skipped_box_tests += int(skipped)
    stats.skipped_box_tests_estimated += int(est)
    stats.wrong_closest += wrong


def _consult_live(table, bvh, keys, O8, D8, tmins, tmaxs, stats, closest: bool):
    """Sequential predict-or-traverse pass; returns effective hit arrays."""
    b0, b1, b2, b3, b4, b5, b6, b7, b8, b9 = bvh._arrays()
    depth = bvh.depth
    anc = bvh.ancestor_lut(table.go_up_level)
    lookup = table.lookup
    record = table.record
    ek = kernels.eval_entry_closest if closest else kernels.eval_entry_any
    full = kernels.trace_closest if closest else kernels.trace_any
    n = keys.shape[0]
    out_found = np.zeros(n, np.bool_)
    out_t = np.zeros(n, np.float64)
    out_slot = np.full(n, -1, np.int32)
    out_leaf = np.full(n, -1, np.int32)
    keys_list = keys.tolist()
    tp = fp = neg = 0
    ob = ot = est = bb = bt = 0
    for i in range(n):
        key = keys_list[i]
        entry = lookup(key)
        predicted = False
        if entry is not None:
            nodes = entry.nodes
            f, t, slot, leaf, u, v, bx, tr, vz = ek(
                b0, b1, b2, b3, b4, b5, b6, b7, b8, b9, nodes, len(nodes),
                O8[i, 0], O8[i, 1], O8[i, 2], D8[i, 0], D8[i, 1], D8[i, 2],
                tmins[i], tmaxs[i])
            ob += bx
            ot += tr
            if f:
                tp += 1
                est += max(0, int(depth[leaf]) + 1 - int(bx))
                out_found[i] = True
                out_t[i] = t
                out_slot[i] = slot
                out_leaf[i] = leaf
                predicted = True
            else:
                fp += 1
        else:
            neg += 1
        if not predicted:
            f, t, slot, leaf, u, v, bx, tr, vz = full(
                b0, b1, b2, b3, b4, b5, b6, b7, b8, b9,
                O8[i, 0], O8[i, 1], O8[i, 2], D8[i, 0], D8[i, 1], D8[i, 2],
                tmins[i], tmaxs[i], 0)
            bb += bx
            bt += tr
            if f:
                out_found[i] = True
                out_t[i] = t
                out_slot[i] = slot
                out_leaf[i] = leaf
                record(key, int(anc[leaf]))
    stats.tp += tp
    stats.fp += fp
    stats.neg += neg
    stats.overhead_box_tests += int(ob)
    stats.overhead_tri_tests += int(ot)
    stats.skipped_box_tests_estimated += int(est)
    stats.baseline_box_tests += int(bb)
    stats.baseline_tri_tests += int(bt)
    return {"found": out_found, "t": out_t, "slot": out_slot, "leaf": out_leaf}


def _trace_wave(bvh, table, cfg, mode, O32, D32, tmins, tmaxs, stats,
                closest: bool, log_lists):
    """One wave of rays through traversal plus (mode-dependent) prediction.

    Returns the per-ray hits shading should use.
    """
    n = O32.shape[0]
    stats.rays += n
    keys = None
    if mode is not RenderMode.BASELINE:
        keys = hash_rays(O32, D32, table.cfg)
    if mode is RenderMode.LIVE:
        O8 = O32.astype(np.float64)
        D8 = D32.astype(np.float64)
        return _consult_live(table, bvh, keys, O8, D8, tmins, tmaxs, stats,
                             closest)
    batch = intersect_closest_batch if closest else intersect_any_batch
    base = batch(bvh, O32, D32, tmins, tmaxs)
    stats.baseline_box_tests += int(base["box"].sum())
    stats.baseline_tri_tests += int(base["tri"].sum())
    if mode is RenderMode.LIMIT:
        if log_lists is not None:
            log_lists["base_box"].extend(base["box"].tolist())
            log_lists["keys"].extend(keys.tolist())
        O8 = O32.astype(np.float64)
        D8 = D32.astype(np.float64)
        _consult_limit(table, bvh, keys, O8, D8, tmins, tmaxs, base, stats,
                       closest, log_lists)
    return base


# -- renderer -------------------------------------------------------------------


def render(scene, bvh: Bvh, tables: Optional[dict] = None,
           cfg: Optional[RenderConfig] = None) -> RenderOutput:
    """Render ``scene`` through ``bvh``; see the module docstring for modes."""
    cfg = cfg or RenderConfig()
    mode = cfg.mode
    if mode is not RenderMode.BASELINE:
        if not tables or "closest" not in tables or "hit_any" not in tables:
            raise ValueError(f"{mode.value} mode needs 'closest' and 'hit_any' tables")
        if tables["closest"].kind is not RayKind.CLOSEST_HIT:
            raise ValueError("'closest' table must hold closest-hit entries")
        if tables["hit_any"].kind is not RayKind.HIT_ANY:
            raise ValueError("'hit_any' table must hold hit-any entries")

    numba.set_num_threads(
        min(max(1, cfg.threads), numba.config.NUMBA_NUM_THREADS))

    cam = scene.camera
    w, h = cam.resolution
    spp = cfg.spp
    nsamp = w * h * spp
    closest_table = tables["closest"] if tables else None
    hit_any_table = tables["hit_any"] if tables else None

    stats = {k: RayKindStats() for k in RAY_KIND_LABELS}
    shadow_log = ([], [], [], []) if cfg.capture_shadow_queries else None
    outcome_logs = None
    log_lists = {}
    if cfg.capture_outcomes and mode is RenderMode.LIMIT:
        for k in RAY_KIND_LABELS:
            log_lists[k] = {"cls": [], "eval_box": [], "base_box": [],
                            "pred_t": [], "pred_slot": [], "keys": []}

    # Per-slot shading attributes (slot = reordered triangle index).
    slot_mesh = scene.tri_mesh[bvh.tri_ids]
    slot_albedo = scene.mesh_albedo[slot_mesh]
    slot_reflective = scene.mesh_reflective[slot_mesh]
    slot_reflectance = scene.mesh_reflectance[slot_mesh]
    normals = bvh.slot_normals()
    background = scene.background.astype(np.float32)
    lights = scene.lights

    radiance = np.zeros((nsamp, 3), np.float32)

    wave_o, wave_d = generate_primary_rays(cam, cfg)
    wave_sample = np.arange(nsamp)
    wave_tput = np.ones((nsamp, 3), np.float32)

    for bounce in range(cfg.max_reflection_depth + 1):
        if wave_o.shape[0] == 0:
            break
        label = "primary" if bounce == 0 else "reflection"
        nw = wave_o.shape[0]
        tmins = np.zeros(nw, np.float64)
        tmaxs = np.full(nw, np.inf, np.float64)
        eff = _trace_wave(bvh, closest_table, cfg, mode, wave_o, wave_d,
                          tmins, tmaxs, stats[label],
                          closest=True, log_lists=log_lists.get(label))

        hit = eff["found"]
        miss = ~hit
        if miss.any():
            radiance[wave_sample[miss]] += wave_tput[miss] * background
        if not hit.any():
            break

        ho = wave_o[hit].astype(np.float64)
        hd = wave_d[hit].astype(np.float64)
        ht = eff["t"][hit]
        hslot = eff["slot"][hit]
        hsample = wave_sample[hit]
        htput = wave_tput[hit]

        P = ho + ht[:, None] * hd
        N = normals[hslot]
        facing = np.einsum("ij,ij->i", N, hd)
        N = np.where(facing[:, None] > 0.0, -N, N)
        offset_P = P + SHADOW_OFFSET * N
        albedo = slot_albedo[hslot]

        for light in lights:
            lvec = light.position.astype(np.float64)[None, :] - offset_P
            dist = np.linalg.norm(lvec, axis=1)
            dist = np.maximum(dist, 1e-9)
            ldir = lvec / dist[:, None]
            so = offset_P.astype(np.float32)
            sd = ldir.astype(np.float32)
            stmax = np.maximum(dist - SHADOW_OFFSET, 1e-6)
            stmin = np.zeros_like(stmax)
            occ_eff = _trace_wave(bvh, hit_any_table, cfg, mode, so, sd,
                                  stmin, stmax, stats["shadow"],
                                  closest=False,
                                  log_lists=log_lists.get("shadow"))
            occluded = occ_eff["found"]
            if shadow_log is not None:
                shadow_log[0].append(so)
                shadow_log[1].append(sd)
                shadow_log[2].append(stmax)
                shadow_log[3].append(occluded.copy())
            cosv = np.maximum(np.einsum("ij,ij->i", N, ldir), 0.0)
            scale = (cosv / (dist * dist)).astype(np.float32)
            contrib = (htput * albedo
                       * light.intensity[None, :].astype(np.float32)
                       * scale[:, None])
            contrib[occluded] = 0.0
            radiance[hsample] += contrib

        if bounce >= cfg.max_reflection_depth:
            break
        refl = slot_reflective[hslot]
        if not refl.any():
            break
        rdot = np.einsum("ij,ij->i", hd, N)
        rdir = hd - 2.0 * rdot[:, None] * N
        rdir /= np.linalg.norm(rdir, axis=1, keepdims=True)
        wave_o = offset_P[refl].astype(np.float32)
        wave_d = rdir[refl].astype(np.float32)
        wave_sample = hsample[refl]
        wave_tput = htput[refl] * slot_reflectance[hslot][refl, None]

    image = radiance.reshape(h, w, spp, 3).sum(axis=2) * np.float32(1.0 / spp)

    out_shadow = None
    if shadow_log is not None and shadow_log[0]:
        out_shadow = ShadowQueryLog(
            origins=np.concatenate(shadow_log[0]),
            directions=np.concatenate(shadow_log[1]),
            t_max=np.concatenate(shadow_log[2]),
            occluded=np.concatenate(shadow_log[3]),
        )
    if log_lists:
        outcome_logs = {}
        for k, ll in log_lists.items():
            outcome_logs[k] = OutcomeLog(
                classification=np.array(ll["cls"], np.int8),
                eval_box_tests=np.array(ll["eval_box"], np.int64),
                baseline_box_tests=np.array(ll["base_box"], np.int64),
                predicted_t=np.array(ll["pred_t"], np.float64),
                predicted_slot=np.array(ll["pred_slot"], np.int64),
                keys=np.array(ll["keys"], np.uint64),
            )

    tstats = {
        "closest": metrics.table_stats(closest_table) if closest_table else None,
        "hit_any": metrics.table_stats(hit_any_table) if hit_any_table else None,
    }
    return RenderOutput(image=image, stats=stats, table_stats=tstats,
                        mode=mode, shadow_log=out_shadow,
                        outcome_logs=outcome_logs)


# -- image output ------------------------------------------------------------------


def image_to_ppm_bytes(image: np.ndarray) -> bytes:
    """Encode a float image as binary PPM (P6, 8-bit, gamma 2.2)."""
    h, w, _ = image.shape
    clipped = np.clip(image.astype(np.float64), 0.0, 1.0)
    encoded = np.power(clipped, 1.0 / GAMMA)
    data = (encoded * 255.0 + 0.5).astype(np.uint8)
    return f"P6\n{w} {h}\n255\n".encode("ascii") + data.tobytes()


def write_ppm(path, image: np.ndarray):
    with open(path, "wb") as f:
        f.write(image_to_ppm_bytes(image))
