import dataclasses

import numpy as np
import pytest

from helpers import tiny_scene_dict

from hrpp import (Camera, HashConfig, PointLight, PredictorTable, Ray,
                  RayKind, RenderConfig, RenderMode, Triangle,
                  TraversalCounters, build_bvh, generate_primary_rays,
                  hash_rays, intersect_closest, render, vec3)
from hrpp.bvh import build_bvh_from_arrays, intersect_any_batch, intersect_closest_batch
from hrpp.scene_io import scene_from_dict
from hrpp.tracer import image_to_ppm_bytes


def make_tables(p=6, g=0):
    cfg = HashConfig(p)
    return {"closest": PredictorTable(cfg, g, kind=RayKind.CLOSEST_HIT),
            "hit_any": PredictorTable(cfg, g, kind=RayKind.HIT_ANY)}


@pytest.fixture(scope="module")
def tiny():
    scene = scene_from_dict(tiny_scene_dict((32, 32)), name="tiny")
    tree = build_bvh_from_arrays(scene.v0, scene.v1, scene.v2)
    return scene, tree


@pytest.fixture(scope="module")
def mirror():
    scene = scene_from_dict(tiny_scene_dict((24, 24), reflective_floor=True,
                                            lights=2), name="mirror")
    tree = build_bvh_from_arrays(scene.v0, scene.v1, scene.v2)
    return scene, tree


class TestPrimaryRays:
    def test_single_pixel_center_ray(self):
        cam = Camera(vec3(0, 0, 5), vec3(0, 0, 0), vec3(0, 1, 0), 60.0, (1, 1))
        cfg = RenderConfig(spp=1, jitter=False)
        O, D = generate_primary_rays(cam, cfg)
        assert O.shape == (1, 3)
        np.testing.assert_allclose(D[0], [0, 0, -1], atol=1e-7)

    def test_counts_and_unit_directions(self):
        cam = Camera(vec3(0, 1, 5), vec3(0, 0, 0), vec3(0, 1, 0), 45.0, (2, 2))
        cfg = RenderConfig(spp=4, rng_seed=3)
        O, D = generate_primary_rays(cam, cfg)
        assert O.shape == (16, 3) and D.shape == (16, 3)
        np.testing.assert_allclose(np.linalg.norm(D.astype(np.float64), axis=1),
                                   1.0, atol=1e-4)

    def test_same_seed_bit_identical(self):
        cam = Camera(vec3(0, 1, 5), vec3(0, 0, 0), vec3(0, 1, 0), 45.0, (8, 8))
        a = generate_primary_rays(cam, RenderConfig(spp=2, rng_seed=9))
        b = generate_primary_rays(cam, RenderConfig(spp=2, rng_seed=9))
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        c = generate_primary_rays(cam, RenderConfig(spp=2, rng_seed=10))
        assert not np.array_equal(a[1], c[1])

    def test_unjittered_samples_identical_per_pixel(self):
        cam = Camera(vec3(0, 1, 5), vec3(0, 0, 0), vec3(0, 1, 0), 45.0, (4, 4))
        O, D = generate_primary_rays(cam, RenderConfig(spp=3, jitter=False))
        D = D.reshape(16, 3, 3)
        assert np.array_equal(D[:, 0], D[:, 1])
        assert np.array_equal(D[:, 0], D[:, 2])

    def test_pixel_major_sample_minor_order(self):
        cam = Camera(vec3(0, 0, 5), vec3(0, 0, 0), vec3(0, 1, 0), 60.0, (2, 1))
        O, D = generate_primary_rays(cam, RenderConfig(spp=2, jitter=False))
        # rays 0,1 belong to pixel 0 (left half: direction.x < 0), rays 2,3
        # to pixel 1
        assert D[0, 0] == D[1, 0] < 0 < D[2, 0] == D[3, 0]


class TestModes:
    def test_limit_image_equals_baseline(self, tiny):
        scene, tree = tiny
        base = render(scene, tree, None, RenderConfig(spp=2, mode=RenderMode.BASELINE))
        limit = render(scene, tree, make_tables(),
                       RenderConfig(spp=2, mode=RenderMode.LIMIT))
        assert image_to_ppm_bytes(base.image) == image_to_ppm_bytes(limit.image)

    def test_baseline_mode_never_consults(self, tiny):
        scene, tree = tiny
        out = render(scene, tree, None, RenderConfig(spp=1, mode=RenderMode.BASELINE))
        for s in out.stats.values():
            assert s.consulted == 0
        assert out.stats["primary"].rays == 32 * 32

    def test_live_shadow_queries_match_baseline_oracle(self, tiny):
        scene, tree = tiny
        out = render(scene, tree, make_tables(),
                     RenderConfig(spp=2, mode=RenderMode.LIVE,
                                  capture_shadow_queries=True))
        logq = out.shadow_log
        assert logq is not None and len(logq.t_max) > 0
        ref = intersect_any_batch(tree, logq.origins, logq.directions,
                                  np.zeros(len(logq.t_max)), logq.t_max)
        assert np.array_equal(ref["found"], logq.occluded)

    def test_seeded_determinism(self, tiny):
        scene, tree = tiny
        cfg = RenderConfig(spp=2, mode=RenderMode.LIMIT, rng_seed=4)
        a = render(scene, tree, make_tables(), cfg)
        b = render(scene, tree, make_tables(), cfg)
        assert image_to_ppm_bytes(a.image) == image_to_ppm_bytes(b.image)
        assert a.stats["primary"] == b.stats["primary"]
        assert a.stats["shadow"] == b.stats["shadow"]

    def test_threads_do_not_change_output(self, tiny):
        scene, tree = tiny
        cfg1 = RenderConfig(spp=2, mode=RenderMode.LIMIT, threads=1)
        cfg2 = RenderConfig(spp=2, mode=RenderMode.LIMIT, threads=2)
        a = render(scene, tree, make_tables(), cfg1)
        b = render(scene, tree, make_tables(), cfg2)
        assert image_to_ppm_bytes(a.image) == image_to_ppm_bytes(b.image)
        assert a.stats["primary"] == b.stats["primary"]

    def test_limit_requires_tables(self, tiny):
        scene, tree = tiny
        with pytest.raises(ValueError):
            render(scene, tree, None, RenderConfig(mode=RenderMode.LIMIT))
        with pytest.raises(ValueError):
            swapped = {"closest": make_tables()["hit_any"],
                       "hit_any": make_tables()["closest"]}
            render(scene, tree, swapped, RenderConfig(mode=RenderMode.LIMIT))


class TestShading:
    def test_analytic_lambert_pixel(self):
        doc = {
            "version": 1,
            "camera": {"position": [0, 0, 5], "look_at": [0, 0, 0],
                       "vertical_fov": 60.0, "resolution": [1, 1]},
            "lights": [{"position": [0, 3, 4], "intensity": [10, 20, 30]}],
            "background": [0, 0, 0],
            "meshes": [{"obj": "NONE"}],
        }
        scene = scene_from_dict(tiny_scene_dict((1, 1)), name="one")
        tri = Triangle(vec3(-5, -5, 0), vec3(5, -5, 0), vec3(0, 5, 0), id=0)
        scene = dataclasses.replace(
            scene,
            v0=tri.v0[None], v1=tri.v1[None], v2=tri.v2[None],
            tri_mesh=np.zeros(1, np.int32),
            mesh_albedo=np.array([[0.5, 0.6, 0.7]], np.float32),
            mesh_reflective=np.zeros(1, np.bool_),
            mesh_reflectance=np.zeros(1, np.float32),
            camera=Camera(vec3(0, 0, 5), vec3(0, 0, 0), vec3(0, 1, 0), 60.0, (1, 1)),
            lights=[PointLight(vec3(0, 3, 4), vec3(10, 20, 30))],
            background=np.zeros(3, np.float32),
        )
        tree = build_bvh_from_arrays(scene.v0, scene.v1, scene.v2)
        out = render(scene, tree, None,
                     RenderConfig(spp=1, jitter=False, mode=RenderMode.BASELINE))
        # Hand-computed Lambert term: hit at origin, normal +z, shadow
        # origin offset 1e-4 along +z, light at (0,3,4).
        p = np.array([0.0, 0.0, 1e-4])
        lvec = np.array([0.0, 3.0, 4.0]) - p
        dist = np.linalg.norm(lvec)
        cos = (lvec / dist)[2]  # normal is +z
        expect = np.array([0.5, 0.6, 0.7]) * np.array([10, 20, 30]) * cos / dist ** 2
        np.testing.assert_allclose(out.image[0, 0], expect, rtol=1e-5)

    def test_background_on_miss(self):
        scene = scene_from_dict(tiny_scene_dict((1, 1)), name="bg")
        cam = Camera(vec3(0, 0, 5), vec3(0, 0, 10), vec3(0, 1, 0), 30.0, (1, 1))
        scene = dataclasses.replace(scene, camera=cam)
        tree = build_bvh_from_arrays(scene.v0, scene.v1, scene.v2)
        out = render(scene, tree, None, RenderConfig(spp=1, jitter=False))
        np.testing.assert_allclose(out.image[0, 0], scene.background, rtol=1e-6)

    def test_reflection_ray_population(self, mirror):
        scene, tree = mirror
        cfg = RenderConfig(spp=1, jitter=False, mode=RenderMode.BASELINE,
                           max_reflection_depth=1)
        out = render(scene, tree, None, cfg)
        n = 24 * 24
        O, D = generate_primary_rays(scene.camera, cfg)
        res = intersect_closest_batch(tree, O, D, np.zeros(n), np.full(n, np.inf))
        slot_mesh = scene.tri_mesh[tree.tri_ids]
        refl_spawned = int(
            scene.mesh_reflective[slot_mesh[res["slot"][res["found"]]]].sum())
        prim_hits = int(res["found"].sum())
        mo, md = _mirror_wave(scene, tree, O, D, res)
        refl_hits = int(intersect_closest_batch(
            tree, mo, md, np.zeros(len(mo)), np.full(len(mo), np.inf))["found"].sum())
        assert out.stats["primary"].rays == n
        assert out.stats["reflection"].rays == refl_spawned
        # one shadow ray per (hit, light) across both closest-hit waves
        assert (out.stats["shadow"].rays
                == (prim_hits + refl_hits) * len(scene.lights))

    def test_ray_conservation_simple(self, tiny):
        scene, tree = tiny
        cfg = RenderConfig(spp=2, mode=RenderMode.BASELINE)
        out = render(scene, tree, None, cfg)
        n = 32 * 32 * 2
        assert out.stats["primary"].rays == n
        O, D = generate_primary_rays(scene.camera, cfg)
        res = intersect_closest_batch(tree, O, D, np.zeros(n), np.full(n, np.inf))
        hits = int(res["found"].sum())
        assert out.stats["shadow"].rays == hits * len(scene.lights)
        assert out.stats["reflection"].rays == 0


def _mirror_wave(scene, tree, O, D, res):
    """Reconstruct the reflection wave exactly as the renderer spawns it."""
    hit = res["found"]
    ho = O[hit].astype(np.float64)
    hd = D[hit].astype(np.float64)
    ht = res["t"][hit]
    hslot = res["slot"][hit]
    P = ho + ht[:, None] * hd
    N = tree.slot_normals()[hslot]
    facing = np.einsum("ij,ij->i", N, hd)
    N = np.where(facing[:, None] > 0.0, -N, N)
    offset = P + 1e-4 * N
    slot_mesh = scene.tri_mesh[tree.tri_ids]
    refl = scene.mesh_reflective[slot_mesh[hslot]]
    rdot = np.einsum("ij,ij->i", hd, N)
    rdir = hd - 2.0 * rdot[:, None] * N
    rdir /= np.linalg.norm(rdir, axis=1, keepdims=True)
    return offset[refl].astype(np.float32), rdir[refl].astype(np.float32)


class TestAccounting:
    def test_limit_accounting_closure(self, tiny):
        scene, tree = tiny
        cfg = RenderConfig(spp=2, mode=RenderMode.LIMIT, capture_outcomes=True)
        out = render(scene, tree, make_tables(), cfg)
        for kind in ("primary", "shadow"):
            s = out.stats[kind]
            log = out.outcome_logs[kind]
            assert s.consulted == s.rays == len(log.classification)
            assert s.tp == int((log.classification == 0).sum())
            assert s.fp == int((log.classification == 1).sum())
            assert s.neg == int((log.classification == 2).sum())
            # savings are exact: per-ray skipped sums to the aggregate
            tp_mask = log.classification == 0
            per_ray = (log.baseline_box_tests[tp_mask]
                       - log.eval_box_tests[tp_mask])
            assert int(per_ray.sum()) == s.skipped_box_tests
            assert int(log.baseline_box_tests.sum()) == s.baseline_box_tests
            assert s.skipped_box_tests <= s.baseline_box_tests

    def test_consult_loop_matches_public_predict_api(self, tiny):
        # Drift guard: the tracer's fused limit loop must classify and train
        # exactly like predict()/train_from_traversal() over the same stream.
        scene, tree = tiny
        cfg = RenderConfig(spp=1, mode=RenderMode.LIMIT, capture_outcomes=True,
                           max_reflection_depth=0)
        tables = make_tables()
        out = render(scene, tree, tables, cfg)
        log = out.outcome_logs["primary"]

        replay = PredictorTable(HashConfig(6), 0, kind=RayKind.CLOSEST_HIT)
        O, D = generate_primary_rays(scene.camera, cfg)
        classes = []
        for i in range(O.shape[0]):
            r = Ray(O[i], D[i], kind=RayKind.CLOSEST_HIT)
            outcome = replay.predict(tree, r)
            classes.append({"true_positive": 0, "false_positive": 1,
                            "negative": 2}[outcome.classification.value])
            if outcome.classification.value != "true_positive":
                hit = intersect_closest(tree, r, TraversalCounters())
                if hit is not None:
                    from hrpp import hash_ray
                    replay.train_from_traversal(tree, hash_ray(r, replay.cfg), hit)
        assert classes == log.classification.tolist()
        assert list(replay.dump_lines()) == list(tables["closest"].dump_lines())

    def test_wrong_closest_counted_not_hidden(self, eight_leaf_bvh):
        # Force a wrong-closest TP: key trained with only a farther leaf
        # that the ray also genuinely hits.
        tris = [Triangle(vec3(-1, -1, 1), vec3(1, -1, 1), vec3(0, 1, 1), id=0),
                Triangle(vec3(-1, -1, 2), vec3(1, -1, 2), vec3(0, 1, 2), id=1)]
        tree = build_bvh(tris, max_leaf_size=1)
        table = PredictorTable(HashConfig(6), 0, kind=RayKind.CLOSEST_HIT)
        r = Ray(vec3(0, 0, 0), vec3(0, 0, 1), kind=RayKind.CLOSEST_HIT)
        far_hit = None
        for leaf in tree.leaf_indices():
            from hrpp import intersect_from_node
            h = intersect_from_node(tree, int(leaf), r, TraversalCounters())
            if h is not None and h.t == pytest.approx(2.0):
                far_hit = h
        from hrpp import hash_ray
        table.record(hash_ray(r, table.cfg), far_hit.leaf_node)
        out = table.predict(tree, r)
        assert out.classification.value == "true_positive"
        assert out.hit.t == pytest.approx(2.0)  # farther than the true 1.0


class TestImageOutput:
    def test_ppm_header_and_gamma(self):
        img = np.zeros((2, 3, 3), np.float32)
        img[0, 0] = [1.0, 0.0, 0.25]
        data = image_to_ppm_bytes(img)
        assert data.startswith(b"P6\n3 2\n255\n")
        pixels = np.frombuffer(data[len(b"P6\n3 2\n255\n"):], np.uint8)
        assert pixels[0] == 255
        assert pixels[1] == 0
        assert pixels[2] == int(0.25 ** (1 / 2.2) * 255 + 0.5)
        assert len(pixels) == 2 * 3 * 3

    def test_write_ppm_roundtrip_bytes(self, tmp_path, tiny):
        scene, tree = tiny
        out = render(scene, tree, None, RenderConfig(spp=1))
        from hrpp import write_ppm
        p = tmp_path / "img.ppm"
        write_ppm(p, out.image)
        assert p.read_bytes() == image_to_ppm_bytes(out.image)
