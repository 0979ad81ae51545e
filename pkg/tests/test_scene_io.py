import json

import numpy as np
import pytest

from helpers import tiny_scene_dict

from hrpp import (EmptyScene, IndexOutOfRange, ParseError, SceneError,
                  Triangle, UnknownGenerator, generate_scene, load_obj,
                  load_scene, save_obj, vec3)
from hrpp.scene_io import (bundled_scene_names, load_bundled_scene,
                           scene_from_dict)


class TestObj:
    def test_single_triangle(self, tmp_path):
        p = tmp_path / "t.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        tris = load_obj(p)
        assert len(tris) == 1
        np.testing.assert_array_equal(tris[0].v1, [1, 0, 0])

    def test_quad_fans_to_two_triangles(self, tmp_path):
        p = tmp_path / "q.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        tris = load_obj(p)
        assert len(tris) == 2
        assert [t.id for t in tris] == [0, 1]

    def test_face_index_zero_rejected(self, tmp_path):
        p = tmp_path / "z.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n")
        with pytest.raises(IndexOutOfRange) as exc:
            load_obj(p)
        assert exc.value.line == 4

    def test_face_index_out_of_range(self, tmp_path):
        p = tmp_path / "o.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
        with pytest.raises(IndexOutOfRange):
            load_obj(p)

    def test_negative_indices(self, tmp_path):
        p = tmp_path / "n.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
        tris = load_obj(p)
        assert len(tris) == 1
        np.testing.assert_array_equal(tris[0].v0, [0, 0, 0])

    def test_slash_forms_and_skipped_records(self, tmp_path, caplog):
        p = tmp_path / "s.obj"
        p.write_text("vn 0 0 1\nvt 0 0\nv 0 0 0\nv 1 0 0\nv 0 1 0\n"
                     "f 1/1/1 2/1/1 3/1/1\nusemtl foo\n")
        with caplog.at_level("WARNING"):
            tris = load_obj(p)
        assert len(tris) == 1
        assert "skipped" in caplog.text

    def test_bad_vertex(self, tmp_path):
        p = tmp_path / "b.obj"
        p.write_text("v 0 zero 0\n")
        with pytest.raises(ParseError) as exc:
            load_obj(p)
        assert exc.value.line == 1

    def test_roundtrip_identical_triangle_set(self, tmp_path):
        tris = generate_scene("menger", {"level": 1, "size": 2.5})
        p = tmp_path / "round.obj"
        save_obj(p, tris)
        back = load_obj(p)
        assert len(back) == len(tris)
        for a, b in zip(tris, back):
            assert np.array_equal(a.v0, b.v0)
            assert np.array_equal(a.v1, b.v1)
            assert np.array_equal(a.v2, b.v2)


class TestGenerators:
    def test_grid_counts(self):
        assert len(generate_scene("grid", {"n": 1})) == 2
        assert len(generate_scene("grid", {"n": 24})) == 2 * 24 * 24

    def test_sphere_grid_count_formula(self):
        tris = generate_scene("spheres", {"grid": 4, "tessellation": 16})
        assert len(tris) == 16 * 2 * 16 * 15  # 7680

    def test_menger_counts(self):
        assert len(generate_scene("menger", {"level": 0})) == 12
        assert len(generate_scene("menger", {"level": 2})) == 20 ** 2 * 12

    def test_unknown_generator(self):
        with pytest.raises(UnknownGenerator):
            generate_scene("torus", {})

    def test_bad_params(self):
        with pytest.raises(SceneError):
            generate_scene("menger", {"level": 4})
        with pytest.raises(SceneError):
            generate_scene("grid", {"n": 0})

    def test_deterministic(self):
        a = generate_scene("spheres", {"grid": 2, "tessellation": 8})
        b = generate_scene("spheres", {"grid": 2, "tessellation": 8})
        for ta, tb in zip(a, b):
            assert np.array_equal(ta.v0, tb.v0)

    def test_ids_sequential(self):
        tris = generate_scene("grid", {"n": 3})
        assert [t.id for t in tris] == list(range(len(tris)))


class TestSceneJson:
    def test_load_tiny(self):
        scene = scene_from_dict(tiny_scene_dict(), name="tiny")
        assert scene.triangle_count == 2 * 36 + 2 * 8 * 7
        assert scene.camera.resolution == (32, 32)
        assert len(scene.lights) == 1

    def test_version_required(self):
        doc = tiny_scene_dict()
        doc["version"] = 2
        with pytest.raises(SceneError):
            scene_from_dict(doc)

    def test_needs_mesh_and_light(self):
        doc = tiny_scene_dict()
        doc["meshes"] = []
        with pytest.raises(SceneError):
            scene_from_dict(doc)
        doc = tiny_scene_dict()
        doc["lights"] = []
        with pytest.raises(SceneError):
            scene_from_dict(doc)

    def test_singular_transform_rejected(self):
        doc = tiny_scene_dict()
        doc["meshes"][0]["transform"] = [[0] * 4] * 4
        with pytest.raises(SceneError):
            scene_from_dict(doc)

    def test_translation_shifts_every_aabb(self):
        doc = tiny_scene_dict()
        plain = scene_from_dict(doc, name="plain")
        shift = np.array([0.5, 0.25, -1.5])
        doc2 = tiny_scene_dict()
        for mesh in doc2["meshes"]:
            mesh["transform"] = [
                [1, 0, 0, shift[0]],
                [0, 1, 0, shift[1]],
                [0, 0, 1, shift[2]],
                [0, 0, 0, 1],
            ]
        moved = scene_from_dict(doc2, name="moved")
        for arr_a, arr_b in ((plain.v0, moved.v0), (plain.v1, moved.v1),
                             (plain.v2, moved.v2)):
            lo_a = arr_a.min(axis=0).astype(np.float64)
            lo_b = arr_b.min(axis=0).astype(np.float64)
            np.testing.assert_allclose(lo_b - lo_a, shift, atol=1e-6)

    def test_obj_mesh_resolved_relative_to_json(self, tmp_path):
        obj = tmp_path / "tri.obj"
        obj.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        doc = tiny_scene_dict()
        doc["meshes"] = [{"obj": "tri.obj"}]
        scene_path = tmp_path / "scene.json"
        scene_path.write_text(json.dumps(doc))
        scene = load_scene(scene_path)
        assert scene.triangle_count == 1

    def test_invalid_json_has_line(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{\n  'nope'\n}")
        with pytest.raises(ParseError):
            load_scene(p)

    def test_mesh_material_defaults(self):
        scene = scene_from_dict(tiny_scene_dict(), name="d")
        assert scene.mesh_reflective.dtype == np.bool_
        assert not scene.mesh_reflective.any()
        np.testing.assert_allclose(scene.mesh_albedo[0], [0.6, 0.62, 0.65],
                                   atol=1e-6)


class TestBundled:
    def test_names(self):
        assert bundled_scene_names() == ["grid", "menger2", "spheres"]

    @pytest.mark.parametrize("name", ["grid", "menger2", "spheres"])
    def test_load(self, name):
        scene = load_bundled_scene(name)
        assert scene.triangle_count > 0
        assert len(scene.lights) >= 1
        assert scene.camera.resolution == (256, 256)

    def test_spheres_is_the_sphere_grid_scene(self):
        scene = load_bundled_scene("spheres")
        # 4x4 spheres at tessellation 16 plus a floor grid
        assert scene.triangle_count == 7680 + 2 * 8 * 8
        assert scene.mesh_reflective.any()
