"""Hash-based ray path prediction limit-study workbench.

A small, instrumented Whitted-style ray tracer whose BVH traversal can
be predicted from a bit-extraction hash of ray origin and direction.
The package measures exactly how many interior ray-box tests prediction
skips, in either an oracle-checked limit mode or a live mode.
"""

from .bvh import (Bvh, BvhNode, TraversalCounters, ancestor_at, build_bvh,
                  build_bvh_from_arrays, intersect_any, intersect_closest,
                  intersect_from_node)
from .errors import (CapacityExceeded, EmptyScene, HrppError, IndexOutOfRange,
                     NoBaseline, NonFiniteInput, ParseError, SceneError,
                     UnknownGenerator)
from .geom import (Aabb, HitRecord, Ray, RayKind, Triangle, ray_aabb_intersect,
                   ray_triangle_intersect, vec3)
from .metrics import (RayKindStats, TableStats, fully_skipped_percent,
                      net_savings_percent, savings_percent, table_stats,
                      wrong_closest_rate)
from .predictor import (MemoryEstimate, PredictionClass, PredictionOutcome,
                        PredictorEntry, PredictorTable)
from .rayhash import (HashConfig, coarsen_key, hash_ray, hash_ray_components,
                      hash_rays, key_hex, map_float_to_hash)
from .scene_io import (Scene, bundled_scene_names, bundled_scene_path,
                       generate_scene, load_bundled_scene, load_obj,
                       load_scene, save_obj)
from .tracer import (Camera, PointLight, RenderConfig, RenderMode,
                     RenderOutput, generate_primary_rays, render, write_ppm)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
