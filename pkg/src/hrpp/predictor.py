"""Predictor table: key -> deduplicated, insertion-ordered node references.

One table serves one ray kind; hit-any and closest-hit rays get distinct
tables so their keys never conflict.  Lookups never mutate; training is
an explicit call that records the go-up-level ancestor of a traversal's
hit leaf.  There is no replacement policy - the table grows until the
configured entry cap (default 2^26, overridable via the
``HRPP_MAX_TABLE_ENTRIES`` environment variable) aborts the run.

Prediction outcomes:

* negative - key absent; the only cost is the lookup itself.
* true positive - some stored node yields a genuine intersection.
  Closest-hit tables scan every stored node and keep the minimal t
  (which may still exceed the global minimum: the wrong-closest caveat,
  measured in limit mode); hit-any tables stop at the first hit.
* false positive - stored nodes were all misses; the caller falls back
  to a full root traversal.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional

import numpy as np

from . import kernels
from .bvh import Bvh, TraversalCounters, ancestor_at
from .errors import CapacityExceeded
from .geom import HitRecord, Ray, RayKind
from .rayhash import HashConfig, hash_ray, key_hex

DEFAULT_MAX_ENTRIES = 1 << 26
CAPACITY_ENV_VAR = "HRPP_MAX_TABLE_ENTRIES"

ENTRY_OVERHEAD_BYTES = 16  # 6-byte key plus bookkeeping, rounded up
NODE_REF_BYTES = 4


class PredictionClass(Enum):
    TRUE_POSITIVE = "true_positive"
    FALSE_POSITIVE = "false_positive"
    NEGATIVE = "negative"


@dataclass
class PredictionOutcome:
    classification: PredictionClass
    hit: Optional[HitRecord]
    overhead: TraversalCounters
    # Conservative live-mode lower bound: the root-to-leaf path of the
    # accepted hit minus the evaluation's own box tests.  Exact skipped
    # counts need the baseline run and are computed by the limit pipeline.
    skipped_box_tests: int = 0


@dataclass
class MemoryEstimate:
    entry_bytes: int
    node_ref_bytes: int

    @property
    def total_bytes(self) -> int:
        return self.entry_bytes + self.node_ref_bytes


class PredictorEntry:
    """Insertion-ordered set of node indices, no duplicates."""

    __slots__ = ("_nodes", "_len", "_seen")

    def __init__(self):
        self._nodes = np.empty(4, np.int32)
        self._len = 0
        self._seen = set()

    def add(self, node: int) -> bool:
        if node in self._seen:
            return False
        self._seen.add(node)
        if self._len == self._nodes.shape[0]:
            grown = np.empty(self._nodes.shape[0] * 2, np.int32)
            grown[:self._len] = self._nodes[:self._len]
            self._nodes = grown
        self._nodes[self._len] = node
        self._len += 1
        return True

    @property
    def nodes(self) -> np.ndarray:
        """View of the stored node indices in insertion order."""
        return self._nodes[:self._len]

    def __len__(self) -> int:
        return self._len

    def __contains__(self, node) -> bool:
        return node in self._seen


def _capacity_from_env(default: int) -> int:
    raw = os.environ.get(CAPACITY_ENV_VAR)
    if raw is None:
        return default
    try:
        cap = int(raw)
    except ValueError:
        raise ValueError(f"{CAPACITY_ENV_VAR} must be an integer, got {raw!r}")
    if cap < 1:
        raise ValueError(f"{CAPACITY_ENV_VAR} must be >= 1")
    return cap


class PredictorTable:
    """Mapping from 48-bit ray hash keys to predicted node sets."""

    def __init__(self, cfg: HashConfig, go_up_level: int = 0,
                 kind: RayKind = RayKind.CLOSEST_HIT,
                 max_entries: Optional[int] = None):
        if go_up_level < 0:
            raise ValueError("go_up_level must be >= 0")
        self.cfg = cfg
        self.go_up_level = int(go_up_level)
        self.kind = kind
        self.max_entries = (_capacity_from_env(DEFAULT_MAX_ENTRIES)
                            if max_entries is None else int(max_entries))
        self._mapping: dict[int, PredictorEntry] = {}
        self._stored_nodes = 0

    # -- core mapping --------------------------------------------------------

    @property
    def entry_count(self) -> int:
        return len(self._mapping)

    @property
    def stored_node_count(self) -> int:
        return self._stored_nodes

    def lookup(self, key: int) -> Optional[PredictorEntry]:
        """Present iff ``key`` was previously recorded; never mutates."""
        return self._mapping.get(key)

    def record(self, key: int, node: int) -> bool:
        """Idempotent set insertion; returns whether the entry grew."""
        entry = self._mapping.get(key)
        if entry is None:
            if len(self._mapping) >= self.max_entries:
                raise CapacityExceeded(
                    f"predictor table reached its cap of {self.max_entries} "
                    f"entries (override with {CAPACITY_ENV_VAR})")
            entry = PredictorEntry()
            self._mapping[key] = entry
        inserted = entry.add(int(node))
        if inserted:
            self._stored_nodes += 1
        return inserted

    def entries(self) -> Iterator[tuple[int, PredictorEntry]]:
        return iter(self._mapping.items())

    # -- prediction ------------------------------------------------------------

    def predict(self, bvh: Bvh, ray: Ray) -> PredictionOutcome:
        """Consult the table for ``ray``; never mutates the table."""
        if ray.kind is not self.kind:
            raise ValueError(
                f"table holds {self.kind.value} entries, got a {ray.kind.value} ray")
        key = hash_ray(ray, self.cfg)
        entry = self.lookup(key)
        overhead = TraversalCounters()
        if entry is None:
            return PredictionOutcome(PredictionClass.NEGATIVE, None, overhead)
        o = ray.origin.astype(np.float64)
        d = ray.direction.astype(np.float64)
        kern = (kernels.eval_entry_any if self.kind is RayKind.HIT_ANY
                else kernels.eval_entry_closest)
        found, t, slot, leaf, u, v, boxes, tris, visited = kern(
            *bvh._arrays(), entry.nodes, len(entry),
            o[0], o[1], o[2], d[0], d[1], d[2],
            float(ray.t_min), float(ray.t_max))
        overhead.add(boxes, tris, visited)
        if not found:
            return PredictionOutcome(PredictionClass.FALSE_POSITIVE, None, overhead)
        hit = HitRecord(t=float(t), triangle_id=int(bvh.tri_ids[slot]),
                        leaf_node=int(leaf), u=float(u), v=float(v))
        est = max(0, int(bvh.depth[leaf]) + 1 - overhead.box_tests)
        return PredictionOutcome(PredictionClass.TRUE_POSITIVE, hit, overhead,
                                 skipped_box_tests=est)

    def train_from_traversal(self, bvh: Bvh, key: int, hit: HitRecord) -> bool:
        """Record the go-up-level ancestor of a full traversal's hit leaf."""
        node = ancestor_at(bvh, hit.leaf_node, self.go_up_level)
        return self.record(key, node)

    # -- reporting ---------------------------------------------------------------

    def memory_estimate(self) -> MemoryEstimate:
        """Documented size model, not a heap measurement."""
        return MemoryEstimate(
            entry_bytes=self.entry_count * ENTRY_OVERHEAD_BYTES,
            node_ref_bytes=self.stored_node_count * NODE_REF_BYTES)

    def dump_lines(self) -> Iterator[str]:
        """Debug dump: ``key_hex -> [node,node,...]`` sorted by key."""
        for key in sorted(self._mapping):
            nodes = ",".join(str(int(n)) for n in self._mapping[key].nodes)
            yield f"{key_hex(key)} -> [{nodes}]"


def memory_estimate(table: PredictorTable) -> MemoryEstimate:
    return table.memory_estimate()
