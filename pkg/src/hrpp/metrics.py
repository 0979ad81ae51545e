"""Aggregation of traversal and prediction counters into reported metrics.

Definitions (fixed here so every report means the same thing):

* ``skipped_box_tests`` - for each true positive, the ray's full-traversal
  box tests minus the box tests spent evaluating its predictor entry;
  exact in limit mode where the baseline runs for every ray.  Negatives
  and false positives skip nothing.
* ``savings_percent`` - 100 * skipped / baseline box tests.  This is the
  primary metric; prediction overhead is *not* netted out of it twice -
  the overhead columns are reported alongside so readers can do their
  own accounting.
* ``net_savings_percent`` - (skipped - overhead box - overhead triangle
  tests) / baseline, a deliberately conservative companion number (the
  true-positive evaluation cost is already inside ``skipped``).
* ``fully_skipped_percent`` - fraction of rays that were true positives,
  i.e. never entered the tree from the root.
* ``wrong_closest_rate`` - wrong-closest true positives / true positives,
  measurable only in limit mode (closest-hit tables only).

Stats objects merge associatively, so parallel workers can own private
instances.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from typing import Iterable, Optional

from .errors import NoBaseline
from .predictor import MemoryEstimate, PredictorTable


@dataclass
class RayKindStats:
    """Counters for one ray population (primary, shadow or reflection)."""

    rays: int = 0
    tp: int = 0
    fp: int = 0
    neg: int = 0
    baseline_box_tests: int = 0
    baseline_tri_tests: int = 0
    overhead_box_tests: int = 0
    overhead_tri_tests: int = 0
    skipped_box_tests: int = 0
    skipped_box_tests_estimated: int = 0
    wrong_closest: int = 0

    @property
    def consulted(self) -> int:
        """Rays that looked in the predictor (TP + FP + Neg)."""
        return self.tp + self.fp + self.neg

    def merge(self, other: "RayKindStats") -> "RayKindStats":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def __add__(self, other: "RayKindStats") -> "RayKindStats":
        out = RayKindStats()
        out.merge(self)
        out.merge(other)
        return out


def savings_percent(stats: RayKindStats) -> float:
    if stats.baseline_box_tests <= 0:
        raise NoBaseline("savings undefined without baseline box tests")
    return 100.0 * stats.skipped_box_tests / stats.baseline_box_tests


def net_savings_percent(stats: RayKindStats) -> float:
    if stats.baseline_box_tests <= 0:
        raise NoBaseline("savings undefined without baseline box tests")
    net = (stats.skipped_box_tests - stats.overhead_box_tests
           - stats.overhead_tri_tests)
    return 100.0 * net / stats.baseline_box_tests


def fully_skipped_percent(stats: RayKindStats) -> float:
    if stats.rays <= 0:
        return 0.0
    return 100.0 * stats.tp / stats.rays


def wrong_closest_rate(stats: RayKindStats) -> float:
    if stats.tp <= 0:
        return 0.0
    return stats.wrong_closest / stats.tp


@dataclass
class TableStats:
    entries: int
    stored_nodes: int
    avg_nodes_per_entry: float
    max_nodes_per_entry: int
    memory: MemoryEstimate


def table_stats(table: PredictorTable) -> TableStats:
    sizes = [len(e) for _, e in table.entries()]
    entries = len(sizes)
    stored = table.stored_node_count
    return TableStats(
        entries=entries,
        stored_nodes=stored,
        avg_nodes_per_entry=(stored / entries) if entries else 0.0,
        max_nodes_per_entry=max(sizes) if sizes else 0,
        memory=table.memory_estimate(),
    )


# -- report rows ---------------------------------------------------------------

REPORT_COLUMNS = [
    "scene", "mode", "ray_kind", "precision", "go_up_level", "spp",
    "resolution", "seed", "status",
    "rays", "consulted", "tp", "fp", "neg",
    "baseline_box_tests", "baseline_tri_tests",
    "overhead_box_tests", "overhead_tri_tests",
    "skipped_box_tests", "skipped_box_tests_estimated",
    "savings_percent", "net_savings_percent", "fully_skipped_percent",
    "wrong_closest", "wrong_closest_rate",
    "table_entries", "table_stored_nodes", "avg_nodes_per_entry",
    "max_nodes_per_entry", "table_memory_bytes",
]

_FLOAT_COLUMNS = {
    "savings_percent", "net_savings_percent", "fully_skipped_percent",
    "wrong_closest_rate", "avg_nodes_per_entry",
}


def report_row(scene: str, mode: str, ray_kind: str, precision: int,
               go_up_level: int, spp: int, resolution: str, seed: int,
               stats: RayKindStats, tstats: Optional[TableStats],
               status: str = "ok") -> dict:
    row = {
        "scene": scene,
        "mode": mode,
        "ray_kind": ray_kind,
        "precision": precision,
        "go_up_level": go_up_level,
        "spp": spp,
        "resolution": resolution,
        "seed": seed,
        "status": status,
        "rays": stats.rays,
        "consulted": stats.consulted,
        "tp": stats.tp,
        "fp": stats.fp,
        "neg": stats.neg,
        "baseline_box_tests": stats.baseline_box_tests,
        "baseline_tri_tests": stats.baseline_tri_tests,
        "overhead_box_tests": stats.overhead_box_tests,
        "overhead_tri_tests": stats.overhead_tri_tests,
        "skipped_box_tests": stats.skipped_box_tests,
        "skipped_box_tests_estimated": stats.skipped_box_tests_estimated,
        "savings_percent": (savings_percent(stats)
                            if stats.baseline_box_tests > 0 else 0.0),
        "net_savings_percent": (net_savings_percent(stats)
                                if stats.baseline_box_tests > 0 else 0.0),
        "fully_skipped_percent": fully_skipped_percent(stats),
        "wrong_closest": stats.wrong_closest,
        "wrong_closest_rate": wrong_closest_rate(stats),
        "table_entries": tstats.entries if tstats else 0,
        "table_stored_nodes": tstats.stored_nodes if tstats else 0,
        "avg_nodes_per_entry": tstats.avg_nodes_per_entry if tstats else 0.0,
        "max_nodes_per_entry": tstats.max_nodes_per_entry if tstats else 0,
        "table_memory_bytes": tstats.memory.total_bytes if tstats else 0,
    }
    return row


def failed_row(scene: str, mode: str, ray_kind: str, precision: int,
               go_up_level: int, spp: int, resolution: str, seed: int,
               message: str) -> dict:
    row = report_row(scene, mode, ray_kind, precision, go_up_level, spp,
                     resolution, seed, RayKindStats(), None,
                     status=f"failed: {message}")
    return row


def _format_cell(col: str, value) -> str:
    if col in _FLOAT_COLUMNS:
        return f"{float(value):.6f}"
    return str(value)


def render_csv(rows: Iterable[dict], timestamp: bool = True) -> str:
    """Stable-column CSV text; the timestamp header line is optional so
    identical runs can produce identical bytes."""
    buf = io.StringIO()
    if timestamp:
        now = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        buf.write(f"# generated {now}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in rows:
        writer.writerow([_format_cell(c, row.get(c, "")) for c in REPORT_COLUMNS])
    return buf.getvalue()


def write_csv(rows: Iterable[dict], path, timestamp: bool = True):
    text = render_csv(rows, timestamp=timestamp)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def write_json(rows: Iterable[dict], path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(list(rows), f, indent=2, sort_keys=True)
        f.write("\n")
