"""Lateral path-tracking evaluation.

Two instruments: the internal estimate from signed distances between teach
vertices and localized repeat poses, and the ground-truth-style measurement
of marker offsets at pause events.  A third comparison reports the relative
deviation between two repeats of the same graph.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IncompleteCoverage, MarkerMissed
from .repeat import RepeatLog
from .teachmap import PoseGraph
from .world import World

DEFAULT_COVERAGE_DIST = 5.0


@dataclass
class MarkerOffset:
    marker_id: int
    measured: float
    taught: float
    error: float


@dataclass
class EvalReport:
    per_vertex_signed_error: list[float] = field(default_factory=list)
    rmse: float = 0.0
    max_abs: float = 0.0
    marker_offsets: list[MarkerOffset] = field(default_factory=list)
    measurement_noise_sigma: float = 0.0


@dataclass
class RelativeReport:
    per_station_deviation: list[float] = field(default_factory=list)
    max_deviation: float = 0.0


def _vertex_errors(graph: PoseGraph, log: RepeatLog,
                   coverage_dist: float) -> list[float]:
    """Signed lateral error at every teach vertex, via edge relatives only."""
    by_vertex: dict[int, list] = {}
    for e in log.entries:
        by_vertex.setdefault(e.active_vertex, []).append(e)
    errors = []
    for v in graph.vertices:
        best_long = math.inf
        best_lat = 0.0
        for active in range(v.id - 2, v.id + 3):
            if active not in by_vertex:
                continue
            t_va = graph.relative_pose(v.id, active)
            for entry in by_vertex[active]:
                pos = t_va.apply(entry.localized.translation)
                if abs(pos[0]) < abs(best_long):
                    best_long = pos[0]
                    best_lat = pos[1]
        if abs(best_long) > coverage_dist:
            raise IncompleteCoverage(v.id, abs(best_long))
        errors.append(float(best_lat))
    return errors


def _aggregate(errors: list[float]) -> tuple[float, float]:
    arr = np.asarray(errors, dtype=float)
    if arr.size == 0:
        return 0.0, 0.0
    return float(np.sqrt(np.mean(arr * arr))), float(np.max(np.abs(arr)))


def estimate_pte(graph: PoseGraph, log: RepeatLog,
                 coverage_dist: float = DEFAULT_COVERAGE_DIST) -> EvalReport:
    """Internal path-tracking-error estimate from the localization chain.

    For every teach vertex, the repeat sample with the smallest longitudinal
    coordinate in that vertex frame contributes its signed lateral offset.

    Raises:
        IncompleteCoverage: some vertex has no sample within coverage_dist
            longitudinally.
    """
    errors = _vertex_errors(graph, log, coverage_dist)
    rmse, max_abs = _aggregate(errors)
    return EvalReport(errors, rmse, max_abs)


def measure_markers(world: World, log: RepeatLog, taught_offsets: dict[int, float],
                    noise_sigma: float = 0.02, seed: int = 0) -> EvalReport:
    """Marker-offset measurement with tape-measure noise.

    Uses the noiseless geometric offsets recorded at pause events, adds
    Gaussian measurement noise, and reports error = measured - taught.

    Raises:
        MarkerMissed: a world marker has no pause event.
    """
    events = {m.marker_id: m for m in log.marker_events}
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x7A9E]))
    offsets = []
    for marker in world.markers:
        event = events.get(marker.id)
        if event is None:
            raise MarkerMissed(marker.id)
        measured = event.measured_offset
        if noise_sigma > 0:
            measured += float(rng.normal(0.0, noise_sigma))
        taught = float(taught_offsets[marker.id])
        offsets.append(MarkerOffset(marker.id, measured, taught, measured - taught))
    errors = [o.error for o in offsets]
    rmse, max_abs = _aggregate(errors)
    return EvalReport([], rmse, max_abs, offsets, noise_sigma)


def compare_repeats(graph: PoseGraph, log_a: RepeatLog, log_b: RepeatLog,
                    coverage_dist: float = DEFAULT_COVERAGE_DIST) -> RelativeReport:
    """Relative deviation between two repeats at every teach vertex."""
    ea = _vertex_errors(graph, log_a, coverage_dist)
    eb = _vertex_errors(graph, log_b, coverage_dist)
    dev = [b - a for a, b in zip(ea, eb)]
    max_dev = max((abs(d) for d in dev), default=0.0)
    return RelativeReport(dev, max_dev)


# --- reports ----------------------------------------------------------------

REPORT_VERSION = 1
# CSV column order (documented contract): kind, id, value, measured, taught, error.
_CSV_HEADER = ["kind", "id", "value", "measured", "taught", "error"]


def emit_report(report: EvalReport | RelativeReport, format: str = "json",
                extra: dict | None = None) -> str:
    """Deterministic serialization of a report to json or csv text."""
    if format == "json":
        doc: dict = {"version": REPORT_VERSION}
        if extra:
            doc.update(extra)
        if isinstance(report, EvalReport):
            doc["type"] = "absolute"
            doc["per_vertex_signed_error"] = report.per_vertex_signed_error
            doc["rmse"] = report.rmse
            doc["max_abs"] = report.max_abs
            doc["measurement_noise_sigma"] = report.measurement_noise_sigma
            doc["marker_offsets"] = [
                {"marker_id": o.marker_id, "measured": o.measured,
                 "taught": o.taught, "error": o.error}
                for o in report.marker_offsets
            ]
        else:
            doc["type"] = "relative"
            doc["per_station_deviation"] = report.per_station_deviation
            doc["max_deviation"] = report.max_deviation
        return json.dumps(doc, indent=2) + "\n"
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_CSV_HEADER)
        if isinstance(report, EvalReport):
            for i, err in enumerate(report.per_vertex_signed_error):
                writer.writerow(["vertex", i, repr(err), "", "", ""])
            for o in report.marker_offsets:
                writer.writerow(["marker", o.marker_id, "", repr(o.measured),
                                 repr(o.taught), repr(o.error)])
        else:
            for i, d in enumerate(report.per_station_deviation):
                writer.writerow(["station", i, repr(d), "", "", ""])
        return buf.getvalue()
    raise ValueError(f"unknown report format {format!r}")


def report_from_json(text: str) -> EvalReport | RelativeReport:
    doc = json.loads(text)
    if doc["type"] == "absolute":
        offsets = [MarkerOffset(o["marker_id"], o["measured"], o["taught"], o["error"])
                   for o in doc["marker_offsets"]]
        return EvalReport(doc["per_vertex_signed_error"], doc["rmse"], doc["max_abs"],
                          offsets, doc["measurement_noise_sigma"])
    return RelativeReport(doc["per_station_deviation"], doc["max_deviation"])
