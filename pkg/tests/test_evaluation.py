import json
import math

import numpy as np
import pytest

from trsim import presets
from trsim.errors import IncompleteCoverage, MarkerMissed
from trsim.evaluation import (EvalReport, RelativeReport, compare_repeats,
                              emit_report, estimate_pte, measure_markers,
                              report_from_json)
from trsim.repeat import LogEntry, IcpResult, MarkerEvent, RepeatLog
from trsim.se3 import Transform, Twist
from trsim.teachmap import TeachPath, build_pose_graph
from trsim.world import generate_world, place_markers

from conftest import random_transform


def straight_graph(length=200.0, vertex_spacing=2.0):
    n = int(length / 0.1)
    step = Transform.from_translation(0.1, 0, 0)
    return build_pose_graph(TeachPath(Transform.identity(), tuple([step] * n)),
                            vertex_spacing, math.pi / 4)


def synth_log(graph, lateral_fn, step=0.5, length=None):
    """Log of a perfectly-localized drive at lateral offset lateral_fn(s)."""
    if length is None:
        length = sum(np.linalg.norm(e.relative.translation) for e in graph.edges)
    vertex_x = [v.world_pose.translation[0] for v in graph.vertices]
    log = RepeatLog()
    icp = IcpResult(Transform.identity(), 1, 0.0, 1.0, True)
    t = 0.0
    s = 0.0
    while s <= length:
        pose = Transform.from_xyyaw(s, lateral_fn(s), 0.0)
        active = int(np.argmin(np.abs(np.asarray(vertex_x) - s)))
        localized = graph.vertices[active].world_pose.inverse() @ pose
        log.entries.append(LogEntry(t, active, localized, icp, Twist.zero(), pose))
        s += step
        t += 0.1
    log.completed = True
    return log


def test_pte_zero_for_exact_repeat():
    graph = straight_graph()
    log = synth_log(graph, lambda s: 0.0)
    report = estimate_pte(graph, log)
    assert report.rmse == pytest.approx(0.0, abs=1e-12)
    assert report.max_abs == pytest.approx(0.0, abs=1e-12)


def test_pte_constant_offset():
    graph = straight_graph()
    log = synth_log(graph, lambda s: 0.10)
    report = estimate_pte(graph, log)
    assert report.rmse == pytest.approx(0.10, abs=1e-9)
    assert report.max_abs == pytest.approx(0.10, abs=1e-9)
    assert all(e > 0 for e in report.per_vertex_signed_error)


def test_pte_sinusoidal_rms():
    # Amplitude A over integer periods: RMSE -> A/sqrt(2) within 2%.
    amp, wavelength = 0.2, 50.0
    graph = straight_graph(200.0, 2.0)
    log = synth_log(graph, lambda s: amp * math.sin(2 * math.pi * s / wavelength),
                    step=0.1)
    report = estimate_pte(graph, log)
    assert report.rmse == pytest.approx(amp / math.sqrt(2), rel=0.02)


def test_pte_incomplete_coverage():
    graph = straight_graph(100.0, 5.0)
    log = synth_log(graph, lambda s: 0.0, length=50.0)  # stops halfway
    with pytest.raises(IncompleteCoverage):
        estimate_pte(graph, log)


def test_pte_rigid_invariance(rng):
    # Re-expressing the whole scenario in a moved world frame changes nothing.
    graph = straight_graph(100.0, 5.0)
    log = synth_log(graph, lambda s: 0.05 * math.sin(s / 10.0))
    base = estimate_pte(graph, log)
    g = random_transform(rng)
    moved = straight_graph(100.0, 5.0)
    for v in moved.vertices:
        v.world_pose = g @ v.world_pose
    # localized poses are vertex-relative and unchanged; world poses moved.
    log_moved = RepeatLog(entries=[LogEntry(e.time, e.active_vertex, e.localized,
                                            e.icp, e.command, g @ e.true_pose)
                                   for e in log.entries], completed=True)
    again = estimate_pte(moved, log_moved)
    assert np.allclose(base.per_vertex_signed_error, again.per_vertex_signed_error,
                       atol=1e-9)


def _marker_world():
    world = generate_world(presets.empty_flat_world(), seed=0)
    poses = [Transform.from_xyyaw(i * 0.5, 0.0, 0.0) for i in range(81)]  # 40 m
    return place_markers(world, poses, spacing=15.0, lateral_offset=-0.9)


def test_markers_noiseless_exact():
    world = _marker_world()
    log = RepeatLog(marker_events=[MarkerEvent(m.id, 0.18, 1.0 + m.id) for m in world.markers])
    taught = {m.id: 0.18 for m in world.markers}
    report = measure_markers(world, log, taught, noise_sigma=0.0, seed=0)
    assert report.rmse == pytest.approx(0.0, abs=1e-12)
    assert all(o.error == pytest.approx(0.0, abs=1e-12) for o in report.marker_offsets)


def test_markers_offset_detected():
    world = _marker_world()
    events = [MarkerEvent(m.id, 0.18 + (0.2 if m.id == 1 else 0.0), 1.0 + m.id)
              for m in world.markers]
    log = RepeatLog(marker_events=events)
    taught = {m.id: 0.18 for m in world.markers}
    report = measure_markers(world, log, taught, noise_sigma=0.0, seed=0)
    by_id = {o.marker_id: o for o in report.marker_offsets}
    assert by_id[1].error == pytest.approx(0.2, abs=1e-12)
    assert by_id[0].error == pytest.approx(0.0, abs=1e-12)


def test_marker_noise_sigma_calibration():
    # 1000 noisy re-measurements of fixed geometry: sample sigma in [0.018, 0.022].
    world = _marker_world()
    log = RepeatLog(marker_events=[MarkerEvent(m.id, 0.18, 1.0 + m.id) for m in world.markers])
    taught = {m.id: 0.18 for m in world.markers}
    samples = []
    for seed in range(1000):
        report = measure_markers(world, log, taught, noise_sigma=0.02, seed=seed)
        samples.append(report.marker_offsets[0].error)
    assert 0.018 <= float(np.std(samples)) <= 0.022


def test_marker_missed():
    world = _marker_world()
    log = RepeatLog(marker_events=[MarkerEvent(0, 0.18, 1.0)])  # marker 1 missing
    with pytest.raises(MarkerMissed):
        measure_markers(world, log, {m.id: 0.18 for m in world.markers},
                        noise_sigma=0.0, seed=0)


def test_compare_repeats_identical_is_zero():
    graph = straight_graph(100.0, 5.0)
    log = synth_log(graph, lambda s: 0.03 * math.sin(s / 7.0))
    report = compare_repeats(graph, log, log)
    assert report.max_deviation == pytest.approx(0.0, abs=1e-12)


def test_compare_repeats_shifted():
    graph = straight_graph(100.0, 5.0)
    log_a = synth_log(graph, lambda s: 0.0)
    log_b = synth_log(graph, lambda s: 0.05)
    report = compare_repeats(graph, log_a, log_b)
    assert np.allclose(report.per_station_deviation, 0.05, atol=1e-9)


def test_compare_repeats_antisymmetric():
    graph = straight_graph(100.0, 5.0)
    log_a = synth_log(graph, lambda s: 0.02 * math.sin(s / 9.0))
    log_b = synth_log(graph, lambda s: -0.03 * math.cos(s / 5.0))
    ab = compare_repeats(graph, log_a, log_b)
    ba = compare_repeats(graph, log_b, log_a)
    assert np.allclose(ab.per_station_deviation,
                       [-d for d in ba.per_station_deviation], atol=1e-12)


def test_compare_repeats_matches_brute_force(rng):
    graph = straight_graph(100.0, 5.0)
    log_a = synth_log(graph, lambda s: 0.02 * math.sin(s / 9.0))
    log_b = synth_log(graph, lambda s: 0.04 * math.sin(s / 6.0 + 1.0))
    report = compare_repeats(graph, log_a, log_b)
    ea = estimate_pte(graph, log_a).per_vertex_signed_error
    eb = estimate_pte(graph, log_b).per_vertex_signed_error
    brute = max(abs(b - a) for a, b in zip(ea, eb))
    assert report.max_deviation == pytest.approx(brute, abs=1e-12)


def test_rmse_never_exceeds_max():
    graph = straight_graph(100.0, 5.0)
    log = synth_log(graph, lambda s: 0.05 * math.sin(s / 4.0))
    report = estimate_pte(graph, log)
    assert report.rmse <= report.max_abs + 1e-15


def test_emit_report_csv_row_count():
    report = EvalReport([0.1, -0.2, 0.3], 0.2, 0.3,
                        marker_offsets=[], measurement_noise_sigma=0.0)
    text = emit_report(report, "csv")
    assert len(text.strip().splitlines()) == 1 + 3  # header + vertices


def test_emit_report_empty_markers_header_only():
    report = EvalReport([], 0.0, 0.0, [], 0.0)
    text = emit_report(report, "csv")
    assert len(text.strip().splitlines()) == 1


def test_report_json_roundtrip():
    from trsim.evaluation import MarkerOffset
    report = EvalReport([0.1, -0.2], 0.158, 0.2,
                        [MarkerOffset(0, 0.21, 0.18, 0.03)], 0.02)
    text = emit_report(report, "json", extra={"seed": 5})
    back = report_from_json(text)
    assert back.per_vertex_signed_error == report.per_vertex_signed_error
    assert back.rmse == report.rmse
    assert back.marker_offsets[0].error == report.marker_offsets[0].error
    assert json.loads(text)["seed"] == 5


def test_relative_report_json_roundtrip():
    report = RelativeReport([0.01, -0.02, 0.0], 0.02)
    back = report_from_json(emit_report(report, "json"))
    assert back.per_station_deviation == report.per_station_deviation
    assert back.max_deviation == report.max_deviation
