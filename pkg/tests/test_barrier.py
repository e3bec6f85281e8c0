import math

import numpy as np
import pytest

from busefield.barrier import (build_line_fields, classify_lines,
                               coray_bound_check, equivalent, line_sum_test,
                               precedes, pseudo_distance, quad_bound_constant,
                               zero_set)
from busefield.busemann import TruncationSchedule, busemann_field
from busefield.geodesic import line_spec, ray_spec, trace_coray
from busefield.metric import euclidean_chart, half_plane_chart

SCHED = TruncationSchedule(t_values=(12.0, 18.0, 24.0), cauchy_tol=0.5)


@pytest.fixture(scope="module")
def euclid_chart():
    return euclidean_chart(bounds=(-2, 2, -2, 2), resolution=(65, 65))


@pytest.fixture(scope="module")
def euclid_line(euclid_chart):
    line = line_spec(euclid_chart, (0.0, 0.0), (1.0, 0.0), horizon=30.0)
    return build_line_fields(euclid_chart, line, SCHED, dt=0.02)


@pytest.fixture(scope="module")
def euclid_parallel(euclid_chart):
    line = line_spec(euclid_chart, (0.0, 1.0), (1.0, 0.0), horizon=30.0)
    return build_line_fields(euclid_chart, line, SCHED, dt=0.02)


@pytest.fixture(scope="module")
def euclid_perp(euclid_chart):
    line = line_spec(euclid_chart, (0.0, 0.0), (0.0, 1.0), horizon=30.0)
    return build_line_fields(euclid_chart, line, SCHED, dt=0.02)


def test_euclid_barrier_vanishes_identically(euclid_chart, euclid_line):
    bf = euclid_line.barrier
    vals = bf.field.values[bf.field.valid_mask]
    assert np.abs(vals).max() <= 3.0 * euclid_chart.h_max


def test_barrier_is_bounded_below(euclid_chart, euclid_line):
    bf = euclid_line.barrier
    assert bf.field.values[bf.field.valid_mask].min() >= \
        -3.0 * euclid_chart.h_max


def test_euclid_zero_set_covers_chart_and_foliates(euclid_chart, euclid_line):
    mask, verdict = zero_set(euclid_chart, euclid_line.barrier, seed=0)
    assert verdict.passed
    # B == 0 everywhere in flat space, so all interior cells are marked
    interior_fraction = mask.count / mask.marked.size
    assert interior_fraction > 0.5


def test_quad_bound_near_zero_on_flat_chart(euclid_chart, euclid_line):
    c_hat, _ = quad_bound_constant(euclid_chart, euclid_line.barrier,
                                   (-1.5, 1.5, -1.5, 1.5), d_min_cells=12)
    assert c_hat <= 0.5


def test_parallel_line_precedes(euclid_chart, euclid_line, euclid_parallel):
    verdict = precedes(euclid_chart, euclid_parallel.line, euclid_line)
    assert verdict.holds


def test_perpendicular_line_does_not_precede(euclid_chart, euclid_line,
                                             euclid_perp):
    # the barrier vanishes, but the Busemann slope along a perpendicular
    # is 0 rather than -1, so clause (b) fails
    verdict = precedes(euclid_chart, euclid_perp.line, euclid_line)
    assert not verdict.holds
    assert verdict.evidence["slope_plus_defect"] > 0.05


def test_parallel_lines_are_equivalent(euclid_chart, euclid_line,
                                       euclid_parallel):
    verdict = equivalent(euclid_chart, euclid_line, euclid_parallel)
    assert verdict.holds
    assert verdict.evidence["routes_agree"]


def test_reversed_line_is_not_equivalent(euclid_chart, euclid_line):
    rev_line = euclid_line.line.reversed()
    rev = build_line_fields(euclid_chart, rev_line, SCHED, dt=0.02)
    verdict = equivalent(euclid_chart, euclid_line, rev)
    assert not verdict.holds
    assert verdict.evidence["routes_agree"]


def test_classify_groups_parallel_lines(euclid_chart, euclid_line,
                                        euclid_parallel, euclid_perp):
    groups, _ = classify_lines(
        euclid_chart, [euclid_line, euclid_parallel, euclid_perp])
    as_sets = sorted(tuple(sorted(g)) for g in groups)
    assert as_sets == [(0, 1), (2,)]


def test_line_sum_opposite_rays_agree(euclid_chart):
    plus = ray_spec(euclid_chart, (0.0, 0.0), (1.0, 0.0), horizon=30.0)
    minus = ray_spec(euclid_chart, (0.0, 0.0), (-1.0, 0.0), horizon=30.0)
    b1, _ = busemann_field(euclid_chart, plus, SCHED, dt=0.02)
    b2, _ = busemann_field(euclid_chart, minus, SCHED, dt=0.02)
    verdict = line_sum_test(euclid_chart, plus, minus, b1, b2)
    assert verdict.passed
    assert verdict.details["field_says_line"]
    assert verdict.details["glue_says_line"]


def test_line_sum_perpendicular_rays_agree_negative(euclid_chart):
    r1 = ray_spec(euclid_chart, (0.0, 0.0), (1.0, 0.0), horizon=30.0)
    r2 = ray_spec(euclid_chart, (0.0, 0.0), (0.0, 1.0), horizon=30.0)
    b1, _ = busemann_field(euclid_chart, r1, SCHED, dt=0.02)
    b2, _ = busemann_field(euclid_chart, r2, SCHED, dt=0.02)
    verdict = line_sum_test(euclid_chart, r1, r2, b1, b2)
    assert verdict.passed
    assert not verdict.details["field_says_line"]
    assert not verdict.details["glue_says_line"]


def test_pseudo_distance_of_preceding_lines_is_small(euclid_chart,
                                                     euclid_line,
                                                     euclid_parallel):
    d = pseudo_distance(euclid_parallel.line, euclid_line.line,
                        euclid_parallel.barrier, euclid_line.barrier)
    assert d <= 6.0 * euclid_chart.h_max


def test_coray_bound_holds_for_translate(euclid_chart, euclid_line):
    b_ray = euclid_line.b_plus
    trace = trace_coray(euclid_chart, b_ray, (-0.8, 0.6), horizon=1.5,
                        dt=0.02)
    coray = ray_spec(euclid_chart, trace.path.point_at(0.0),
                     tuple(trace.path.velocities[0]), horizon=30.0)
    b_coray, _ = busemann_field(euclid_chart, coray, SCHED, dt=0.02)
    ray = euclid_line.line.plus
    verdict = coray_bound_check(ray, coray, b_ray, b_coray,
                                tol=6.0 * euclid_chart.h_max)
    assert verdict.passed


@pytest.mark.parametrize("tau", [0.5, -0.5, 1.0])
def test_half_plane_barrier_translation_invariance(tau):
    chart = half_plane_chart(resolution=(65, 65))
    sched = TruncationSchedule(t_values=(2.0, 3.0, 4.0), cauchy_tol=0.5)
    line = line_spec(chart, (0.0, 1.0), (0.0, 1.0), horizon=8.0)
    lf = build_line_fields(chart, line, sched, dt=0.02)
    bf = lf.barrier
    p = bf.line_path.point_at(tau)
    assert abs(bf.field.value_at(p)) <= 6.0 * chart.h_max


def test_half_plane_barrier_matches_closed_form():
    chart = half_plane_chart(resolution=(65, 65))
    sched = TruncationSchedule(t_values=(2.0, 3.0, 4.0), cauchy_tol=0.5)
    line = line_spec(chart, (0.0, 1.0), (0.0, 1.0), horizon=8.0)
    lf = build_line_fields(chart, line, sched, dt=0.02)
    # closed form B(x, y) = ln(1 + x^2 / y^2); spot check at (0.5, 1.0)
    got = lf.barrier.field.value_at((0.5, 1.0))
    assert abs(got - math.log(1.25)) <= 6.0 * chart.h_max
