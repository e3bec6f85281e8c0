import math

import numpy as np
import pytest

from busefield.errors import PreconditionError, ValidationError
from busefield.geodesic import (glue_line, integrate_geodesic, is_ray,
                                line_spec, ray_spec, trace_coray)
from busefield.metric import (christoffel_at, cylinder_chart, euclidean_chart,
                              gnorm_vector, half_plane_chart)


def test_euclidean_christoffel_vanishes():
    chart = euclidean_chart(resolution=(17, 17))
    gamma = np.asarray(christoffel_at(chart, (0.3, -0.7)), float)
    assert np.max(np.abs(gamma)) < 1e-10


def test_euclidean_geodesic_is_straight():
    chart = euclidean_chart(bounds=(-1, 6, -1, 1), resolution=(71, 21))
    path = integrate_geodesic(chart, (0.0, 0.0), (1.0, 0.0), 5.0, dt=0.01)
    end = path.point_at(path.t_end)
    assert abs(path.t_end - 5.0) < 0.05
    np.testing.assert_allclose(end, (5.0, 0.0), atol=1e-6)


def test_geodesic_has_unit_speed():
    chart = half_plane_chart(resolution=(65, 65))
    path = integrate_geodesic(chart, (0.0, 1.0), (0.0, 1.0), 0.8, dt=0.01)
    speeds = [gnorm_vector(chart, p, v)
              for p, v in zip(path.points, path.velocities)]
    np.testing.assert_allclose(speeds, 1.0, atol=1e-6)


def test_half_plane_vertical_geodesic_is_exponential_in_t():
    chart = half_plane_chart(bounds=(-1, 1, 0.5, 3), resolution=(65, 65))
    path = integrate_geodesic(chart, (0.0, 1.0), (0.0, 1.0), 1.0, dt=0.005)
    x, y = path.point_at(1.0)
    assert abs(x) < 1e-8
    assert abs(y - math.e) < 1e-4


def test_half_plane_tilted_geodesic_bends_to_semicircle():
    # geodesics through (0,1) with horizontal initial velocity follow the
    # unit semicircle x^2 + y^2 = 1
    chart = half_plane_chart(bounds=(-1, 1, 0.05, 3), resolution=(65, 65))
    path = integrate_geodesic(chart, (0.0, 1.0), (1.0, 0.0), 1.5, dt=0.002)
    radii = np.linalg.norm(path.points, axis=1)
    np.testing.assert_allclose(radii, 1.0, atol=1e-4)


def test_path_state_at_rejects_out_of_range():
    chart = euclidean_chart(resolution=(33, 33))
    path = integrate_geodesic(chart, (0.0, 0.0), (1.0, 0.0), 1.0, dt=0.01)
    with pytest.raises(PreconditionError):
        path.state_at(10.0)


def test_reversed_path_runs_backwards():
    chart = euclidean_chart(resolution=(33, 33))
    path = integrate_geodesic(chart, (0.0, 0.0), (1.0, 0.0), 1.0, dt=0.01)
    rev = path.reversed()
    np.testing.assert_allclose(rev.point_at(rev.t0),
                               path.point_at(path.t_end), atol=1e-12)
    np.testing.assert_allclose(rev.point_at(0.0), path.point_at(0.0),
                               atol=1e-12)


def test_ray_spec_normalizes_direction():
    chart = half_plane_chart(resolution=(33, 33))
    ray = ray_spec(chart, (0.0, 2.0), (0.0, 5.0), horizon=4.0)
    assert abs(gnorm_vector(chart, ray.base, ray.direction) - 1.0) < 1e-12


def test_ray_spec_rejects_zero_direction():
    chart = euclidean_chart(resolution=(33, 33))
    with pytest.raises(ValidationError):
        ray_spec(chart, (0.0, 0.0), (0.0, 0.0), horizon=4.0)


def test_is_ray_accepts_straight_euclidean_path():
    chart = euclidean_chart(bounds=(-2, 2, -2, 2), resolution=(65, 65))
    path = integrate_geodesic(chart, (-1.5, 0.0), (1.0, 0.0), 3.0, dt=0.01)
    verdict = is_ray(chart, path)
    assert verdict.passed
    assert verdict.worst_violation <= verdict.tolerance


def test_glue_line_accepts_opposite_euclidean_rays():
    chart = euclidean_chart(bounds=(-2, 2, -2, 2), resolution=(65, 65))
    plus = integrate_geodesic(chart, (0.0, 0.0), (1.0, 0.0), 1.8, dt=0.01)
    minus = integrate_geodesic(chart, (0.0, 0.0), (-1.0, 0.0), 1.8, dt=0.01)
    glued, verdict = glue_line(chart, plus, minus)
    assert verdict.passed
    assert abs(glued.t0 + 1.8) < 0.05


def test_glue_line_rejects_kinked_pair():
    chart = euclidean_chart(bounds=(-2, 2, -2, 2), resolution=(65, 65))
    plus = integrate_geodesic(chart, (0.0, 0.0), (1.0, 0.0), 1.8, dt=0.01)
    kinked = integrate_geodesic(chart, (0.0, 0.0), (0.0, 1.0), 1.8, dt=0.01)
    with pytest.raises(PreconditionError):
        glue_line(chart, plus, kinked)


def test_glue_line_rejects_waist_circle_on_cylinder():
    # the horizontal geodesic around the cylinder waist is closed, so far
    # apart parameter pairs are joined by a shorter arc the other way round
    chart = cylinder_chart(resolution=(64, 64))
    plus = integrate_geodesic(chart, (math.pi, 0.0), (1.0, 0.0), 2.8, dt=0.01)
    minus = integrate_geodesic(chart, (math.pi, 0.0), (-1.0, 0.0), 2.8,
                               dt=0.01)
    _, verdict = glue_line(chart, plus, minus)
    assert not verdict.passed


def test_trace_coray_follows_linear_busemann_field():
    from busefield.eikonal import ScalarField
    chart = euclidean_chart(bounds=(-2, 2, -2, 2), resolution=(65, 65))
    xs, ys = chart.grid_axes()
    X, _ = np.meshgrid(xs, ys, indexing="ij")
    fld = ScalarField(values=-X, origin=(xs[0], ys[0]),
                      spacing=chart.spacing,
                      valid_mask=np.ones_like(X, bool), tag="busemann")
    trace = trace_coray(chart, fld, (0.0, 0.5), horizon=1.2, dt=0.02)
    assert abs(trace.slope + 1.0) <= 0.05
    end = trace.path.point_at(trace.path.t_end)
    assert abs(end[1] - 0.5) < 0.05
    assert end[0] > 1.0


def test_line_spec_reversal_flips_orientation():
    chart = cylinder_chart(resolution=(64, 64))
    line = line_spec(chart, (0.5, 0.0), (0.0, 1.0), horizon=6.0)
    rev = line.reversed()
    assert rev.plus.direction == line.minus.direction
    assert rev.minus.direction == line.plus.direction
