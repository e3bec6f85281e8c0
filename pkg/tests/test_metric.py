import numpy as np
import pytest

from busefield.errors import DomainError, ValidationError
from busefield.metric import (KINDS, custom_chart, cylinder_chart,
                              euclidean_chart, half_plane_chart,
                              paraboloid_chart)

CHART_FACTORIES = {
    "euclidean": euclidean_chart,
    "half_plane": half_plane_chart,
    "cylinder": cylinder_chart,
    "paraboloid": paraboloid_chart,
}


@pytest.mark.parametrize("kind", KINDS[:4])
def test_tensor_is_spd_on_grid(kind):
    chart = CHART_FACTORIES[kind](resolution=(17, 17))
    g11, g12, g22 = chart.tensor_grids()
    det = g11 * g22 - g12 ** 2
    assert np.all(g11 > 0)
    assert np.all(det > 0)


def test_euclidean_tensor_is_identity():
    chart = euclidean_chart(resolution=(9, 9))
    g11, g12, g22 = chart.tensor(0.3, -1.2)
    np.testing.assert_allclose([g11, g12, g22], [1.0, 0.0, 1.0])


def test_half_plane_tensor_scales_like_inverse_y_squared():
    chart = half_plane_chart(resolution=(9, 9))
    g11, g12, g22 = chart.tensor(0.0, 2.0)
    np.testing.assert_allclose([g11, g12, g22], [0.25, 0.0, 0.25],
                               atol=1e-14)


def test_paraboloid_tensor_matches_graph_metric():
    chart = paraboloid_chart(resolution=(9, 9))
    x, y = 0.7, -0.4
    g11, g12, g22 = chart.tensor(x, y)
    np.testing.assert_allclose([g11, g12, g22],
                               [1.0 + x * x, x * y, 1.0 + y * y], atol=1e-12)


def test_cylinder_wraps_points_periodically():
    chart = cylinder_chart(resolution=(16, 16))
    x, y = chart.wrap_point((2.0 * np.pi + 0.3, 0.5))
    assert abs(x - 0.3) < 1e-12
    assert y == 0.5


def test_contains_and_require_inside():
    chart = euclidean_chart(bounds=(-1, 1, -1, 1), resolution=(9, 9))
    assert chart.contains((0.0, 0.0))
    assert not chart.contains((2.0, 0.0))
    with pytest.raises(DomainError):
        chart.require_inside((2.0, 0.0))


def test_spacing_and_axes_are_consistent():
    chart = euclidean_chart(bounds=(-2, 2, -2, 2), resolution=(41, 21))
    hx, hy = chart.spacing
    xs, ys = chart.grid_axes()
    assert abs(hx - 0.1) < 1e-12
    assert abs(hy - 0.2) < 1e-12
    assert xs.shape == (41,) and ys.shape == (21,)
    assert abs(xs[0] + 2.0) < 1e-12 and abs(xs[-1] - 2.0) < 1e-12


def test_custom_chart_expression_tensor():
    chart = custom_chart((-1, 1, 0.5, 2), (9, 9),
                         "1 / y^2", "0", "1 / y^2")
    ref = half_plane_chart(bounds=(-1, 1, 0.5, 2), resolution=(9, 9))
    np.testing.assert_allclose(np.asarray(chart.tensor(0.3, 1.5), float),
                               np.asarray(ref.tensor(0.3, 1.5), float),
                               atol=1e-12)


def test_custom_chart_rejects_bad_expression():
    with pytest.raises(ValidationError):
        custom_chart((-1, 1, -1, 1), (9, 9), "__import__('os')", "0", "1")


def test_half_plane_rejects_nonpositive_y():
    with pytest.raises((DomainError, ValidationError)):
        half_plane_chart(bounds=(-1, 1, -0.5, 3))
