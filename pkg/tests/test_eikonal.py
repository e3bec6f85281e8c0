import math

import numpy as np
import pytest

from busefield.eikonal import (ScalarField, SourceSet, eikonal_residual,
                               load_field_csv, save_field_csv, save_field_pgm,
                               solve_distance)
from busefield.errors import DataError, DomainError, ValidationError
from busefield.metric import (cylinder_chart, euclidean_chart,
                              half_plane_chart)


@pytest.fixture(scope="module")
def euclid_point_field():
    chart = euclidean_chart(bounds=(-2, 2, -2, 2), resolution=(129, 129))
    fld = solve_distance(chart, SourceSet.from_points([(0.0, 0.0)]))
    return chart, fld


def test_euclidean_distance_matches_norm(euclid_point_field):
    chart, fld = euclid_point_field
    xs, ys = fld.grid_axes()
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    err = np.abs(fld.values - np.hypot(X, Y))[fld.valid_mask]
    assert err.max() <= 2.0 * chart.h_max


def test_euclidean_distance_spot_value():
    chart = euclidean_chart(bounds=(-1, 4, -1, 5), resolution=(161, 193))
    fld = solve_distance(chart, SourceSet.from_points([(0.0, 0.0)]))
    assert abs(fld.value_at((3.0, 4.0)) - 5.0) <= 2.0 * chart.h_max


def test_euclidean_center_source_symmetry():
    chart = euclidean_chart(bounds=(-1, 1, -1, 1), resolution=(65, 65))
    fld = solve_distance(chart, SourceSet.from_points([(0.0, 0.0)]))
    v = fld.values
    assert np.max(np.abs(v - v[::-1, :])) < 1e-12
    assert np.max(np.abs(v - v[:, ::-1])) < 1e-12
    assert np.max(np.abs(v - v.T)) < 1e-12


def test_half_plane_distance_spot_value():
    chart = half_plane_chart(bounds=(-1.5, 1.5, 0.5, 3.0),
                             resolution=(129, 129))
    fld = solve_distance(chart, SourceSet.from_points([(0.0, 1.0)]))
    exact = math.acosh(1.5)
    assert abs(fld.value_at((1.0, 1.0)) - exact) <= 3.0 * chart.h_max


def test_cylinder_distance_uses_shorter_way_around():
    chart = cylinder_chart(resolution=(128, 64))
    fld = solve_distance(chart, SourceSet.from_points([(0.0, 0.0)]))
    # the wrapped geodesic distance to x = 3pi/2 goes backwards through 0
    d = fld.value_at((1.5 * math.pi, 0.0))
    assert abs(d - 0.5 * math.pi) <= 3.0 * chart.h_max


def test_residual_is_near_one_off_source(euclid_point_field):
    chart, fld = euclid_point_field
    xs, ys = fld.grid_axes()
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    exclude = np.hypot(X, Y) < 0.3
    res = eikonal_residual(chart, fld, exclude)
    assert res["median"] <= 5.0 * chart.h_max


def test_source_outside_domain_is_rejected():
    chart = euclidean_chart(bounds=(-1, 1, -1, 1), resolution=(33, 33))
    with pytest.raises(DomainError):
        solve_distance(chart, SourceSet.from_points([(5.0, 0.0)]))


def test_circle_source_distance_is_offset_norm():
    chart = euclidean_chart(bounds=(-2, 2, -2, 2), resolution=(129, 129))
    fld = solve_distance(chart, SourceSet.from_circle((0.0, 0.0), 1.0))
    outside = fld.value_at((0.0, 1.8))
    assert abs(outside - 0.8) <= 3.0 * chart.h_max


def test_csv_round_trip_is_bit_exact(tmp_path, euclid_point_field):
    _, fld = euclid_point_field
    p1 = tmp_path / "field.csv"
    p2 = tmp_path / "field2.csv"
    save_field_csv(fld, str(p1))
    back = load_field_csv(str(p1))
    assert np.array_equal(back.values, fld.values)
    assert np.array_equal(back.valid_mask, fld.valid_mask)
    assert back.tag == fld.tag
    save_field_csv(back, str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_csv_loader_rejects_garbage(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("not,a,field\n1,2,3\n")
    with pytest.raises((ValidationError, DataError)):
        load_field_csv(str(p))


def test_pgm_export_writes_preview(tmp_path, euclid_point_field):
    _, fld = euclid_point_field
    p = tmp_path / "field.pgm"
    save_field_pgm(fld, str(p))
    head = p.read_text().splitlines()[0]
    assert head.strip() == "P2"


def test_with_values_keeps_geometry(euclid_point_field):
    _, fld = euclid_point_field
    other = fld.with_values(-fld.values, tag="busemann")
    assert other.tag == "busemann"
    assert other.spacing == fld.spacing
    assert np.array_equal(other.valid_mask, fld.valid_mask)
    with pytest.raises(ValidationError):
        fld.with_values(fld.values, tag="nonsense")
