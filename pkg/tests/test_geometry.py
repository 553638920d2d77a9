import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from curl_codec.errors import EmptyCloud, ZeroRange
from curl_codec.geometry import (
    DepthImage,
    PointCloud,
    SensorModel,
    cart_to_spherical,
    project_to_depth_image,
    spherical_to_cart,
    unproject_depth_image,
)

coord = st.floats(-1e3, 1e3, allow_nan=False)


def test_cart_to_spherical_on_axes():
    p, a, r = cart_to_spherical([0, 0, 5])
    assert (p, a, r) == (0.0, 0.0, 5.0)
    p, a, r = cart_to_spherical([3, 0, 4])
    assert r == 5.0 and a == 0.0 and p == pytest.approx(math.atan2(3, 4), abs=1e-15)


def test_cart_to_spherical_diagonal_inverts_forward_transform():
    p, a, r = cart_to_spherical([1.0, 1.0, 1.0])
    assert r == pytest.approx(math.sqrt(3))
    assert p == pytest.approx(math.acos(1 / math.sqrt(3)))
    assert a == pytest.approx(math.pi / 4)
    # forward transform written out by hand
    x = r * math.sin(p) * math.cos(a)
    y = r * math.sin(p) * math.sin(a)
    z = r * math.cos(p)
    assert np.allclose([x, y, z], [1, 1, 1], rtol=1e-12)


def test_cart_to_spherical_rejects_origin():
    with pytest.raises(ZeroRange):
        cart_to_spherical([0.0, 0.0, 0.0])


def test_azimuth_stays_below_two_pi():
    _, a, _ = cart_to_spherical([1.0, -1e-300, 0.0])
    assert 0.0 <= a < 2 * math.pi


@pytest.mark.parametrize(
    "s, want",
    [((0.0, 1.3, 2.0), (0, 0, 2)), ((math.pi / 2, 0.0, 1.0), (1, 0, 0)),
     ((math.pi / 2, math.pi / 2, 3.0), (0, 3, 0))],
)
def test_spherical_to_cart_examples(s, want):
    assert np.allclose(spherical_to_cart(*s), want, atol=1e-15)


@given(coord, coord, coord)
def test_spherical_round_trip(x, y, z):
    p = np.array([x, y, z])
    n = np.linalg.norm(p)
    if n < 1e-6:
        return
    back = spherical_to_cart(*cart_to_spherical(p))
    assert np.linalg.norm(back - p) <= 1e-9 * n
    assert np.linalg.norm(back) == pytest.approx(n, rel=1e-12)


def test_sensor_invariants():
    with pytest.raises(ValueError):
        SensorModel(0.0, 4, 4)
    with pytest.raises(ValueError):
        SensorModel(1.0, 0, 4)
    with pytest.raises(ValueError):
        SensorModel(1.0, 4, 4, row_rate=0)
    with pytest.raises(ValueError):
        SensorModel(1.0, 4, 4, horizontal_fov=7.0)
    s = SensorModel(1.0, 4, 8, row_rate=2, col_rate=3)
    assert s.shape == (8, 24)
    assert s.dv == pytest.approx(1.0 / 8) and s.dh == pytest.approx(2 * math.pi / 24)


def test_projection_single_point_lands_in_middle_row():
    s = SensorModel(math.pi / 6, 4, 8)
    img = project_to_depth_image(PointCloud([[7.0, 0.0, 0.0]]), s)
    # elevation 0 -> (0 + pi/12) / (pi/24) = 2
    assert np.argwhere(img.valid).tolist() == [[2, 0]]
    assert img.ranges[2, 0] == 7.0


def test_projection_nearest_wins_and_counts_skips():
    s = SensorModel(math.pi / 6, 4, 8)
    pts = [[5.0, 0.0, 0.0], [7.0, 0.0, 0.0], [1.0, 0.0, 5.0]]
    img = project_to_depth_image(PointCloud(pts), s)
    assert img.count() == 1 and img.ranges[2, 0] == 5.0
    assert img.skipped == 1
    assert img.point_index[2, 0] == 0


def test_projection_is_order_independent():
    rng = np.random.default_rng(3)
    s = SensorModel(math.radians(30), 8, 32)
    pts = rng.normal(size=(500, 3)) * [10, 10, 1]
    pts = np.vstack([pts, pts[:50] * 1.0])  # exact duplicates
    a = project_to_depth_image(PointCloud(pts), s)
    perm = rng.permutation(len(pts))
    b = project_to_depth_image(PointCloud(pts[perm]), s)
    assert np.array_equal(a.ranges, b.ranges) and np.array_equal(a.valid, b.valid)
    assert np.array_equal(pts[a.point_index[a.valid]], pts[perm][b.point_index[b.valid]])


def test_projection_rejects_empty_cloud():
    with pytest.raises(EmptyCloud):
        project_to_depth_image(PointCloud(np.empty((0, 3))), SensorModel(1.0, 4, 4))


def test_unproject_all_empty_and_constant():
    s = SensorModel(math.radians(30), 8, 8)
    assert len(unproject_depth_image(DepthImage.empty(s))) == 0
    img = DepthImage(np.full((8, 8), 10.0), np.ones((8, 8), bool), s)
    pc = unproject_depth_image(img)
    assert len(pc) == 64
    assert np.allclose(np.linalg.norm(pc.points, axis=1), 10.0)


def test_unproject_uses_cell_centres():
    s = SensorModel(math.radians(20), 4, 16)
    ranges = np.zeros((4, 16))
    valid = np.zeros((4, 16), bool)
    ranges[1, 3], valid[1, 3] = 2.0, True
    (p,) = unproject_depth_image(DepthImage(ranges, valid, s)).points
    polar, az, r = cart_to_spherical(p)
    assert r == pytest.approx(2.0)
    assert 0.5 * math.pi - polar == pytest.approx(1.5 * s.dv - 0.5 * s.vertical_fov)
    assert az == pytest.approx(3.5 * s.dh)


def test_projection_quantisation_bound():
    rng = np.random.default_rng(5)
    s = SensorModel(math.radians(30), 16, 64)
    d = rng.normal(size=(2000, 3))
    d[:, 2] *= 0.1
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    pts = d * rng.uniform(1, 50, (2000, 1))
    img = project_to_depth_image(PointCloud(pts), s)
    back = unproject_depth_image(img).points
    orig = pts[img.point_index[img.valid]]
    r = np.linalg.norm(orig, axis=1)
    assert np.allclose(np.linalg.norm(back, axis=1), r, rtol=1e-12)
    assert (np.linalg.norm(back - orig, axis=1) <= r * math.hypot(s.dv, s.dh) + 1e-12).all()


def test_depth_image_rejects_bad_ranges():
    s = SensorModel(1.0, 2, 2)
    with pytest.raises(ValueError):
        DepthImage(np.array([[1.0, -1.0], [1.0, 1.0]]), np.ones((2, 2), bool), s)
    with pytest.raises(ValueError):
        DepthImage(np.ones((3, 2)), np.ones((3, 2), bool), s)


def test_point_cloud_validation():
    with pytest.raises(ValueError):
        PointCloud([[np.nan, 0, 0]])
    with pytest.raises(ValueError):
        PointCloud([[1, 2, 3]], intensity=[1, 2])
