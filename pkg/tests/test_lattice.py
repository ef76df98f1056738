import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from honeystrain.lattice import (SIGMA1, SIGMA2, SIGMA3, TAU, build_lattice, reduce_to_bz,
                                 rotation_image_index)

finite = st.floats(-30, 30, allow_nan=False, allow_infinity=False)
ints = st.integers(-6, 6)


def test_duality(lattice):
    V = np.array([lattice.v1, lattice.v2])
    Kd = np.array([lattice.k1, lattice.k2])
    np.testing.assert_allclose(V @ Kd.T, 2 * np.pi * np.eye(2), atol=1e-13)
    assert lattice.cell_area == pytest.approx(np.sqrt(3) / 2, rel=1e-14)
    assert lattice.bz_area == pytest.approx((2 * np.pi) ** 2 / lattice.cell_area, rel=1e-13)


@pytest.mark.parametrize("scale", [0.5, 1.0, 3.0])
def test_scaled_duality(scale):
    lat = build_lattice(scale)
    V = np.array([lat.v1, lat.v2])
    Kd = np.array([lat.k1, lat.k2])
    np.testing.assert_allclose(V @ Kd.T, 2 * np.pi * np.eye(2), atol=1e-12)


def test_rotation(lattice):
    R = lattice.R
    np.testing.assert_allclose(R @ R @ R, np.eye(2), atol=1e-14)
    np.testing.assert_allclose(R @ lattice.v1, lattice.v2, atol=1e-14)
    np.testing.assert_allclose(R.T @ R, np.eye(2), atol=1e-14)
    assert np.linalg.det(R) == pytest.approx(1.0)


def test_corner(lattice):
    K = lattice.K
    assert np.linalg.norm(K) == pytest.approx(4 * np.pi / 3, rel=1e-13)
    np.testing.assert_allclose(lattice.Kprime, -K)
    # R K and R^2 K are K shifted by dual lattice vectors
    for RK in (lattice.R @ K, lattice.R @ lattice.R @ K):
        c = lattice.dual_coordinates(RK - K)
        np.testing.assert_allclose(c, np.rint(c), atol=1e-12)
    # K is not equivalent to K'
    c = lattice.dual_coordinates(K - lattice.Kprime)
    assert np.max(np.abs(c - np.rint(c))) > 0.1


def test_pauli_algebra():
    I = np.eye(2)
    for s in (SIGMA1, SIGMA2, SIGMA3):
        np.testing.assert_allclose(s @ s, I)
    np.testing.assert_allclose(SIGMA1 @ SIGMA2, 1j * SIGMA3)
    assert abs(TAU ** 3 - 1) < 1e-15


@settings(max_examples=60, deadline=None)
@given(finite, finite)
def test_reduce_idempotent(kx, ky):
    lat = build_lattice(1.0)
    r = reduce_to_bz(lat, [kx, ky])
    np.testing.assert_allclose(reduce_to_bz(lat, r), r, atol=1e-10)
    assert np.linalg.norm(r) <= np.linalg.norm(lat.K) + 1e-9
    c = lat.dual_coordinates(r - np.array([kx, ky]))
    np.testing.assert_allclose(c, np.rint(c), atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(finite, finite, ints, ints)
def test_reduce_periodic(kx, ky, m1, m2):
    lat = build_lattice(1.0)
    k = np.array([kx, ky])
    a = reduce_to_bz(lat, k)
    b = reduce_to_bz(lat, k + lat.G(np.array([m1, m2])))
    np.testing.assert_allclose(a, b, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(ints, ints)
def test_rotation_index_orbit(m1, m2):
    lat = build_lattice(1.0)
    m = np.array([m1, m2])
    img, rep = rotation_image_index(lat, m)
    assert rep["exact"]
    np.testing.assert_allclose(lat.R @ (lat.K + lat.G(m)), lat.K + lat.G(img), atol=1e-10)
    m3 = m
    for _ in range(3):
        m3, _ = rotation_image_index(lat, m3)
    np.testing.assert_array_equal(m3, m)


def test_rotation_index_bijection(lattice):
    r = np.arange(-5, 6)
    m = np.stack(np.meshgrid(r, r, indexing="ij"), -1).reshape(-1, 2)
    norms = np.linalg.norm(lattice.K + lattice.G(m), axis=1)
    m = m[norms < 20]
    img, rep = rotation_image_index(lattice, m)
    assert rep["exact"]
    assert len({tuple(x) for x in img}) == len(m)
    assert {tuple(x) for x in img} == {tuple(x) for x in m}
    # orbits have size 3 at K (no fixed index)
    assert not np.any(np.all(img == m, axis=1))


def test_rotation_index_broken_convention(lattice):
    from dataclasses import replace
    bad = replace(lattice, R=np.array([[0.0, -1.0], [1.0, 0.0]]))
    img, rep = rotation_image_index(bad, np.array([0, 0]))
    assert img is None and not rep["exact"]
