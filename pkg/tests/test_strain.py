import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erf

from honeystrain.dirac_point import DiracPointData
from honeystrain.exceptions import ComplexMu, ConfigError
from honeystrain.grid import PeriodicGrid, fd4_derivative
from honeystrain.strain import (Deformation, GaugeFieldData, StrainGrid, bump, erf_gauge_deformation,
                                erf_integral, gauge_direction, gridded_deformation, jacobian_U,
                                linear_gauge_deformation, magnetic_field, pauli_traces,
                                periodized_erf, pseudo_fields, smooth_step)

REAL = DiracPointData.from_scalars(E_D=11.7, nu_F=4.1, mu=9.0, xi=-18.0)
GRID = PeriodicGrid(40.0, 8.0, 400, 16)
mats = st.lists(st.floats(-2, 2), min_size=4, max_size=4).map(lambda v: np.array(v).reshape(2, 2))


@settings(max_examples=50, deadline=None)
@given(mats)
def test_pauli_trace_identities(U):
    t0, t1, t2, t3 = pauli_traces(U)
    assert t0 == pytest.approx(U[0, 0] + U[1, 1])
    assert t1 == pytest.approx(U[0, 1] + U[1, 0])
    assert t2 == pytest.approx(1j * (U[0, 1] - U[1, 0]))
    assert t3 == pytest.approx(U[0, 0] - U[1, 1])
    # Pauli completeness: U = (t0 s0 + t1 s1 + t2 s2 + t3 s3)/2
    rec = 0.5 * np.array([[t0 + t3, t1 - 1j * t2], [t1 + 1j * t2, t0 - t3]])
    np.testing.assert_allclose(rec, U, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(mats, st.floats(-10, 10), st.floats(-10, 10), st.floats(-1, 1))
def test_fields_real_and_coupling_identity(U, mre, mim, xs):
    dpd = DiracPointData.from_scalars(10.0, 3.0, complex(mre, mim) + 0.1, xi=-5.0,
                                      xi_sharp=1j * xs)
    g = PeriodicGrid(1.0, 1.0, 1, 1)
    gfd = pseudo_fields(StrainGrid(g, U[None, None]), dpd, general=True)
    t0, t1, t2, t3 = pauli_traces(U)
    lhs = np.conj(dpd.mu) * (t3 + 1j * t1)
    rhs = -dpd.nu_F * (gfd.A1 - 1j * gfd.A2)
    assert abs(lhs - rhs[0, 0]) < 1e-10 * (1 + abs(lhs))
    assert np.isrealobj(gfd.W) and np.isrealobj(gfd.A1)
    assert gfd.W[0, 0] == pytest.approx((dpd.xi * t0 + (1j * xs) * t2).real, abs=1e-12)


@pytest.mark.parametrize("kind,params", [
    ("sinusoidal", {"amplitude": 0.7, "direction": [0.6, 0.8], "wavevector": [0.5, 0.3],
                    "phase": 0.2}),
    ("erf-gauge", {"amplitude": 1.3}),
    ("erf-gauge", {"amplitude": 1.0, "direction": [0.4, -0.2]}),
    ("linear-gauge", {"beta": 0.3, "r_c": 2.0, "w_c": 1.5}),
    ("constant", {"shift": [0.1, -0.4]}),
])
def test_jacobian_matches_finite_differences(kind, params, rng):
    d = Deformation(kind, params)
    Y = rng.uniform(-4, 4, (20, 2))
    h = 1e-5
    U = d.jacobian(Y[:, 0], Y[:, 1])
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        up = d.displacement(*(Y + e).T)
        dn = d.displacement(*(Y - e).T)
        np.testing.assert_allclose(U[:, :, j], ((up - dn) / (2 * h)).T, atol=1e-6)


def test_erf_integral_closed_form():
    from scipy.integrate import quad
    for Y in (-3.0, -0.4, 0.0, 1.2, 5.0):
        ref, _ = quad(erf, 0, Y, epsabs=1e-14)
        assert erf_integral(Y) == pytest.approx(ref, abs=1e-12)


def test_window_and_periodized_erf():
    x = np.linspace(-1, 2, 301)
    s = smooth_step(x)
    assert np.all(s[x <= 0] == 0) and np.all(s[x >= 1] == 1)
    assert np.all(np.diff(s) >= 0)
    b = bump(np.linspace(-20, 20, 401), 8.0, 4.0)
    assert b[200] == 1 and b[0] == 0
    Y = np.linspace(-3, 3, 61)
    np.testing.assert_allclose(periodized_erf(Y, 40.0), erf(Y), atol=1e-12)


def test_linear_gauge_field_is_constant_in_window():
    defo = linear_gauge_deformation(REAL, B0=0.8, r_c=8.0, w_c=4.0)
    gfd = pseudo_fields(jacobian_U(defo, GRID), REAL)
    Y1 = GRID.Y1
    inner = np.abs(Y1) < 8 / np.sqrt(0.8) - 3 * GRID.h1
    np.testing.assert_allclose(gfd.A1, 0, atol=1e-14)
    np.testing.assert_allclose(gfd.A2[inner, 0], 0.8 * Y1[inner], atol=1e-12)
    np.testing.assert_allclose(gfd.B[inner], 0.8, atol=1e-10)
    outer = np.abs(Y1) > (8 + 4) / np.sqrt(0.8) + 3 * GRID.h1
    np.testing.assert_allclose(gfd.B[outer], 0, atol=1e-12)


def test_erf_gauge_field():
    defo = erf_gauge_deformation(REAL)
    gfd = pseudo_fields(jacobian_U(defo, GRID), REAL)
    np.testing.assert_allclose(gfd.A2[:, 3], erf(GRID.Y1), atol=1e-12)
    np.testing.assert_allclose(gfd.W, 0, atol=1e-12)


def test_complex_mu_rejected(reference_dirac):
    dpd, _, _ = reference_dirac
    assert not dpd.mu_is_real
    with pytest.raises(ComplexMu):
        erf_gauge_deformation(dpd)
    with pytest.raises(ComplexMu):
        linear_gauge_deformation(dpd, 1.0)
    with pytest.raises(ComplexMu):
        pseudo_fields(jacobian_U(Deformation("erf-gauge", {"amplitude": 1.0}), GRID), dpd)


def test_general_deformation_for_complex_mu(reference_dirac):
    dpd, _, _ = reference_dirac
    a = gauge_direction(dpd)
    gfd = pseudo_fields(jacobian_U(erf_gauge_deformation(dpd, general=True), GRID), dpd,
                        general=True)
    np.testing.assert_allclose(gfd.A1, 0, atol=1e-12)
    np.testing.assert_allclose(gfd.A2[:, 0], erf(GRID.Y1), atol=1e-12)
    # the compressive part of the displacement brings W = xi Tr U
    np.testing.assert_allclose(gfd.W[:, 0], dpd.xi * a[0] * erf(GRID.Y1), atol=1e-10)
    lin = linear_gauge_deformation(dpd, 1.0, general=True)
    gl = pseudo_fields(jacobian_U(lin, GRID), dpd, general=True)
    inner = np.abs(GRID.Y1) < 5
    np.testing.assert_allclose(gl.B[inner], 1.0, atol=1e-10)


def test_flavor_ratios():
    defo = Deformation("sinusoidal", {"amplitude": 0.3, "direction": [0.6, 0.8],
                                      "wavevector": [2 * np.pi / 40 * 3, 2 * np.pi / 8]})
    s = jacobian_U(defo, GRID)
    a = pseudo_fields(s, REAL, "schrodinger")
    b = pseudo_fields(s, REAL, "wave")
    c = 2 * np.sqrt(REAL.E_D)
    assert a.v == REAL.nu_F and b.v == pytest.approx(REAL.nu_F / c)
    np.testing.assert_allclose(b.W, -a.W / c, atol=1e-14)
    np.testing.assert_array_equal(a.A1, b.A1)
    with pytest.raises(ConfigError):
        pseudo_fields(s, REAL, "heat")


def test_curl_gauge_invariance():
    # adding a gradient to the gauge field leaves B unchanged
    Y1, Y2 = GRID.mesh()
    kx, ky = 2 * np.pi / 40 * 2, 2 * np.pi / 8
    chi = np.sin(kx * Y1 + ky * Y2)
    A2 = np.sin(2 * np.pi * Y1 / 40)
    base = GaugeFieldData(GRID, np.zeros_like(A2), A2, 0 * A2, 1.0, "schrodinger")
    # exact gradient for the spectral curl, discrete gradient for the FD4 curl
    grads = {"spectral": (kx * np.cos(kx * Y1 + ky * Y2), ky * np.cos(kx * Y1 + ky * Y2)),
             "fd4": (fd4_derivative(chi, GRID.h1, 0), fd4_derivative(chi, GRID.h2, 1))}
    for m, (c1, c2) in grads.items():
        shift = GaugeFieldData(GRID, c1, A2 + c2, 0 * A2, 1.0, "schrodinger")
        np.testing.assert_allclose(magnetic_field(shift, m), magnetic_field(base, m), atol=1e-12)
    np.testing.assert_allclose(magnetic_field(base, "spectral"),
                               2 * np.pi / 40 * np.cos(2 * np.pi * Y1 / 40), atol=1e-12)


def test_constant_shift_does_not_change_fields():
    sin = Deformation("sinusoidal", {"amplitude": 0.4, "direction": [1, 0],
                                     "wavevector": [2 * np.pi / 40, 0]})
    g = GRID
    u = sin.displacement(*g.mesh())
    a = pseudo_fields(jacobian_U(gridded_deformation(g, u), g), REAL)
    b = pseudo_fields(jacobian_U(gridded_deformation(g, u + np.array([3.0, -1.0])[:, None, None]),
                                 g), REAL)
    np.testing.assert_allclose(a.A1, b.A1, atol=1e-12)
    np.testing.assert_allclose(a.W, b.W, atol=1e-12)


def test_gridded_fd4_richardson():
    p = {"amplitude": 0.5, "direction": [0.6, 0.8], "wavevector": [2 * np.pi / 10, 2 * np.pi / 5]}
    d = Deformation("sinusoidal", p)
    errs = []
    for n in (40, 80):
        g = PeriodicGrid(10.0, 5.0, n, n // 2)
        U_exact = d.jacobian(*g.mesh())
        U_num = jacobian_U(gridded_deformation(g, d.displacement(*g.mesh())), g).U
        errs.append(np.max(np.abs(U_num - U_exact)))
    assert 13 < errs[0] / errs[1] < 19


def test_gridded_shape_and_grid_checks():
    with pytest.raises(ValueError):
        gridded_deformation(GRID, np.zeros((2, 3, 3)))
    d = gridded_deformation(GRID, np.zeros((2,) + GRID.shape))
    with pytest.raises(ValueError):
        jacobian_U(d, PeriodicGrid(40.0, 8.0, 200, 16))
    with pytest.raises(ConfigError):
        Deformation("twist")


def test_gauge_csv(tmp_path):
    gfd = pseudo_fields(jacobian_U(erf_gauge_deformation(REAL), GRID), REAL)
    gfd.to_csv(tmp_path / "g.csv")
    data = np.loadtxt(tmp_path / "g.csv", delimiter=",", skiprows=1)
    assert data.shape == (GRID.N1 * GRID.N2, 6)
    np.testing.assert_allclose(data[:, 3], gfd.A2.ravel())
    assert "B_convention" in gfd.header()
