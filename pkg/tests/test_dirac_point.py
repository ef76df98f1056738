import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.exceptions import NotFittedError

from honeystrain.bloch import compute_bands, make_basis
from honeystrain.dirac_point import (DiracPointData, DiracPointEstimator, analyze_dirac_point,
                                     compute_coefficients, fix_phase, locate_dirac_point,
                                     symmetry_adapted_basis, verify_cone)
from honeystrain.exceptions import (DegenerateVelocity, HigherDegeneracy, StructureViolation,
                                    SymmetryMismatch)
from honeystrain.lattice import TAU, build_lattice
from honeystrain.media import apply_calA, make_reference_medium

LAT = build_lattice(1.0)


def test_structure_residuals(reference_dirac):
    dpd, report, _ = reference_dirac
    assert report.passed
    assert report.max_relative_residual < 1e-6
    assert report.residuals["calA_11"] < 1e-8
    assert report.residuals["calA_22"] < 1e-8
    assert dpd.xi <= 0
    assert abs(dpd.xi_sharp) < 1e-8
    assert dpd.nu_F > 0


def test_reference_values(reference_dirac):
    # self-consistent values of the V0=10 reference medium (M=12)
    dpd, _, info = reference_dirac
    assert dpd.b_star == 1
    assert dpd.E_D == pytest.approx(11.71716773, abs=1e-6)
    assert dpd.nu_F == pytest.approx(4.1263264573, abs=1e-6)
    assert abs(dpd.mu) == pytest.approx(9.065743555696, abs=1e-5)
    assert dpd.xi == pytest.approx(-18.267288763, abs=1e-5)
    assert info["gap_above"] > 1


def test_dirac_energy_between_free_values(reference_dirac):
    dpd, _, _ = reference_dirac
    free = (4 * np.pi / 3) ** 2
    assert 0 < dpd.E_D < free + 2 * 10 * 3  # the potential spans [-15, 30]


def test_fermi_velocity_oracle(reference_dirac, reference_medium):
    # nu_F from the inner product definition, recomputed here directly
    dpd, _, _ = reference_dirac
    v = dpd.Phi1.inner(apply_calA(reference_medium, dpd.Phi2))
    np.testing.assert_allclose(v, dpd.nu_F * np.array([1, 1j]), atol=1e-8)


def test_free_medium_higher_degeneracy():
    with pytest.raises(HigherDegeneracy):
        locate_dirac_point(make_reference_medium(LAT, 0.0), M=6)


def test_no_degeneracy_off_corner(reference_medium):
    w = compute_bands(reference_medium, LAT.K + np.array([1e-2, 0]), 3, M=10).eigenvalues
    assert w[1] - w[0] > 1e-3


def test_symmetry_adapted_pair(reference_medium):
    space = locate_dirac_point(reference_medium, M=10)
    phi1, phi2, info = symmetry_adapted_basis(space.vectors, space.basis)
    lam = np.sort_complex(info["rotation_eigenvalues"])
    np.testing.assert_allclose(lam, np.sort_complex(np.array([TAU, np.conj(TAU)])), atol=1e-9)
    np.testing.assert_allclose(phi2, np.conj(phi1))
    assert abs(np.vdot(phi1, phi2)) < 1e-12


def test_symmetry_mismatch_counterexample(reference_medium):
    basis = make_basis(LAT, LAT.K, 6)
    U = np.zeros((basis.size, 2), dtype=complex)
    U[0, 0] = 1.0  # a single plane wave is not rotation invariant
    U[1, 1] = 1.0
    with pytest.raises(SymmetryMismatch):
        symmetry_adapted_basis(U, basis)
    # the lowest band alone is one-dimensional
    with pytest.raises(SymmetryMismatch):
        symmetry_adapted_basis(U[:, :1], basis)


@pytest.mark.parametrize("theta", [np.pi / 5, 1.3, -2.0])
def test_gauge_covariance(reference_dirac, reference_medium, theta):
    dpd, _, _ = reference_dirac
    ph = np.exp(1j * theta)
    p1, p2 = dpd.phi1_vec * ph, dpd.phi2_vec * np.conj(ph)
    mu, xi, xs, _ = compute_coefficients(p1, p2, dpd.basis, reference_medium,
                                         nu_F=dpd.nu_F, strict=False)
    assert abs(mu) == pytest.approx(abs(dpd.mu), rel=1e-10)
    assert mu == pytest.approx(dpd.mu * np.exp(-2j * theta), abs=1e-8)
    assert xi == pytest.approx(dpd.xi, rel=1e-10)
    # re-fixing the phase recovers the same velocity
    q1, q2, nu, _ = fix_phase(p1, p2, dpd.basis, reference_medium)
    assert nu == pytest.approx(dpd.nu_F, rel=1e-12)
    mu2, *_ = compute_coefficients(q1, q2, dpd.basis, reference_medium, nu)
    assert abs(mu2 - dpd.mu) < 1e-8


def test_degenerate_velocity(reference_dirac, reference_medium):
    dpd, _, _ = reference_dirac
    with pytest.raises(DegenerateVelocity):
        fix_phase(dpd.phi1_vec, dpd.phi1_vec * 0, dpd.basis, reference_medium)


def test_structure_violation_on_wrong_velocity(reference_dirac, reference_medium):
    dpd, _, _ = reference_dirac
    with pytest.raises(StructureViolation) as exc:
        compute_coefficients(dpd.phi1_vec, dpd.phi2_vec, dpd.basis, reference_medium,
                             nu_F=1.1 * dpd.nu_F)
    assert exc.value.report is not None


def test_cone(reference_medium, reference_dirac):
    dpd, _, _ = reference_dirac
    d = np.array([[1.0, 0.0], [0.3, 0.8]])
    dirs = np.vstack([d, d @ LAT.R.T, d @ LAT.R.T @ LAT.R.T])
    rep = verify_cone(reference_medium, dpd, [1e-3, 2e-3], dirs)
    assert rep.max_relative_slope_error < 0.02
    # C3: d and R d give identical slopes
    for j in range(2):
        for k in (j + 2, j + 4):
            assert abs(rep.slopes_upper[0, j] - rep.slopes_upper[0, k]) < 1e-6
            assert abs(rep.slopes_lower[0, j] - rep.slopes_lower[0, k]) < 1e-6
    ratio = rep.projection_residuals[1] / rep.projection_residuals[0]
    assert np.all((ratio > 1.6) & (ratio < 2.4))


def test_resolution_stability(reference_medium, reference_dirac):
    dpd12, _, _ = reference_dirac
    dpd16, _, _ = analyze_dirac_point(reference_medium, M=16)
    assert abs(dpd16.nu_F - dpd12.nu_F) < 1e-6
    assert abs(dpd16.E_D - dpd12.E_D) < 1e-6
    assert abs(dpd16.mu - dpd12.mu) < 1e-5


def test_json_roundtrip(reference_dirac, tmp_path):
    dpd, _, _ = reference_dirac
    p = tmp_path / "d.json"
    dpd.to_json(str(p))
    back = DiracPointData.from_json(str(p))
    assert back.E_D == dpd.E_D and back.nu_F == dpd.nu_F
    assert back.mu == dpd.mu and back.xi == dpd.xi
    np.testing.assert_array_equal(back.K, dpd.K)


def test_origin_search_reports_candidates(reference_medium):
    _, _, info = analyze_dirac_point(reference_medium, M=8, origin_search=True)
    log = info["origin_search"]
    assert len(log) == 3
    assert log[0]["admissible"]


def test_estimator(reference_medium, reference_dirac):
    est = DiracPointEstimator(M=12)
    with pytest.raises(NotFittedError):
        est.predict([[0.0, 0.0]])
    est.fit(reference_medium)
    assert est.E_D_ == pytest.approx(reference_dirac[0].E_D, abs=1e-12)
    E = est.predict([[1e-3, 0.0]])
    assert E.shape == (1, 2) and E[0, 0] < est.E_D_ < E[0, 1]
    with pytest.raises(ValueError):
        DiracPointEstimator(M=0).fit(reference_medium)


@settings(max_examples=6, deadline=None)
@given(st.floats(4.0, 15.0))
def test_structure_holds_across_amplitudes(V0):
    med = make_reference_medium(LAT, V0)
    dpd, report, _ = analyze_dirac_point(med, M=8)
    assert report.passed
    assert dpd.xi <= 0 and abs(dpd.xi_sharp) < 1e-8
