import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from honeystrain.continuum import (StrainedOperator, ValidationSetup, apply_Leps,
                                   build_envelope_initial, effective_field,
                                   envelope_spec, envelope_to_micro, estimate_lambda_max,
                                   expansion_residual, expansion_study, initial_envelope,
                                   rect_supercell_grid, reference_deformation, run_envelope,
                                   sample_field, slow_grid, solve_effective_envelope,
                                   solve_schrodinger, solve_wave, wave_energy)
from honeystrain.dirac_point import DiracPointData
from honeystrain.exceptions import (GridMismatch, InstabilityError, KrylovConvergenceError,
                                    SupportOverflow)
from honeystrain.lattice import build_lattice
from honeystrain.media import apply_L0, random_field
from honeystrain.strain import Deformation, StrainGrid

LAT = build_lattice(1.0)
SHEAR = Deformation("sinusoidal", {"amplitude": 1.0, "direction": [0.6, 0.8],
                                   "wavevector": [0.7, 0.4], "phase": 0.3})


def _points(grid):
    X, Y = np.meshgrid(grid.x, grid.y, indexing="ij")
    return np.stack([X, Y], -1)


def _carrier(grid):
    P = _points(grid)
    return np.exp(1j * P @ grid.k_base)


def test_sample_field_matches_direct_evaluation(rng):
    grid = rect_supercell_grid(LAT, 2, 2, 17, 11)
    f = random_field(LAT, LAT.K, 1, rng=rng)
    p = sample_field(f, grid)
    np.testing.assert_allclose(p * _carrier(grid), f.evaluate(_points(grid)), atol=1e-12)


def test_grid_rejects_incompatible_base():
    with pytest.raises(GridMismatch):
        rect_supercell_grid(LAT, 1, 1, k_base=[0.1, 0.0])


@pytest.mark.parametrize("which", ["reference_medium", "anisotropic_medium"])
def test_unstrained_operator_matches_fourier_L0(which, request, rng):
    med = request.getfixturevalue(which)
    grid = rect_supercell_grid(LAT, 1, 1, 25, 15)
    f = random_field(LAT, LAT.K, 1, rng=rng)
    op = StrainedOperator(med, None, 0.0, grid)
    got = op.apply(sample_field(f, grid))
    ref = sample_field(apply_L0(med, f), grid)
    assert np.max(np.abs(got - ref)) < 1e-10 * np.max(np.abs(ref))


def test_constant_displacement_is_trivial(reference_medium, rng):
    grid = rect_supercell_grid(LAT, 3, 2, 11, 7)
    f = rng.standard_normal(grid.shape) + 0j
    shift = Deformation("constant", {"shift": [0.3, -0.2]})
    a = StrainedOperator(reference_medium, shift, 0.1, grid).apply(f)
    b = StrainedOperator(reference_medium, None, 0.0, grid).apply(f)
    np.testing.assert_array_equal(a, b)
    assert expansion_residual(StrainedOperator(reference_medium, shift, 0.1, grid), f) == 0


@pytest.mark.parametrize("which", ["reference_medium", "anisotropic_medium"])
def test_weighted_self_adjointness(which, request, rng):
    med = request.getfixturevalue(which)
    grid = rect_supercell_grid(LAT, 5, 3, 11, 7)
    op = StrainedOperator(med, SHEAR, 0.1, grid)
    f = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    g = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    a = grid.inner(g, op.apply(f), op.weight)
    b = np.conj(grid.inner(f, op.apply(g), op.weight))
    assert abs(a - b) < 1e-8 * abs(a)
    # positivity of the principal part
    zero_V = StrainedOperator(med, SHEAR, 0.1, grid)
    zero_V.V = 0 * zero_V.V
    assert np.real(grid.inner(f, zero_V.apply(f), op.weight)) > 0


def test_apply_checks_shape(reference_medium):
    grid = rect_supercell_grid(LAT, 1, 1, 11, 7)
    op = StrainedOperator(reference_medium, None, 0.0, grid)
    with pytest.raises(GridMismatch):
        apply_Leps(op, np.zeros((3, 3)))


def test_singular_deformation_rejected(reference_medium):
    grid = rect_supercell_grid(LAT, 3, 1, 11, 7)
    big = Deformation("sinusoidal", {"amplitude": 30.0, "direction": [1, 0],
                                     "wavevector": [1.0, 0.0]})
    with pytest.raises(ValueError):
        StrainedOperator(reference_medium, big, 0.5, grid)


@pytest.mark.parametrize("which", ["reference_medium", "anisotropic_medium"])
def test_expansion_second_order(which, request):
    rep = expansion_study(request.getfixturevalue(which), SHEAR, [0.1, 0.05, 0.025])
    assert rep.passed, rep.ratios
    assert len(rep.rows()) == 3


def test_schrodinger_eigenstate(reference_dirac, reference_medium):
    dpd, _, _ = reference_dirac
    grid = rect_supercell_grid(LAT, 1, 1, 25, 15)
    op = StrainedOperator(reference_medium, None, 0.0, grid)
    p = sample_field(dpd.Phi1, grid)
    res = grid.norm(op.apply(p) - dpd.E_D * p) / grid.norm(p)
    assert res < 1e-8
    traj = solve_schrodinger(op, p, 1.0, [0.0, 0.5, 1.0])
    dev = grid.norm(traj.snapshots[-1] - np.exp(-1j * dpd.E_D) * p) / grid.norm(p)
    assert dev < 1e-8
    assert abs(traj.norms[-1] - traj.norms[0]) < 1e-12 * traj.norms[0]


def test_schrodinger_step_cap_agrees(reference_medium, rng):
    grid = rect_supercell_grid(LAT, 5, 1, 11, 7)
    op = StrainedOperator(reference_medium, SHEAR, 0.1, grid)
    f = rng.standard_normal(grid.shape) + 0j
    a = solve_schrodinger(op, f, 0.2).snapshots[-1]
    b = solve_schrodinger(op, f, 0.2, dt=0.01).snapshots[-1]
    assert grid.norm(a - b) < 1e-7 * grid.norm(a)
    wn = solve_schrodinger(op, f, 0.2).weighted_norms
    assert abs(wn[-1] - wn[0]) < 1e-10 * wn[0]


def test_krylov_failure_reported(reference_medium, rng):
    grid = rect_supercell_grid(LAT, 3, 1, 11, 7)
    op = StrainedOperator(reference_medium, None, 0.0, grid)
    f = rng.standard_normal(grid.shape) + 0j
    with pytest.raises(KrylovConvergenceError) as exc:
        solve_schrodinger(op, f, 1.0, tol=1e-300, m=2)
    assert exc.value.step == 0


def test_wave_carrier(reference_dirac, reference_medium):
    dpd, _, _ = reference_dirac
    grid = rect_supercell_grid(LAT, 1, 1, 25, 15)
    op = StrainedOperator(reference_medium, None, 0.0, grid)
    p = sample_field(dpd.Phi1, grid)
    w = np.sqrt(dpd.E_D)
    traj = solve_wave(op, p, 1j * w * p, 5e-4, 1.0, [0.0, 1.0])
    dev = grid.norm(traj.snapshots[-1] - np.exp(1j * w) * p) / grid.norm(p)
    assert dev < 1e-6


def test_wave_second_order_and_energy(reference_medium, rng):
    grid = rect_supercell_grid(LAT, 3, 1, 11, 7)
    op = StrainedOperator(reference_medium, SHEAR, 0.1, grid)
    x = 2 * np.pi * np.arange(grid.shape[0]) / grid.shape[0]
    f = (np.exp(np.cos(x))[:, None] * np.ones(grid.shape[1])).astype(complex)
    lam = estimate_lambda_max(op)
    finals = []
    for dt in (0.008, 0.004, 0.002):
        traj = solve_wave(op, f, 0 * f, dt, 0.4, [0.0, 0.4], lambda_max=1.1 * lam)
        finals.append(traj.snapshots[-1])
        E = np.array(traj.info["energies"])
        assert np.max(np.abs(E - E[0])) < 1e-2 * abs(E[0])
    r = grid.norm(finals[0] - finals[1]) / grid.norm(finals[1] - finals[2])
    assert 3.5 < r < 4.5
    assert wave_energy(op, f, 0 * f) > 0


def test_wave_instability_detected(reference_medium):
    grid = rect_supercell_grid(LAT, 1, 1, 11, 7)
    op = StrainedOperator(reference_medium, None, 0.0, grid)
    lam = estimate_lambda_max(op)
    f = np.ones(grid.shape, dtype=complex)
    with pytest.raises(InstabilityError):
        solve_wave(op, f, 0 * f, 3.0 / np.sqrt(lam), 1.0)
    with pytest.raises(ValueError):
        solve_wave(op, f, 0 * f, 0.01, 0.1, [0.0, 0.055])


def test_envelope_transfer_exact():
    # slow nodes coincide with every n1-th micro point; interpolation is exact there
    NE = 63
    grid = rect_supercell_grid(LAT, 63, 1, 11, 7)
    sg = slow_grid(24.0, NE)
    S1 = 24.0
    beta = np.exp(-((sg.Y1 - 12) / 2) ** 2) * np.exp(2j * np.pi * 3 * sg.Y1 / S1)
    micro = envelope_to_micro(beta, grid)
    assert micro.shape == (grid.shape[0],)
    np.testing.assert_allclose(micro[::11], beta, atol=1e-12)
    # a single slow Fourier mode becomes the same micro mode
    mode = np.exp(2j * np.pi * 5 * sg.Y1 / S1)
    np.testing.assert_allclose(envelope_to_micro(mode, grid),
                               np.exp(2j * np.pi * 5 * grid.x / grid.L1), atol=1e-12)


def test_envelope_initial_data(reference_dirac):
    dpd, _, _ = reference_dirac
    grid = rect_supercell_grid(LAT, 41, 1, 11, 7)
    eps = 24.0 / grid.L1
    sg = slow_grid(24.0, 63)
    p1, p2 = sample_field(dpd.Phi1, grid), sample_field(dpd.Phi2, grid)
    zero, _ = build_envelope_initial(p1, p2, np.zeros((2, 63)), eps, grid)
    assert np.max(np.abs(zero)) == 0
    beta = initial_envelope(ValidationSetup(), sg.Y1, 24.0)
    phi, phit = build_envelope_initial(p1, p2, beta, eps, grid, "wave", dpd.E_D)
    np.testing.assert_allclose(phit, 1j * np.sqrt(dpd.E_D) * phi)
    wide = np.ones((2, 63))
    with pytest.raises(SupportOverflow):
        build_envelope_initial(p1, p2, wide, eps, grid)
    a, _ = build_envelope_initial(p1, p2, beta, eps, grid)
    b, _ = build_envelope_initial(p1, p2, 2 * beta, 2 * eps, grid)
    np.testing.assert_allclose(b, 4 * a, atol=1e-14)


def test_effective_envelope_free_transport():
    dpd = DiracPointData.from_scalars(E_D=10.0, nu_F=2.0, mu=3j, xi=-5.0)
    S1, NE = 24.0, 128
    sg = slow_grid(S1, NE)
    strain = StrainGrid(sg, np.zeros(sg.shape + (2, 2)))
    g = np.exp(-((sg.Y1 - 8) / 1.5) ** 2)
    beta0 = np.array([g, g], dtype=complex)  # sigma1 eigenvector: right mover
    times = np.linspace(0, 2.0, 3)
    betas = solve_effective_envelope(dpd, strain, beta0, 2.0, times, dT=1e-2)
    shifted = np.exp(-((sg.Y1 - 8 - 2.0 * 2.0) / 1.5) ** 2)
    np.testing.assert_allclose(betas[-1][0], shifted, atol=1e-8)
    np.testing.assert_allclose(betas[-1][1], shifted, atol=1e-8)


def test_envelope_spec_flavors():
    dpd = DiracPointData.from_scalars(E_D=9.0, nu_F=3.0, mu=1 + 2j, xi=-4.0)
    sg = slow_grid(10.0, 16)
    U = np.zeros(sg.shape + (2, 2))
    U[..., 0, 0] = 0.2
    U[..., 1, 0] = 0.1
    s, P = envelope_spec(dpd, StrainGrid(sg, U), "schrodinger")
    w, Q = envelope_spec(dpd, StrainGrid(sg, U), "wave")
    assert w.v == pytest.approx(s.v / 6.0)
    # wave potential is the sigma2-conjugate of the Schrodinger one, rescaled
    MS = P @ s.M[0, 0] @ P
    np.testing.assert_allclose(w.M[0, 0], -(Q @ MS @ Q) / 6.0, atol=1e-14)
    np.testing.assert_allclose(s.M, np.conj(np.swapaxes(s.M, -1, -2)))
    with pytest.raises(ValueError):
        envelope_spec(dpd, StrainGrid(sg, U), "heat")


def test_envelope_run_consistency(reference_dirac, reference_medium):
    dpd, _, _ = reference_dirac
    setup = ValidationSetup(n1=11, n2=7, snapshots=3, slow_length=12.0, envelope_width=1.0,
                            envelope_points=63, virtual_height=12.0)
    eps = 0.2
    run = run_envelope(dpd, reference_medium, eps, rho=0.5, setup=setup)
    assert run.errors[0] < 1e-12
    assert run.info["weighted_norm_drift"] < 1e-7
    assert run.normalized == pytest.approx(run.sup_error / eps)
    # the error stays a small fraction of the field itself over a short run
    grid = rect_supercell_grid(LAT, run.info["N1"], 1, 11, 7)
    S1 = run.info["slow_length"]
    sg = slow_grid(S1, 63)
    beta0 = initial_envelope(setup, sg.Y1, S1)
    p1, p2 = sample_field(dpd.Phi1, grid), sample_field(dpd.Phi2, grid)
    eff = effective_field(p1, p2, beta0, eps, 0.0, dpd.E_D, grid, "schrodinger")
    size = grid.norm(eff) * np.sqrt(12.0 / (eps * grid.L2))
    assert 0 < run.sup_error < 0.3 * size


def test_reference_deformation_periodic():
    setup = ValidationSetup()
    d = reference_deformation(setup, 24.0)
    Y = np.array([0.0, 24.0])
    np.testing.assert_allclose(d.displacement(Y, 0 * Y)[:, 0], d.displacement(Y, 0 * Y)[:, 1],
                               atol=1e-12)
    y = np.linspace(0, 24, 100)
    U = d.jacobian(y, 0 * y)
    assert np.max(np.linalg.norm(U, 2, axis=(-2, -1))) == pytest.approx(0.5, rel=1e-3)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.01, 0.3), st.floats(-1, 1), st.floats(-1, 1))
def test_operator_hermitian_for_random_strain(eps, a, b):
    med_grid = rect_supercell_grid(LAT, 3, 1, 11, 7)
    from honeystrain.media import make_reference_medium
    med = make_reference_medium(LAT, 10.0)
    d = Deformation("sinusoidal", {"amplitude": 1.0, "direction": [a, b],
                                   "wavevector": [0.9, 0.0]})
    op = StrainedOperator(med, d, eps, med_grid)
    rng = np.random.default_rng(0)
    f = rng.standard_normal(med_grid.shape) + 1j * rng.standard_normal(med_grid.shape)
    val = med_grid.inner(f, op.apply(f), op.weight)
    assert abs(val.imag) < 1e-9 * abs(val)
