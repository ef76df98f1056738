"""Dirac point at K: location, symmetry-adapted pair, phase fix and effective coefficients."""

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_kpoints, check_scalar
from .bloch import DEG_TOL, compute_bands, make_basis
from .exceptions import (DegenerateVelocity, HigherDegeneracy, NoDegeneracyFound,
                         StructureViolation, SymmetryMismatch)
from .lattice import SIGMA0, SIGMA1, SIGMA2, SIGMA3, TAU
from .media import apply_calA, apply_frakA, check_symmetries, translate_medium

STRUCT_TOL = 1e-6
VEL_TOL = 1e-8
SYM_TOL = 1e-9


@dataclass
class DiracEigenspace:
    b_star: int  # 1-based index of the lower touching band
    E_D: float
    vectors: np.ndarray  # (n, 2) orthonormal basis coefficients
    basis: object
    eigenvalues: np.ndarray
    gap_below: float
    gap_above: float


def _clusters(w, tol):
    groups = [[0]]
    for b in range(1, len(w)):
        if abs(w[b] - w[groups[-1][0]]) < tol * (1 + abs(w[groups[-1][0]])):
            groups[-1].append(b)
        else:
            groups.append([b])
    return groups


def locate_dirac_point(medium, M=12, deg_tol=DEG_TOL, nbands=10):
    """Lowest exactly-twofold eigenvalue of L(K).

    Raises :class:`HigherDegeneracy` if a cluster of three or more collapses
    below any admissible pair, :class:`NoDegeneracyFound` if none exists
    among the computed bands.
    """
    lat = medium.lattice
    basis = make_basis(lat, lat.K, M)
    nbands = min(nbands, basis.size)
    res = compute_bands(medium, lat.K, nbands, M, basis=basis)
    w = res.eigenvalues
    groups = _clusters(w, deg_tol)
    # the last cluster may continue past the computed window
    for g in groups[:-1]:
        if len(g) > 2:
            raise HigherDegeneracy(f"{len(g)}-fold eigenvalue {w[g[0]]:.10g} at K (bands {g[0] + 1}..{g[-1] + 1})")
        if len(g) == 2:
            b = g[0]
            below = w[b] - w[b - 1] if b > 0 else np.inf
            above = w[b + 2] - w[b + 1]
            return DiracEigenspace(b + 1, float(0.5 * (w[b] + w[b + 1])), res.vectors[:, b:b + 2],
                                   basis, w, float(below), float(above))
    raise NoDegeneracyFound(f"no twofold eigenvalue among the lowest {nbands} bands at K")


def symmetry_adapted_basis(vectors, basis, tol=SYM_TOL):
    """Split a 2D rotation-invariant eigenspace into ``Phi1`` (R = tau) and ``Phi2 = PC Phi1``.

    ``vectors`` are orthonormal basis coefficients with shape (n, 2).
    Returns coefficient vectors normalized in L2(Omega).
    """
    U = np.asarray(vectors, dtype=complex)
    if U.ndim != 2 or U.shape[1] != 2:
        raise SymmetryMismatch(f"need a two-dimensional eigenspace, got shape {U.shape}")
    perm = basis.rotation_permutation()
    RU = np.zeros_like(U)
    RU[perm] = U
    Rsub = U.conj().T @ RU
    leak = np.linalg.norm(RU - U @ Rsub)
    if leak > tol * np.sqrt(2):
        raise SymmetryMismatch(f"eigenspace is not rotation invariant (leak {leak:.2e})")
    lam, W = np.linalg.eig(Rsub)
    i_tau = int(np.argmin(np.abs(lam - TAU)))
    dev = max(abs(lam[i_tau] - TAU), abs(lam[1 - i_tau] - np.conj(TAU)))
    if dev > tol:
        raise SymmetryMismatch(f"restricted rotation has eigenvalues {lam}, expected tau, conj(tau)")
    phi1 = U @ W[:, i_tau]
    phi1 /= np.linalg.norm(phi1)
    phi2 = np.conj(phi1)
    Rphi2 = np.zeros_like(phi2)
    Rphi2[perm] = phi2
    check = max(np.linalg.norm(Rphi2 - np.conj(TAU) * phi2), abs(np.vdot(phi1, phi2)))
    if check > tol * 10:
        raise SymmetryMismatch(f"PC partner fails the rotation/orthogonality check ({check:.2e})")
    s = 1 / np.sqrt(basis.lattice.cell_area)
    return phi1 * s, phi2 * s, {"rotation_eigenvalues": lam, "leak": float(leak),
                                 "partner_check": float(check)}


def _calA_matrix(medium, f1, f2):
    return [[f1.inner(apply_calA(medium, f1)), f1.inner(apply_calA(medium, f2))],
            [f2.inner(apply_calA(medium, f1)), f2.inner(apply_calA(medium, f2))]]


def fix_phase(phi1, phi2, basis, medium, vel_tol=VEL_TOL):
    """Rotate ``Phi1 -> e^{i theta} Phi1`` so the Fermi velocity is real and positive."""
    f1, f2 = basis.to_field(phi1), basis.to_field(phi2)
    a12 = f1.inner(apply_calA(medium, f2))
    z = 0.5 * (np.conj(a12) @ np.array([1, 1j]))
    if abs(z) < vel_tol:
        raise DegenerateVelocity(f"|<Phi1, calA Phi2>.(1, i)| = {2 * abs(z):.3e} below {vel_tol}")
    theta = -0.5 * np.angle(z)
    if abs(theta) < 1e-15:
        theta = 0.0
    ph = np.exp(1j * theta)
    return phi1 * ph, phi2 * np.conj(ph), float(abs(z)), theta


def _pauli_dev(F, target):
    return float(np.linalg.norm(np.asarray(F) - target))


@dataclass
class BifurcationReport:
    calA: list  # 2x2 nested list of 2-vectors <Phi_i, calA Phi_j>
    frakA: list  # 2x2 nested list of 2x2 matrices <Phi_i, frakA Phi_j>
    residuals: dict
    scale: float
    struct_tol: float

    @property
    def max_relative_residual(self):
        return max(self.residuals.values()) / self.scale

    @property
    def passed(self):
        return self.max_relative_residual <= self.struct_tol

    def to_dict(self):
        def cplx(a):
            a = np.asarray(a)
            return {"re": a.real.tolist(), "im": a.imag.tolist()}
        return {
            "calA": [[cplx(x) for x in row] for row in self.calA],
            "frakA": [[cplx(x) for x in row] for row in self.frakA],
            "residuals": self.residuals,
            "scale": self.scale,
            "max_relative_residual": self.max_relative_residual,
            "struct_tol": self.struct_tol,
            "passed": self.passed,
        }


def compute_coefficients(phi1, phi2, basis, medium, nu_F=None, struct_tol=STRUCT_TOL, strict=True):
    """``mu``, ``xi``, ``xi#`` and the full table of bifurcation inner products."""
    f1, f2 = basis.to_field(phi1), basis.to_field(phi2)
    C = _calA_matrix(medium, f1, f2)
    F = [[f1.inner(apply_frakA(medium, f1)), f1.inner(apply_frakA(medium, f2))],
         [f2.inner(apply_frakA(medium, f1)), f2.inner(apply_frakA(medium, f2))]]
    if nu_F is None:
        nu_F = float(np.real(0.5 * (np.conj(C[0][1]) @ np.array([1, 1j]))))
    mu = 0.25 * np.sum(F[0][1] * (SIGMA3 + 1j * SIGMA1))
    xi_c = 0.5 * np.trace(F[0][0])
    xs = 0.5 * np.trace(SIGMA2 @ F[0][0])
    e = np.array([1, 1j])
    residuals = {
        "calA_11": _pauli_dev(C[0][0], 0),
        "calA_22": _pauli_dev(C[1][1], 0),
        "calA_12": _pauli_dev(C[0][1], nu_F * e),
        "calA_21": _pauli_dev(C[1][0], nu_F * np.conj(e)),
        "frakA_12": _pauli_dev(F[0][1], mu * (SIGMA3 - 1j * SIGMA1)),
        "frakA_21": _pauli_dev(F[1][0], np.conj(mu) * (SIGMA3 + 1j * SIGMA1)),
        "frakA_11": _pauli_dev(F[0][0], xi_c * SIGMA0 + xs * SIGMA2),
        "frakA_22": _pauli_dev(F[1][1], xi_c * SIGMA0 + xs * SIGMA2),
        "xi_imag": float(abs(xi_c.imag)),
        "xi_sharp_real": float(abs(xs.real)),
    }
    scale = max(1.0, abs(nu_F), abs(mu), abs(xi_c), abs(xs))
    report = BifurcationReport(C, F, residuals, float(scale), struct_tol)
    if strict and not report.passed:
        raise StructureViolation(
            f"bifurcation structure residual {report.max_relative_residual:.3e} > {struct_tol}",
            report=report)
    return complex(mu), float(xi_c.real), complex(1j * xs.imag), report


@dataclass
class DiracPointData:
    K: np.ndarray
    E_D: float
    b_star: int
    Phi1: object  # QuasiPeriodicField
    Phi2: object
    nu_F: float
    mu: complex
    xi: float
    xi_sharp: complex
    cone_fit_residual: float = float("nan")
    M: int = 0
    origin_shift: np.ndarray = field(default_factory=lambda: np.zeros(2))
    theta: float = 0.0
    basis: object = None
    phi1_vec: np.ndarray = None
    phi2_vec: np.ndarray = None

    @property
    def mu_is_real(self):
        return abs(self.mu.imag) <= 1e-8 * max(1.0, abs(self.mu))

    def to_dict(self):
        def coef_list(vec):
            if vec is None or self.basis is None:
                return []
            return [[int(m[0]), int(m[1]), float(c.real), float(c.imag)]
                    for m, c in zip(self.basis.indices, vec) if c != 0]
        return {
            "K": [float(x) for x in self.K],
            "E_D": self.E_D,
            "bStar": self.b_star,
            "nuF": self.nu_F,
            "mu": [self.mu.real, self.mu.imag],
            "xi": self.xi,
            "xiSharp": [self.xi_sharp.real, self.xi_sharp.imag],
            "coneFitResidual": (None if np.isnan(self.cone_fit_residual)
                                else self.cone_fit_residual),
            "M": self.M,
            "originShift": [float(x) for x in self.origin_shift],
            "Phi1": coef_list(self.phi1_vec),
            "Phi2": coef_list(self.phi2_vec),
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_scalars(cls, E_D, nu_F, mu, xi=0.0, xi_sharp=0.0, lattice=None):
        """Lightweight record for downstream modules that need only the coefficients."""
        K = np.zeros(2) if lattice is None else np.array(lattice.K)
        return cls(K, float(E_D), 1, None, None, float(nu_F), complex(mu), float(xi),
                   complex(xi_sharp))

    @classmethod
    def from_json(cls, text_or_path):
        text = text_or_path
        if not text.lstrip().startswith("{"):
            with open(text_or_path, encoding="utf-8") as fh:
                text = fh.read()
        d = json.loads(text)
        return cls(np.array(d["K"]), d["E_D"], d["bStar"], None, None, d["nuF"],
                   complex(*d["mu"]), d["xi"], complex(*d["xiSharp"]),
                   _nan_if_none(d.get("coneFitResidual")), d.get("M", 0),
                   np.array(d.get("originShift", [0.0, 0.0])))


def _nan_if_none(x):
    return float("nan") if x is None else x


def _pipeline(medium, M, deg_tol, struct_tol, vel_tol, strict=True):
    space = locate_dirac_point(medium, M, deg_tol)
    phi1, phi2, _ = symmetry_adapted_basis(space.vectors, space.basis)
    phi1, phi2, nu_F, theta = fix_phase(phi1, phi2, space.basis, medium, vel_tol)
    mu, xi, xs, report = compute_coefficients(phi1, phi2, space.basis, medium, nu_F,
                                              struct_tol, strict=strict)
    basis = space.basis
    dpd = DiracPointData(np.array(medium.lattice.K), space.E_D, space.b_star,
                         basis.to_field(phi1), basis.to_field(phi2), nu_F, mu, xi, xs,
                         M=M, theta=theta, basis=basis, phi1_vec=phi1, phi2_vec=phi2)
    return dpd, report, space


def origin_candidates(lattice):
    c = (lattice.v1 + lattice.v2) / 3
    return [np.zeros(2), c, -c]


def analyze_dirac_point(medium, M=12, deg_tol=DEG_TOL, struct_tol=STRUCT_TOL, vel_tol=VEL_TOL,
                        origin_search=False, strict=True):
    """Full pipeline; with ``origin_search`` the medium is re-centered at the
    candidate that keeps every symmetry and minimizes ``|Im mu|``."""
    candidates = origin_candidates(medium.lattice) if origin_search else [np.zeros(2)]
    best = None
    log = []
    for y0 in candidates:
        med = medium if not np.any(y0) else translate_medium(medium, y0)
        sym = check_symmetries(med, tol=1e-10)
        if not sym.passed:
            log.append({"shift": y0.tolist(), "admissible": False})
            continue
        dpd, report, space = _pipeline(med, M, deg_tol, struct_tol, vel_tol, strict)
        dpd.origin_shift = y0
        log.append({"shift": y0.tolist(), "admissible": True, "im_mu": abs(dpd.mu.imag)})
        if best is None or abs(dpd.mu.imag) < abs(best[0].mu.imag) - 1e-14:
            best = (dpd, report, space, med)
    if best is None:
        raise SymmetryMismatch("no admissible origin for the medium")
    dpd, report, space, med = best
    return dpd, report, {"origin_search": log, "gap_below": space.gap_below,
                         "gap_above": space.gap_above, "eigenvalues": space.eigenvalues.tolist(),
                         "medium": med}


@dataclass
class ConeReport:
    radii: np.ndarray
    directions: np.ndarray
    slopes_upper: np.ndarray  # (n_r, n_d)
    slopes_lower: np.ndarray
    projection_residuals: np.ndarray  # (n_r, n_d)
    nu_F: float

    @property
    def max_relative_slope_error(self):
        s = np.concatenate([self.slopes_upper.ravel(), self.slopes_lower.ravel()])
        return float(np.max(np.abs(s - self.nu_F)) / self.nu_F)

    @property
    def anisotropy(self):
        """Largest spread of the slope across directions at fixed radius."""
        up = np.ptp(self.slopes_upper, axis=1)
        lo = np.ptp(self.slopes_lower, axis=1)
        return float(max(np.max(up), np.max(lo)))

    @property
    def fitted_velocity(self):
        return float(np.mean(0.5 * (self.slopes_upper + self.slopes_lower)))

    def to_dict(self):
        return {
            "radii": self.radii.tolist(), "directions": self.directions.tolist(),
            "slopes_upper": self.slopes_upper.tolist(), "slopes_lower": self.slopes_lower.tolist(),
            "projection_residuals": self.projection_residuals.tolist(),
            "nu_F": self.nu_F, "max_relative_slope_error": self.max_relative_slope_error,
            "anisotropy": self.anisotropy,
        }


def verify_cone(medium, dpd, radii, directions, M=None):
    """Band slopes at ``K + r d`` and the distance of the band pair from
    ``span{e^{i kappa y} Phi1, e^{i kappa y} Phi2}``."""
    M = dpd.M if M is None else M
    lat = medium.lattice
    basis = dpd.basis if dpd.basis is not None and dpd.basis.M == M else make_basis(lat, lat.K, M)
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    dirs = as_kpoints(directions)
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    P = np.column_stack([basis.from_field(dpd.Phi1), basis.from_field(dpd.Phi2)])
    P /= np.linalg.norm(P, axis=0)
    b = dpd.b_star - 1
    up = np.zeros((len(radii), len(dirs)))
    lo = np.zeros_like(up)
    proj = np.zeros_like(up)
    for i, r in enumerate(radii):
        for j, d in enumerate(dirs):
            res = compute_bands(medium, lat.K + r * d, b + 2, M, basis=basis)
            lo[i, j] = (dpd.E_D - res.eigenvalues[b]) / r
            up[i, j] = (res.eigenvalues[b + 1] - dpd.E_D) / r
            V = res.vectors[:, b:b + 2]
            proj[i, j] = np.linalg.norm(V - P @ (P.conj().T @ V)) / np.sqrt(2)
    return ConeReport(radii, dirs, up, lo, proj, dpd.nu_F)


class DiracPointEstimator(BaseEstimator):
    """Estimator facade: ``fit(medium)`` extracts the Dirac point and its
    effective coefficients; ``predict(kappa)`` returns the linear cone
    energies ``E_D -/+ nu_F |kappa|`` as an array of shape (n, 2)."""

    def __init__(self, M=12, deg_tol=DEG_TOL, struct_tol=STRUCT_TOL, vel_tol=VEL_TOL,
                 origin_search=False):
        self.M = M
        self.deg_tol = deg_tol
        self.struct_tol = struct_tol
        self.vel_tol = vel_tol
        self.origin_search = origin_search

    def fit(self, medium, y=None):
        check_scalar(self.M, "M", target_type=int, min_val=1)
        check_scalar(self.deg_tol, "deg_tol", min_val=0.0, include_min=False)
        check_scalar(self.struct_tol, "struct_tol", min_val=0.0, include_min=False)
        check_scalar(self.vel_tol, "vel_tol", min_val=0.0, include_min=False)
        dpd, report, info = analyze_dirac_point(medium, self.M, self.deg_tol, self.struct_tol,
                                                self.vel_tol, self.origin_search)
        self.data_ = dpd
        self.report_ = report
        self.info_ = info
        self.E_D_ = dpd.E_D
        self.nu_F_ = dpd.nu_F
        self.mu_ = dpd.mu
        self.xi_ = dpd.xi
        self.xi_sharp_ = dpd.xi_sharp
        self.Phi1_ = dpd.Phi1
        self.Phi2_ = dpd.Phi2
        return self

    def predict(self, kappa):
        check_is_fitted(self, "data_")
        r = np.linalg.norm(as_kpoints(kappa), axis=1)
        return np.column_stack([self.E_D_ - self.nu_F_ * r, self.E_D_ + self.nu_F_ * r])
