"""Plane-wave Galerkin discretization of the Bloch fibers L(k)."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_kpoints, as_vector2, check_scalar
from .exceptions import EigensolverError, SymmetryMismatch
from .lattice import rotation_image_index
from .media import QuasiPeriodicField

DEG_TOL = 1e-8
RES_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class PlaneWaveBasis:
    """Plane waves ``exp(i (k + G) . y)`` with ``|center + G| <= radius``.

    The index set is a disc of the same area as the ``(2M+1)^2`` box, which
    makes it closed under the C3 rotation whenever ``center`` is a
    rotation-invariant momentum (Gamma or a BZ corner).
    """

    lattice: object
    k: np.ndarray
    center: np.ndarray
    M: int
    radius: float
    indices: np.ndarray

    @property
    def size(self):
        return len(self.indices)

    @property
    def cutoff(self):
        """Smallest square box that contains the index set."""
        return int(np.max(np.abs(self.indices)))

    def momenta(self, k=None):
        k = self.k if k is None else as_vector2(k)
        return k + self.lattice.G(self.indices)

    def at(self, k):
        """Same index set at another base momentum."""
        return PlaneWaveBasis(self.lattice, as_vector2(k), self.center, self.M, self.radius,
                              self.indices)

    def to_field(self, coef, k=None):
        """Scatter basis coefficients (shape (n,) or (n, m)) into box fields."""
        coef = np.asarray(coef)
        c = self.cutoff
        box = np.zeros(coef.shape[1:] + (2 * c + 1, 2 * c + 1), dtype=complex)
        box[..., self.indices[:, 0] + c, self.indices[:, 1] + c] = np.moveaxis(coef, 0, -1)
        return QuasiPeriodicField(self.lattice, self.k if k is None else k, box)

    def from_field(self, f):
        """Gather a box field onto the basis (coefficients outside the box are zero)."""
        c = f.cutoff
        inside = np.all(np.abs(self.indices) <= c, axis=1)
        out = np.zeros(f.components + (self.size,), dtype=complex)
        idx = self.indices[inside] + c
        out[..., inside] = f.coef[..., idx[:, 0], idx[:, 1]]
        return out

    def position(self):
        """Dict from index pair to basis position."""
        return {(int(a), int(b)): i for i, (a, b) in enumerate(self.indices)}

    def rotation_permutation(self):
        """Permutation ``p`` with ``R (K + G_i) = K + G_{p[i]}``.

        Raises :class:`SymmetryMismatch` when the index set is not closed.
        """
        if np.linalg.norm(self.k - self.lattice.K) > 1e-12 * (1 + np.linalg.norm(self.k)):
            raise SymmetryMismatch("rotation acts on the fiber at K only")
        image, report = rotation_image_index(self.lattice, self.indices)
        if not report["exact"]:
            raise SymmetryMismatch(f"rotation map is not exact: {report}")
        pos = self.position()
        try:
            return np.array([pos[(int(a), int(b))] for a, b in image])
        except KeyError as exc:
            raise SymmetryMismatch(f"basis not closed under rotation: {exc}") from None


def make_basis(lattice, k, M, center=None):
    """Disc basis with ``(2M+1)^2`` plane waves (up to boundary rounding)."""
    M = int(check_scalar(M, "M", min_val=0))
    k = as_vector2(k)
    center = k if center is None else as_vector2(center)
    radius = (2 * M + 1) * np.sqrt(lattice.bz_area / np.pi)
    kmin = min(np.linalg.norm(lattice.k1), np.linalg.norm(lattice.k2))
    n = int(np.ceil(2 * (radius + np.linalg.norm(center)) / kmin)) + 2
    r = np.arange(-n, n + 1)
    m = np.stack(np.meshgrid(r, r, indexing="ij"), axis=-1).reshape(-1, 2)
    q = np.linalg.norm(center + lattice.G(m), axis=1)
    keep = q <= radius * (1 + 1e-12)
    m = m[keep]
    # deterministic order: by |center + G| then lexicographically
    order = np.lexsort((m[:, 1], m[:, 0], np.round(q[keep], 9)))
    return PlaneWaveBasis(lattice, k, center, M, float(radius), m[order])


def assemble_fiber_matrix(medium, k, basis):
    """Galerkin matrix with entries ``(k+G).Ahat(G-G').(k+G') + Vhat(G-G')``."""
    k = as_vector2(k)
    idx = basis.indices
    d = idx[:, None, :] - idx[None, :, :]
    A, V = medium.coefficient(d[..., 0], d[..., 1])
    q = k + medium.lattice.G(idx)
    H = np.einsum("ai,abij,bj->ab", q, A, q, optimize=True) + V
    return H


@dataclass
class BandResult:
    k: np.ndarray
    eigenvalues: np.ndarray
    vectors: np.ndarray  # orthonormal in the coefficient inner product; shape (n, nbands)
    basis: PlaneWaveBasis
    residuals: np.ndarray = field(default=None)
    hermiticity_defect: float = 0.0

    @property
    def nbands(self):
        return len(self.eigenvalues)

    def field(self, b):
        """Band ``b`` (0-based) as an L2(Omega)-normalized quasi-periodic field."""
        return self.basis.to_field(self.vectors[:, b] / np.sqrt(self.basis.lattice.cell_area))

    @property
    def fields(self):
        return [self.field(b) for b in range(self.nbands)]


def compute_bands(medium, k, nbands, M, basis=None, center=None, res_tol=RES_TOL):
    """Lowest ``nbands`` eigenpairs of the fiber operator at ``k``."""
    k = as_vector2(k)
    if basis is None:
        basis = make_basis(medium.lattice, k, M, center=center)
    elif np.any(basis.k != k):
        basis = basis.at(k)
    nbands = int(check_scalar(nbands, "nbands", min_val=1, max_val=basis.size))
    H = assemble_fiber_matrix(medium, k, basis)
    scale = max(1.0, float(np.max(np.abs(H))))
    defect = float(np.max(np.abs(H - H.conj().T))) / scale
    try:
        w, U = scipy.linalg.eigh(H, subset_by_index=[0, nbands - 1], driver="evr")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolverError(f"dense eigensolve failed at k={k}: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise EigensolverError(f"non-finite eigenvalues at k={k}")
    res = np.linalg.norm(H @ U - U * w, axis=0)
    bad = res > res_tol * (1 + np.abs(w)) * max(1.0, np.sqrt(basis.size))
    if np.any(bad):
        raise EigensolverError(f"eigenpair residuals {res[bad]} exceed tolerance at k={k}")
    return BandResult(k, w, U, basis, residuals=res, hermiticity_defect=defect)


@dataclass
class BandTable:
    s: np.ndarray
    k: np.ndarray
    energies: np.ndarray

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        nb = self.energies.shape[1]
        w.writerow(["s", "kx", "ky"] + [f"E{b + 1}" for b in range(nb)])
        for s, k, E in zip(self.s, self.k, self.energies):
            w.writerow([repr(float(s)), repr(float(k[0])), repr(float(k[1]))]
                       + [repr(float(e)) for e in E])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1:3], data[:, 3:])


def path_points(waypoints, samples_per_leg):
    """Piecewise-linear k path and its arclength."""
    wp = as_kpoints(waypoints)
    if len(wp) < 2:
        raise ValueError("a band path needs at least two waypoints")
    n = int(check_scalar(samples_per_leg, "samples_per_leg", min_val=1))
    pts = [wp[0][None]]
    for a, b in zip(wp[:-1], wp[1:]):
        t = np.arange(1, n + 1)[:, None] / n
        pts.append(a + t * (b - a))
    pts = np.concatenate(pts)
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    return pts, s


def band_path(medium, waypoints, samples_per_leg, nbands, M):
    """Bands along a piecewise-linear path, ordered by value at every sample."""
    pts, s = path_points(waypoints, samples_per_leg)
    E = np.array([compute_bands(medium, k, nbands, M).eigenvalues for k in pts])
    return BandTable(s, pts, E)


def high_symmetry_points(lattice):
    """Gamma, K and the edge midpoint M of the Brillouin zone."""
    return {"G": np.zeros(2), "K": np.array(lattice.K), "M": 0.5 * np.array(lattice.k1)}


# -- symmetry operators on the fiber at K -------------------------------------


def apply_rotation_R(f):
    """``f(R^{-1} y)`` for a field at the corner K (coefficient permutation)."""
    lat = f.lattice
    if np.linalg.norm(f.k - lat.K) > 1e-12 * (1 + np.linalg.norm(lat.K)):
        raise SymmetryMismatch("rotation is only defined on the fiber at K")
    c = f.cutoff
    r = np.arange(-c, c + 1)
    m = np.stack(np.meshgrid(r, r, indexing="ij"), axis=-1).reshape(-1, 2)
    image, report = rotation_image_index(lat, m)
    if not report["exact"]:
        raise SymmetryMismatch(f"rotation map is not exact: {report}")
    c2 = int(np.max(np.abs(image)))
    out = np.zeros(f.components + (2 * c2 + 1, 2 * c2 + 1), dtype=complex)
    src = f.coef.reshape(f.components + (-1,))
    out[..., image[:, 0] + c2, image[:, 1] + c2] = src
    return QuasiPeriodicField(lat, f.k, out)


def apply_PC(f):
    """``conj(f(-y))``; at K this conjugates every coefficient in place."""
    lat = f.lattice
    if np.linalg.norm(f.k - lat.K) > 1e-12 * (1 + np.linalg.norm(lat.K)):
        raise SymmetryMismatch("PC maps the fiber at K to itself only")
    return QuasiPeriodicField(lat, f.k, np.conj(f.coef))


# -- estimator facade ---------------------------------------------------------


class BlochBandSolver(BaseEstimator):
    """Band-structure estimator: ``fit(medium)`` then ``predict(kpoints)``.

    ``predict`` returns an array of shape (n_points, nbands).
    """

    def __init__(self, M=10, nbands=6, center=None):
        self.M = M
        self.nbands = nbands
        self.center = center

    def fit(self, medium, y=None):
        check_scalar(self.M, "M", target_type=int, min_val=0)
        check_scalar(self.nbands, "nbands", target_type=int, min_val=1)
        if self.center is not None:
            as_vector2(self.center, "center")
        self.medium_ = medium
        self.lattice_ = medium.lattice
        return self

    def band_result(self, k):
        check_is_fitted(self, "medium_")
        return compute_bands(self.medium_, k, self.nbands, self.M, center=self.center)

    def predict(self, kpoints):
        check_is_fitted(self, "medium_")
        ks = as_kpoints(kpoints)
        return np.array([self.band_result(k).eigenvalues for k in ks])
