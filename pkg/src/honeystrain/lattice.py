"""Honeycomb (triangular) lattice geometry and shared constants.

Conventions: ``v1 = scale * (sqrt(3)/2, 1/2)``, ``v2 = scale * (0, -1)`` and
the dual basis fixed by ``v_i . k_j = 2 pi delta_ij``.  ``R`` is the rotation
by 2*pi/3 oriented so that ``R v1 = v2`` (clockwise); with this orientation
the tau-eigenvector of ``f -> f(R^{-1} y)`` at the corner has
``<Phi1, calA Phi2> ~ (1, i)``.  The Brillouin-zone corner carrying the Dirac
point is ``K = (k1 + k2)/3``.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._validation import as_vector2, check_scalar

TAU = np.exp(2j * np.pi / 3)


class PauliBasis(NamedTuple):
    sigma0: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray
    sigma3: np.ndarray


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


PAULI = PauliBasis(
    _frozen([[1, 0], [0, 1]]).astype(complex),
    _frozen([[0, 1], [1, 0]]).astype(complex),
    _frozen([[0, -1j], [1j, 0]]),
    _frozen([[1, 0], [0, -1]]).astype(complex),
)
for _s in PAULI:
    _s.setflags(write=False)

SIGMA0, SIGMA1, SIGMA2, SIGMA3 = PAULI


def rotation_matrix(angle=-2 * np.pi / 3):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True, eq=False)
class HoneycombLattice:
    """Direct/dual bases, cell areas, BZ corners and the C3 rotation."""

    scale: float
    v1: np.ndarray
    v2: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    cell_area: float
    bz_area: float
    K: np.ndarray
    Kprime: np.ndarray
    R: np.ndarray
    tau: complex = TAU

    @property
    def direct_basis(self):
        """2x2 array with v1, v2 as columns."""
        return np.column_stack([self.v1, self.v2])

    @property
    def dual_basis(self):
        """2x2 array with k1, k2 as columns."""
        return np.column_stack([self.k1, self.k2])

    def G(self, m):
        """Reciprocal vectors ``m1 k1 + m2 k2`` for integer pairs of shape (..., 2)."""
        m = np.asarray(m)
        return m[..., 0, None] * self.k1 + m[..., 1, None] * self.k2

    def dual_coordinates(self, k):
        """Coordinates of ``k`` (shape (..., 2)) in the dual basis."""
        k = np.asarray(k, dtype=float)
        return np.linalg.solve(self.dual_basis, k.reshape(-1, 2).T).T.reshape(k.shape)

    @property
    def rotation_action(self):
        """Integer matrix T with ``R (m1 k1 + m2 k2) = (T m)_1 k1 + (T m)_2 k2``."""
        T = self.dual_coordinates(np.column_stack([self.R @ self.k1, self.R @ self.k2]).T).T
        Ti = np.rint(T)
        if np.max(np.abs(T - Ti)) > 1e-10:
            raise ValueError("rotation does not preserve the dual lattice")
        return Ti.astype(int)

    @property
    def corner_shift(self):
        """Integer pair s with ``R K = K + s1 k1 + s2 k2``."""
        s = self.dual_coordinates(self.R @ self.K - self.K)
        si = np.rint(s)
        if np.max(np.abs(s - si)) > 1e-10:
            raise ValueError("R K - K is not a dual lattice vector")
        return si.astype(int)

    def to_dict(self):
        return {"scale": float(self.scale)}


def build_lattice(scale=1.0):
    """Construct the honeycomb lattice of the given length scale."""
    check_scalar(scale, "scale", min_val=0.0, include_min=False)
    R = rotation_matrix()
    v1 = scale * np.array([np.sqrt(3) / 2, 0.5])
    v2 = R @ v1
    # dual basis from the 2x2 system V^T-rows . k-columns = 2 pi Id
    Vrows = np.array([v1, v2])
    Kcols = np.linalg.solve(Vrows, 2 * np.pi * np.eye(2))
    k1, k2 = Kcols[:, 0], Kcols[:, 1]
    cell_area = abs(np.linalg.det(Vrows))
    bz_area = abs(np.linalg.det(Kcols))
    K = (k1 + k2) / 3
    return HoneycombLattice(
        scale=float(scale),
        v1=_frozen(v1), v2=_frozen(v2), k1=_frozen(k1), k2=_frozen(k2),
        cell_area=float(cell_area), bz_area=float(bz_area),
        K=_frozen(K), Kprime=_frozen(-K), R=_frozen(R),
    )


def reduce_to_bz(lattice, k, search=2):
    """Map ``k`` to a closest-to-origin representative of ``k + Lambda*``.

    The point is first wrapped by rounding its dual coordinates, then the
    translates with ``|m1|, |m2| <= search`` are compared.  Ties on the BZ
    boundary are broken by the lexicographic order of the candidates' dual
    coordinates, which makes the map idempotent and lattice periodic.
    """
    k = as_vector2(k)
    c = lattice.dual_coordinates(k)
    base = k - lattice.G(np.rint(c))
    rng = np.arange(-search, search + 1)
    m = np.array(np.meshgrid(rng, rng, indexing="ij")).reshape(2, -1).T
    cand = base[None, :] - lattice.G(m)
    d = np.linalg.norm(cand, axis=1)
    tol = 1e-9 * (1.0 + d.min())
    tied = np.flatnonzero(d <= d.min() + tol)
    if len(tied) == 1:
        return cand[tied[0]]
    coords = np.round(lattice.dual_coordinates(cand[tied]), 9)
    order = np.lexsort((coords[:, 1], coords[:, 0]))
    return cand[tied[order[0]]]


def rotation_image_index(lattice, m, tol=1e-10):
    """Index ``m'`` with ``R (K + G_m) = K + G_m'``.

    ``m`` may be a single pair or an array of shape (n, 2).  Returns the image
    indices and a report with the largest real-space mismatch; ``exact`` is
    False when that mismatch exceeds ``tol`` (a broken convention).
    """
    m = np.asarray(m, dtype=int)
    single = m.ndim == 1
    mm = np.atleast_2d(m)
    try:
        T = lattice.rotation_action
        s = lattice.corner_shift
    except ValueError as exc:
        return None, {"exact": False, "residual": np.inf, "reason": str(exc)}
    image = mm @ T.T + s
    lhs = (lattice.R @ (lattice.K + lattice.G(mm)).T).T
    rhs = lattice.K + lattice.G(image)
    residual = float(np.max(np.abs(lhs - rhs))) if len(mm) else 0.0
    scale = 1.0 + float(np.max(np.abs(lhs))) if len(mm) else 1.0
    report = {"exact": residual <= tol * scale, "residual": residual}
    return (image[0] if single else image), report
