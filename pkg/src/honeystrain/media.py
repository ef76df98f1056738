"""Honeycomb media as truncated Fourier series and exact Fourier-space operators.

Coefficients are stored on dense square index boxes ``|m1|, |m2| <= cutoff``;
array position ``[m1 + cutoff, m2 + cutoff]`` holds the coefficient of
``exp(i (k + m1 k1 + m2 k2) . y)``.  Products with the medium are full 2D
convolutions, so the output cutoff is the sum of the input cutoffs and no
quadrature error enters.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

from ._validation import as_vector2, check_scalar
from .exceptions import AliasingError, EllipticityError
from .lattice import build_lattice

ELLIPTICITY_FLOOR = 1e-6

# shortest reciprocal vectors, closed under the C3 rotation and m -> -m
SHORTEST_ORBIT = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))


def _index_grid(cutoff):
    r = np.arange(-cutoff, cutoff + 1)
    return np.meshgrid(r, r, indexing="ij")


def _pad(coef, cutoff):
    """Zero-pad a coefficient box (last two axes) to a larger cutoff."""
    c = (coef.shape[-1] - 1) // 2
    if c == cutoff:
        return coef
    if c > cutoff:
        raise ValueError("cannot shrink a coefficient box by padding")
    w = cutoff - c
    pad = [(0, 0)] * (coef.ndim - 2) + [(w, w), (w, w)]
    return np.pad(coef, pad)


def _conv(a, b):
    return convolve2d(a, b, mode="full")


@dataclass(frozen=True, eq=False)
class QuasiPeriodicField:
    """``f(y) = sum_G c_G exp(i (k + G) . y)`` with optional leading component axes."""

    lattice: object
    k: np.ndarray
    coef: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "k", as_vector2(self.k))
        coef = np.asarray(self.coef, dtype=complex)
        if coef.ndim < 2 or coef.shape[-1] != coef.shape[-2] or coef.shape[-1] % 2 == 0:
            raise ValueError(f"coefficient box must be (..., 2c+1, 2c+1), got {coef.shape}")
        object.__setattr__(self, "coef", coef)

    @property
    def cutoff(self):
        return (self.coef.shape[-1] - 1) // 2

    @property
    def components(self):
        return self.coef.shape[:-2]

    def momenta(self):
        """Array of ``k + G`` with shape (2c+1, 2c+1, 2)."""
        m1, m2 = _index_grid(self.cutoff)
        return self.k + self.lattice.G(np.stack([m1, m2], axis=-1))

    def padded(self, cutoff):
        return QuasiPeriodicField(self.lattice, self.k, _pad(self.coef, cutoff))

    def component(self, *idx):
        return QuasiPeriodicField(self.lattice, self.k, self.coef[idx])

    def norm(self):
        """L2(Omega) norm by Parseval."""
        return float(np.sqrt(self.lattice.cell_area * np.sum(np.abs(self.coef) ** 2)))

    def inner(self, other):
        """``<self, other>`` over one cell; ``self`` must be scalar-valued.

        Returns an array shaped like ``other.components``.
        """
        if self.components:
            raise ValueError("left argument of inner must be scalar-valued")
        if np.max(np.abs(self.k - other.k)) > 1e-12 * (1 + np.max(np.abs(self.k))):
            raise ValueError("inner product of fields at different quasimomenta")
        c = max(self.cutoff, other.cutoff)
        a = _pad(self.coef, c)
        b = _pad(other.coef, c)
        return self.lattice.cell_area * np.sum(np.conj(a) * b, axis=(-2, -1))

    def __add__(self, other):
        c = max(self.cutoff, other.cutoff)
        return QuasiPeriodicField(self.lattice, self.k, _pad(self.coef, c) + _pad(other.coef, c))

    def __sub__(self, other):
        c = max(self.cutoff, other.cutoff)
        return QuasiPeriodicField(self.lattice, self.k, _pad(self.coef, c) - _pad(other.coef, c))

    def __mul__(self, scalar):
        return QuasiPeriodicField(self.lattice, self.k, self.coef * scalar)

    __rmul__ = __mul__

    def evaluate(self, y):
        """Direct summation at arbitrary points ``y`` of shape (..., 2)."""
        y = np.asarray(y, dtype=float)
        q = self.momenta().reshape(-1, 2)
        phase = np.exp(1j * (y.reshape(-1, 2) @ q.T))
        flat = self.coef.reshape(self.components + (-1,))
        out = np.tensordot(flat, phase, axes=([-1], [1]))
        return out.reshape(self.components + y.shape[:-1])

    def sample(self, n):
        """Values on the fractional grid ``y = (j1 v1 + j2 v2)/n``, ``j`` in ``[0, n)``.

        Returns ``(values, points)``; raises :class:`AliasingError` if the
        grid cannot represent the coefficient box.
        """
        c = self.cutoff
        if n < 2 * c + 1:
            raise AliasingError(f"grid of {n} points cannot carry cutoff {c}")
        return _sample_box(self.lattice, self.coef, n, self.k)


def _fractional_points(lattice, n):
    s = np.arange(n) / n
    s1, s2 = np.meshgrid(s, s, indexing="ij")
    return s1[..., None] * lattice.v1 + s2[..., None] * lattice.v2


def _sample_box(lattice, coef, n, k=None):
    c = (coef.shape[-1] - 1) // 2
    placed = np.zeros(coef.shape[:-2] + (n, n), dtype=complex)
    m1, m2 = _index_grid(c)
    placed[..., m1 % n, m2 % n] = coef
    vals = np.fft.ifft2(placed, axes=(-2, -1)) * n * n
    pts = _fractional_points(lattice, n)
    if k is not None and np.any(k != 0):
        vals = vals * np.exp(1j * pts @ k)
    return vals, pts


@dataclass(frozen=True, eq=False)
class FourierMedium:
    """Medium pair ``(A, V)`` stored as Fourier coefficient boxes.

    ``Ahat`` has shape (2c+1, 2c+1, 2, 2) and ``Vhat`` shape (2c+1, 2c+1).
    Construction rejects media whose sampled ``A`` fails the ellipticity
    floor.
    """

    lattice: object
    Ahat: np.ndarray
    Vhat: np.ndarray
    ellipticity_floor: float = ELLIPTICITY_FLOOR
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        Ahat = np.asarray(self.Ahat, dtype=complex)
        Vhat = np.asarray(self.Vhat, dtype=complex)
        if Ahat.ndim != 4 or Ahat.shape[2:] != (2, 2) or Ahat.shape[0] != Ahat.shape[1]:
            raise ValueError(f"Ahat must have shape (n, n, 2, 2), got {Ahat.shape}")
        if Vhat.shape != Ahat.shape[:2]:
            raise ValueError("Ahat and Vhat boxes must share the cutoff")
        Ahat.setflags(write=False)
        Vhat.setflags(write=False)
        object.__setattr__(self, "Ahat", Ahat)
        object.__setattr__(self, "Vhat", Vhat)
        lam = self.min_ellipticity()
        if lam < self.ellipticity_floor:
            raise EllipticityError(
                f"smallest eigenvalue of A is {lam:.3e} < floor {self.ellipticity_floor:.1e}")

    @property
    def cutoff(self):
        return (self.Vhat.shape[0] - 1) // 2

    @property
    def A_components(self):
        """Ahat rearranged to (2, 2, 2c+1, 2c+1) for convolutions."""
        return np.moveaxis(self.Ahat, (2, 3), (0, 1))

    def sample(self, n):
        """``(A, V, points)`` on the fractional ``n x n`` grid; A has shape (n, n, 2, 2)."""
        if n < 2 * self.cutoff + 1:
            raise AliasingError(f"grid of {n} points cannot carry cutoff {self.cutoff}")
        A, pts = _sample_box(self.lattice, self.A_components, n)
        V, _ = _sample_box(self.lattice, self.Vhat, n)
        return np.moveaxis(A, (0, 1), (2, 3)), V, pts

    def evaluate(self, y):
        """Direct summation of ``(A(y), V(y))`` at arbitrary points (..., 2)."""
        y = np.asarray(y, dtype=float)
        c = self.cutoff
        m1, m2 = _index_grid(c)
        G = self.lattice.G(np.stack([m1, m2], axis=-1)).reshape(-1, 2)
        phase = np.exp(1j * (y.reshape(-1, 2) @ G.T))
        A = phase @ self.Ahat.reshape(-1, 4)
        V = phase @ self.Vhat.reshape(-1)
        return A.reshape(y.shape[:-1] + (2, 2)), V.reshape(y.shape[:-1])

    def min_ellipticity(self, n=None):
        n = n or max(4 * self.cutoff + 4, 24)
        A, _, _ = self.sample(n)
        H = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))
        return float(np.min(np.linalg.eigvalsh(H)))

    @property
    def is_isotropic(self):
        """True when A(y) = a(y) Id."""
        A = self.Ahat
        off = np.max(np.abs(A[..., 0, 1])) + np.max(np.abs(A[..., 1, 0]))
        return bool(off == 0 and np.array_equal(A[..., 0, 0], A[..., 1, 1]))

    def coefficient(self, dm1, dm2):
        """``(Ahat, Vhat)`` at arbitrary index differences (zero outside the box)."""
        c = self.cutoff
        dm1 = np.asarray(dm1)
        dm2 = np.asarray(dm2)
        inside = (np.abs(dm1) <= c) & (np.abs(dm2) <= c)
        i1 = np.where(inside, dm1 + c, 0)
        i2 = np.where(inside, dm2 + c, 0)
        A = np.where(inside[..., None, None], self.Ahat[i1, i2], 0)
        V = np.where(inside, self.Vhat[i1, i2], 0)
        return A, V

    # -- serialization -------------------------------------------------

    def to_dict(self):
        c = self.cutoff
        m1, m2 = _index_grid(c)
        Ahat, Vhat = [], []
        for a, b in zip(m1.ravel(), m2.ravel()):
            A = self.Ahat[a + c, b + c]
            if np.any(A != 0):
                row = [int(a), int(b)]
                for z in A.ravel():
                    row += [float(z.real), float(z.imag)]
                Ahat.append(row)
            v = self.Vhat[a + c, b + c]
            if v != 0:
                Vhat.append([int(a), int(b), float(v.real), float(v.imag)])
        return {"lattice": self.lattice.to_dict(), "cutoff": int(c), "Ahat": Ahat, "Vhat": Vhat}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, doc):
        lattice = build_lattice(float(doc["lattice"]["scale"]))
        c = int(doc["cutoff"])
        Ahat = np.zeros((2 * c + 1, 2 * c + 1, 2, 2), dtype=complex)
        Vhat = np.zeros((2 * c + 1, 2 * c + 1), dtype=complex)
        for row in doc["Ahat"]:
            a, b = int(row[0]), int(row[1])
            vals = np.asarray(row[2:], dtype=float)
            Ahat[a + c, b + c] = (vals[0::2] + 1j * vals[1::2]).reshape(2, 2)
        for a, b, re, im in doc["Vhat"]:
            Vhat[int(a) + c, int(b) + c] = re + 1j * im
        return cls(lattice, Ahat, Vhat)

    @classmethod
    def from_json(cls, text_or_path):
        text = text_or_path
        if not text.lstrip().startswith("{"):
            with open(text_or_path, encoding="utf-8") as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))


def make_modulated_medium(lattice, V0=0.0, a_iso=0.0, a_aniso=0.0, offset=0.0):
    """Medium built from the shortest reciprocal orbit.

    ``V(y) = offset + V0 * sum cos(G . y)`` over the three shortest
    directions; ``A(y) = Id + sum_G (a_iso Id + a_aniso g g^T) cos(G . y)``
    with ``g = G/|G|``.  Every such pair is a honeycomb medium.
    """
    c = 1
    Ahat = np.zeros((3, 3, 2, 2), dtype=complex)
    Vhat = np.zeros((3, 3), dtype=complex)
    Ahat[c, c] = np.eye(2)
    Vhat[c, c] = offset
    for m1, m2 in SHORTEST_ORBIT:
        G = lattice.G(np.array([m1, m2]))
        g = G / np.linalg.norm(G)
        Vhat[m1 + c, m2 + c] = V0 / 2
        Ahat[m1 + c, m2 + c] = 0.5 * (a_iso * np.eye(2) + a_aniso * np.outer(g, g))
    return FourierMedium(lattice, Ahat, Vhat)


def make_reference_medium(lattice, V0=10.0, offset=0.0):
    """``A = Id`` and the three-cosine honeycomb potential of amplitude ``V0``."""
    check_scalar(V0, "V0")
    return make_modulated_medium(lattice, V0=V0, offset=offset)


# -- symmetry audit ----------------------------------------------------------


@dataclass
class SymmetryReport:
    hermitian_A: float
    real_V: float
    pc_A: float
    p_V: float
    rotation_A: float
    rotation_V: float
    min_ellipticity: float
    ellipticity_floor: float
    tol: float
    grid_size: int

    @property
    def violations(self):
        return {
            "hermitian_A": self.hermitian_A,
            "real_V": self.real_V,
            "pc_A": self.pc_A,
            "p_V": self.p_V,
            "rotation_A": self.rotation_A,
            "rotation_V": self.rotation_V,
        }

    @property
    def passed(self):
        return (all(v < self.tol for v in self.violations.values())
                and self.min_ellipticity >= self.ellipticity_floor)

    def to_dict(self):
        d = dict(self.violations)
        d.update(min_ellipticity=self.min_ellipticity, ellipticity_floor=self.ellipticity_floor,
                 tol=self.tol, grid_size=self.grid_size, passed=self.passed)
        return d


def _rotation_index_map(lattice, n):
    """Grid index (j1, j2) of ``R^{-1} y`` for every fractional grid point ``y``."""
    B = lattice.direct_basis
    P = np.linalg.solve(B, np.linalg.solve(lattice.R, B))
    Pi = np.rint(P).astype(int)
    j1, j2 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return (Pi[0, 0] * j1 + Pi[0, 1] * j2) % n, (Pi[1, 0] * j1 + Pi[1, 1] * j2) % n


def check_symmetries(medium, grid_size=None, tol=1e-12):
    """Measure every honeycomb axiom on an unaliased real-space grid."""
    c = medium.cutoff
    n = grid_size or max(2 * c + 2, 24)
    if n < 2 * c + 2:
        raise AliasingError(f"grid_size {n} < 2*cutoff+2 = {2 * c + 2}")
    A, V, _ = medium.sample(n)
    AH = np.conj(np.swapaxes(A, -1, -2))
    neg = (-np.arange(n)) % n
    Aneg = A[neg][:, neg]
    Vneg = V[neg][:, neg]
    r1, r2 = _rotation_index_map(medium.lattice, n)
    R = medium.lattice.R
    A_rot = A[r1, r2]
    V_rot = V[r1, r2]
    covariant = R.T @ A @ R
    H = 0.5 * (A + AH)
    return SymmetryReport(
        hermitian_A=float(np.max(np.abs(A - AH))),
        real_V=float(np.max(np.abs(V.imag))),
        pc_A=float(np.max(np.abs(np.conj(Aneg) - A))),
        p_V=float(np.max(np.abs(Vneg - V))),
        rotation_A=float(np.max(np.abs(A_rot - covariant))),
        rotation_V=float(np.max(np.abs(V_rot - V))),
        min_ellipticity=float(np.min(np.linalg.eigvalsh(H))),
        ellipticity_floor=medium.ellipticity_floor,
        tol=tol,
        grid_size=n,
    )


# -- Fourier-space operators ------------------------------------------------


def _gradient(f):
    """Coefficient boxes of ``d_j f`` stacked on a new leading axis."""
    q = f.momenta()
    return np.stack([1j * q[..., 0] * f.coef, 1j * q[..., 1] * f.coef])


def _out_momenta(lattice, k, cutoff):
    m1, m2 = _index_grid(cutoff)
    return k + lattice.G(np.stack([m1, m2], axis=-1))


def _check_field(medium, f):
    if f.components:
        raise ValueError("operators act on scalar-valued fields")
    if f.lattice is not medium.lattice and not np.allclose(f.lattice.v1, medium.lattice.v1):
        raise ValueError("field and medium live on different lattices")


def apply_calA(medium, f):
    """First-order operator ``(1/i)[A grad f + div(A f)]``; returns a 2-component field."""
    _check_field(medium, f)
    A = medium.A_components
    g = _gradient(f)
    cout = f.cutoff + medium.cutoff
    q = _out_momenta(f.lattice, f.k, cout)
    out = np.zeros((2, 2 * cout + 1, 2 * cout + 1), dtype=complex)
    for j in range(2):
        # (A grad f)_j = a_jl d_l f ; (div(A f))_j = d_i (a_ij f)
        for l in range(2):
            out[j] += _conv(A[j, l], g[l])
        for i in range(2):
            out[j] += 1j * q[..., i] * _conv(A[i, j], f.coef)
    return QuasiPeriodicField(f.lattice, f.k, out / 1j)


def apply_frakA(medium, f):
    """Second-order matrix operator ``d_l(a_li d_j f) + d_j(a_il d_l f)``."""
    _check_field(medium, f)
    A = medium.A_components
    g = _gradient(f)
    cout = f.cutoff + medium.cutoff
    q = _out_momenta(f.lattice, f.k, cout)
    out = np.zeros((2, 2, 2 * cout + 1, 2 * cout + 1), dtype=complex)
    Ag = [[_conv(A[a, b], g[c_]) for c_ in range(2)] for a in range(2) for b in range(2)]

    def conv_Ag(a, b, c_):
        return Ag[2 * a + b][c_]

    for i in range(2):
        for j in range(2):
            for l in range(2):
                out[i, j] += 1j * q[..., l] * conv_Ag(l, i, j)
                out[i, j] += 1j * q[..., j] * conv_Ag(i, l, l)
    return QuasiPeriodicField(f.lattice, f.k, out)


def apply_L0(medium, f):
    """Unstrained operator ``-div(A grad f) + V f``."""
    _check_field(medium, f)
    A = medium.A_components
    g = _gradient(f)
    cout = f.cutoff + medium.cutoff
    q = _out_momenta(f.lattice, f.k, cout)
    out = _conv(medium.Vhat, f.coef)
    for i in range(2):
        flux = _conv(A[i, 0], g[0]) + _conv(A[i, 1], g[1])
        out = out - 1j * q[..., i] * flux
    return QuasiPeriodicField(f.lattice, f.k, out)


def random_field(lattice, k, cutoff, rng=None, decay=0.0):
    """Random coefficient box, optionally damped like ``exp(-decay |m|^2)``."""
    rng = np.random.default_rng(rng)
    n = 2 * cutoff + 1
    coef = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    if decay:
        m1, m2 = _index_grid(cutoff)
        coef *= np.exp(-decay * (m1 ** 2 + m2 ** 2))
    return QuasiPeriodicField(lattice, k, coef)


def translate_medium(medium, y0):
    """Medium ``(A, V)(y + y0)``: every coefficient picks up ``exp(i G . y0)``."""
    y0 = as_vector2(y0, "y0")
    c = medium.cutoff
    m1, m2 = _index_grid(c)
    G = medium.lattice.G(np.stack([m1, m2], axis=-1))
    phase = np.exp(1j * G @ y0)
    return FourierMedium(medium.lattice, medium.Ahat * phase[..., None, None],
                         medium.Vhat * phase, medium.ellipticity_floor)
