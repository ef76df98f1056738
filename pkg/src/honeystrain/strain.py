"""Deformations, their Jacobians and the induced effective gauge and scalar fields."""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import erf

from .exceptions import ComplexMu, ConfigError
from .grid import PeriodicGrid, fd4_derivative, fft2, ifft2
from .lattice import SIGMA0, SIGMA1, SIGMA2, SIGMA3

MU_TOL = 1e-8
KINDS = ("constant", "linear-gauge", "erf-gauge", "sinusoidal", "gridded")


# -- smooth window -------------------------------------------------------------


def _psi(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    a = _psi(x)
    return a / (a + _psi(1.0 - x))


def bump(Y, r_c, w_c):
    """Equals 1 on ``|Y| <= r_c`` and 0 on ``|Y| >= r_c + w_c``."""
    return 1.0 - smooth_step((np.abs(Y) - r_c) / w_c)


# -- gauge potentials used directly by the Dirac solvers ---------------------


def linear_gauge_potential(Y1, B0, r_c=8.0, w_c=4.0):
    """``A2 = B0 Y1`` windowed by the bump (lengths in magnetic units ``1/sqrt|B0|``)."""
    ell = 1.0 / np.sqrt(abs(B0))
    return B0 * Y1 * bump(Y1, r_c * ell, w_c * ell)


def erf_integral(Y):
    """``int_0^Y erf(s) ds`` in closed form."""
    Y = np.asarray(Y, dtype=float)
    return Y * erf(Y) + (np.exp(-Y ** 2) - 1.0) / np.sqrt(np.pi)


def periodized_erf(Y1, L1):
    """``erf(Y) - erf(Y - L/2) - erf(Y + L/2)``: equals erf near the center of
    ``[-L/2, L/2)`` and is smooth and periodic across the box edge."""
    return erf(Y1) - erf(Y1 - 0.5 * L1) - erf(Y1 + 0.5 * L1)


# -- deformations --------------------------------------------------------------


@dataclass
class Deformation:
    """Slow displacement field ``u(Y)``.

    Kinds and parameters:

    * ``constant``: ``shift`` (2-vector).
    * ``linear-gauge``: ``beta``, ``r_c``, ``w_c``; ``u = a g(Y1)`` with
      ``g' = 2 beta Y1 chi(Y1)`` and ``direction`` a (default ``(0, 1)``).
    * ``erf-gauge``: ``amplitude``; ``u = a g(Y1)`` with ``g' = amplitude * erf(Y1)``.
    * ``sinusoidal``: ``amplitude``, ``direction`` a, ``wavevector`` q,
      ``phase``; ``u = amplitude * a * sin(q.Y + phase)``.
    * ``gridded``: ``grid`` (PeriodicGrid) and ``u`` samples (2, N1, N2).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown deformation kind {self.kind!r}", key="strain.kind")

    @property
    def analytic(self):
        return self.kind != "gridded"

    def displacement(self, Y1, Y2):
        Y1, Y2 = np.broadcast_arrays(np.asarray(Y1, float), np.asarray(Y2, float))
        zero = np.zeros_like(Y1)
        p = self.params
        if self.kind == "constant":
            s = np.asarray(p.get("shift", (0.0, 0.0)), dtype=float)
            return np.stack([zero + s[0], zero + s[1]])
        if self.kind == "linear-gauge":
            a = self._gauge_direction()
            g = self._linear_u2(Y1)
            return np.stack([a[0] * g, a[1] * g])
        if self.kind == "erf-gauge":
            a = self._gauge_direction()
            g = p["amplitude"] * erf_integral(Y1)
            return np.stack([a[0] * g, a[1] * g])
        if self.kind == "sinusoidal":
            a, q = self._sin_params()
            s = np.sin(q[0] * Y1 + q[1] * Y2 + p.get("phase", 0.0))
            return np.stack([p["amplitude"] * a[0] * s, p["amplitude"] * a[1] * s])
        raise ValueError("gridded deformations carry samples, not a formula")

    def jacobian(self, Y1, Y2):
        """``U_ij = d u_i / d Y_j`` with shape (..., 2, 2)."""
        Y1, Y2 = np.broadcast_arrays(np.asarray(Y1, float), np.asarray(Y2, float))
        U = np.zeros(Y1.shape + (2, 2))
        p = self.params
        if self.kind == "constant":
            return U
        if self.kind in ("linear-gauge", "erf-gauge"):
            if self.kind == "linear-gauge":
                g = 2 * p["beta"] * Y1 * bump(Y1, p.get("r_c", 8.0), p.get("w_c", 4.0))
            else:
                g = p["amplitude"] * erf(Y1)
            a = self._gauge_direction()
            U[..., 0, 0] = a[0] * g
            U[..., 1, 0] = a[1] * g
            return U
        if self.kind == "sinusoidal":
            a, q = self._sin_params()
            c = p["amplitude"] * np.cos(q[0] * Y1 + q[1] * Y2 + p.get("phase", 0.0))
            return c[..., None, None] * np.outer(a, q)
        raise ValueError("gridded deformations are differentiated numerically")

    def bound(self, grid):
        """Largest ``|U|`` (spectral norm) on the grid."""
        U = jacobian_U(self, grid).U
        return float(np.max(np.linalg.norm(U, ord=2, axis=(-2, -1))))

    def _gauge_direction(self):
        return np.asarray(self.params.get("direction", (0.0, 1.0)), dtype=float)

    def _sin_params(self):
        a = np.asarray(self.params.get("direction", (0.0, 1.0)), dtype=float)
        q = np.asarray(self.params["wavevector"], dtype=float)
        return a, q

    def _linear_u2(self, Y1):
        p = self.params
        beta, r_c, w_c = p["beta"], p.get("r_c", 8.0), p.get("w_c", 4.0)
        a = np.abs(Y1)
        out = beta * a ** 2
        outer = a > r_c
        if np.any(outer):
            cache = {}
            for val in np.unique(a[outer]):
                top = min(val, r_c + w_c)
                extra, _ = quad(lambda s: 2 * beta * s * bump(np.array(s), r_c, w_c),
                                r_c, top, epsabs=1e-14, epsrel=1e-13)
                cache[val] = beta * r_c ** 2 + extra
            out[outer] = [cache[v] for v in a[outer]]
        return out

    def to_dict(self):
        p = {}
        for key, val in self.params.items():
            if isinstance(val, PeriodicGrid):
                p[key] = val.to_dict()
            elif isinstance(val, np.ndarray):
                p[key] = val.tolist()
            else:
                p[key] = val
        return {"kind": self.kind, "params": p}


def gridded_deformation(grid, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (2,) + grid.shape:
        raise ValueError(f"gridded displacement must have shape (2, {grid.N1}, {grid.N2})")
    return Deformation("gridded", {"grid": grid, "u": u})


@dataclass
class StrainGrid:
    grid: PeriodicGrid
    U: np.ndarray  # (N1, N2, 2, 2)

    def traces(self):
        return pauli_traces(self.U)


def pauli_traces(U):
    """``Tr(U sigma_a)`` for a = 0..3, each of shape ``U.shape[:-2]``."""
    return tuple(np.einsum("...ij,ji->...", U, s) for s in (SIGMA0, SIGMA1, SIGMA2, SIGMA3))


def jacobian_U(deformation, grid):
    """Sample ``U = D_Y u`` on a periodic grid."""
    if deformation.kind == "gridded":
        g = deformation.params["grid"]
        if g.shape != grid.shape or not np.isclose(g.L1, grid.L1) or not np.isclose(g.L2, grid.L2):
            raise ValueError("gridded deformation lives on a different grid")
        u = deformation.params["u"]
        U = np.zeros(grid.shape + (2, 2))
        for i in range(2):
            U[..., i, 0] = fd4_derivative(u[i], grid.h1, 0)
            U[..., i, 1] = fd4_derivative(u[i], grid.h2, 1)
        return StrainGrid(grid, U)
    Y1, Y2 = grid.mesh()
    return StrainGrid(grid, deformation.jacobian(Y1, Y2))


# -- effective fields ---------------------------------------------------------


@dataclass
class GaugeFieldData:
    grid: PeriodicGrid
    A1: np.ndarray
    A2: np.ndarray
    W: np.ndarray
    v: float
    flavor: str
    B: np.ndarray = None
    B0: float = None

    def to_csv(self, path=None):
        Y1, Y2 = self.grid.mesh()
        B = self.B if self.B is not None else magnetic_field(self)
        cols = np.column_stack([c.ravel() for c in (Y1, Y2, self.A1, self.A2, self.W, B)])
        lines = ["Y1,Y2,A1,A2,W_eff,B"]
        lines += [",".join(repr(float(x)) for x in row) for row in cols]
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    def header(self):
        d = {"v": self.v, "flavor": self.flavor, "grid": self.grid.to_dict(),
             "B_convention": "B = d1 A2 - d2 A1; the sigma3 coefficient of D^2/v^2 is -B"}
        if self.B0 is not None:
            d["B0"] = self.B0
        return d

    def header_json(self):
        return json.dumps(self.header(), indent=2)


def pseudo_fields(strain, dpd, flavor="schrodinger", general=False, mu_tol=MU_TOL):
    """Map ``U`` to ``(A1, A2, W_eff)`` and the flavor's velocity.

    The off-diagonal strain coupling ``conj(mu) (t3 + i t1)`` equals
    ``-nu_F (A1 - i A2)``, which for real ``mu`` gives
    ``A1 = -(mu/nu_F) t3`` and ``A2 = (mu/nu_F) t1``.  With ``general=True``
    any complex ``mu`` is accepted and the same identity fixes real fields.
    """
    if flavor not in ("wave", "schrodinger"):
        raise ConfigError(f"unknown flavor {flavor!r}", key="flavor")
    mu = complex(dpd.mu)
    if not general and abs(mu.imag) > mu_tol * max(1.0, abs(mu)):
        raise ComplexMu(f"mu = {mu} is not real; use the general coupling")
    t0, t1, t2, t3 = strain.traces()
    z = -np.conj(mu) * (t3 + 1j * t1) / dpd.nu_F
    A1, A2 = z.real, -z.imag
    w = dpd.xi * t0 + complex(dpd.xi_sharp) * t2
    if np.max(np.abs(w.imag), initial=0.0) > 1e-10 * (1 + np.max(np.abs(w), initial=0.0)):
        raise ValueError("scalar potential is not real: xi# must be imaginary")
    w = w.real
    if flavor == "wave":
        s = 2 * np.sqrt(dpd.E_D)
        v, W = dpd.nu_F / s, -w / s
    else:
        v, W = dpd.nu_F, w
    gfd = GaugeFieldData(strain.grid, A1, A2, W, float(v), flavor)
    gfd.B = magnetic_field(gfd)
    return gfd


def magnetic_field(gfd, method="fd4"):
    """``B = d1 A2 - d2 A1`` on the periodic grid (``fd4`` or ``spectral``)."""
    g = gfd.grid
    if method == "spectral":
        q1, q2 = g.wavenumbers()
        B = ifft2(1j * q1 * fft2(gfd.A2) - 1j * q2 * fft2(gfd.A1))
        return B.real
    if method != "fd4":
        raise ValueError(f"unknown curl method {method!r}")
    return fd4_derivative(gfd.A2, g.h1, 0) - fd4_derivative(gfd.A1, g.h2, 1)


def gauge_direction(dpd):
    """Displacement direction ``a`` with ``u = a g(Y1)`` giving ``A1 = 0, A2 = g'(Y1)``.

    Solving ``conj(mu)(t3 + i t1) = i nu_F g'`` for ``U = a g' e1^T`` gives
    ``a = nu_F (-Im mu, Re mu) / |mu|^2``; for real mu this is a pure shear.
    """
    mu = complex(dpd.mu)
    if mu == 0:
        raise ComplexMu("mu = 0: strain does not couple to the gauge field")
    return dpd.nu_F * np.array([-mu.imag, mu.real]) / abs(mu) ** 2


def _require_real(dpd, mu_tol, what):
    mu = complex(dpd.mu)
    if abs(mu.imag) > mu_tol * max(1.0, abs(mu)) or mu == 0:
        raise ComplexMu(f"{what} needs a real nonzero mu, got {mu} (pass general=True)")
    return mu.real


def erf_gauge_deformation(dpd, mu_tol=MU_TOL, general=False):
    """Deformation whose pseudo-field is ``A1 = 0, A2 = erf(Y1)``.

    For real mu this is the shear ``u = (0, u2(Y1))``, ``u2' = (nu_F/mu) erf``.
    ``general=True`` accepts complex mu; the displacement then also has a
    compressive part, which brings a scalar potential ``xi Tr U``.
    """
    if general:
        return Deformation("erf-gauge", {"amplitude": 1.0,
                                         "direction": gauge_direction(dpd).tolist()})
    mu = _require_real(dpd, mu_tol, "erf gauge")
    return Deformation("erf-gauge", {"amplitude": dpd.nu_F / mu})


def linear_gauge_deformation(dpd, B0, r_c=8.0, w_c=4.0, mu_tol=MU_TOL, general=False):
    """``u = (0, beta Y1^2)`` (windowed) with ``B0 = 2 mu beta / nu_F``."""
    ell = 1.0 / np.sqrt(abs(B0))
    if general:
        return Deformation("linear-gauge", {"beta": 0.5 * B0, "r_c": r_c * ell, "w_c": w_c * ell,
                                            "direction": gauge_direction(dpd).tolist()})
    mu = _require_real(dpd, mu_tol, "linear gauge")
    beta = B0 * dpd.nu_F / (2 * mu)
    return Deformation("linear-gauge", {"beta": beta, "r_c": r_c * ell, "w_c": w_c * ell})
