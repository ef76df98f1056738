"""Two-component Dirac dynamics with gauge and matrix potentials on a periodic grid.

The operator is ``D = v (p - A).sigma + M(Y)`` with ``p = -i grad`` and
``M`` a Hermitian 2x2 field (``W_eff sigma0`` in the simplest case).
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._validation import check_scalar
from .exceptions import BoxTooSmall, GridMismatch, MemoryGuardError
from .grid import PeriodicGrid, fft2, ifft2
from .strain import erf_integral, linear_gauge_potential, periodized_erf

FIBER_MAX = 8192
DEFAULT_NODES = 61


@dataclass
class DiracOperatorSpec:
    grid: PeriodicGrid
    v: float
    A1: np.ndarray = None
    A2: np.ndarray = None
    M: np.ndarray = None  # (N1, N2, 2, 2) Hermitian, or None

    def __post_init__(self):
        shape = self.grid.shape
        self.A1 = np.zeros(shape) if self.A1 is None else np.broadcast_to(
            np.asarray(self.A1, dtype=float), shape).copy()
        self.A2 = np.zeros(shape) if self.A2 is None else np.broadcast_to(
            np.asarray(self.A2, dtype=float), shape).copy()
        if self.M is not None:
            M = np.broadcast_to(np.asarray(self.M, dtype=complex), shape + (2, 2)).copy()
            herm = np.max(np.abs(M - np.conj(np.swapaxes(M, -1, -2))))
            if herm > 1e-12 * max(1.0, np.max(np.abs(M))):
                raise ValueError(f"potential matrix field is not Hermitian (defect {herm:.2e})")
            self.M = M

    @classmethod
    def with_scalar_potential(cls, grid, v, A1=None, A2=None, W=None):
        M = None
        if W is not None:
            W = np.broadcast_to(np.asarray(W, dtype=float), grid.shape)
            M = W[..., None, None] * np.eye(2)
        return cls(grid, v, A1, A2, M)

    def pauli_components(self):
        """Local part ``-v A.sigma + M`` as coefficients ``(a0, a1, a2, a3)``."""
        if self.M is None:
            m0 = m1 = m2 = m3 = 0.0
        else:
            M = self.M
            m0 = 0.5 * (M[..., 0, 0] + M[..., 1, 1]).real
            m3 = 0.5 * (M[..., 0, 0] - M[..., 1, 1]).real
            m1 = M[..., 1, 0].real
            m2 = M[..., 1, 0].imag
        return (np.broadcast_to(m0, self.grid.shape), m1 - self.v * self.A1,
                m2 - self.v * self.A2, np.broadcast_to(m3, self.grid.shape))


@dataclass
class SpinorField:
    grid: PeriodicGrid
    psi: np.ndarray  # (2, N1, N2) complex

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.psi.shape != (2,) + self.grid.shape:
            raise GridMismatch(f"spinor of shape {self.psi.shape} does not fit grid {self.grid.shape}")

    def norm(self):
        return self.grid.norm(self.psi)

    def inner(self, other):
        return self.grid.inner(self.psi, other.psi)

    def density(self):
        return np.sum(np.abs(self.psi) ** 2, axis=0)

    def copy(self):
        return SpinorField(self.grid, self.psi.copy())


def _check(spec, psi):
    if psi.grid.shape != spec.grid.shape or not (
            np.isclose(psi.grid.L1, spec.grid.L1) and np.isclose(psi.grid.L2, spec.grid.L2)):
        raise GridMismatch("spinor and operator live on different grids")


def _momenta(spec, u):
    q1, q2 = spec.grid.wavenumbers()
    F = fft2(u)
    return ifft2(q1 * F), ifft2(q2 * F)


def _apply(spec, psi):
    a, b = psi
    p1b, p2b = _momenta(spec, b)
    p1a, p2a = _momenta(spec, a)
    A1, A2 = spec.A1, spec.A2
    # (Pi1 - i Pi2) b and (Pi1 + i Pi2) a with Pi = p - A
    up = spec.v * ((p1b - A1 * b) - 1j * (p2b - A2 * b))
    lo = spec.v * ((p1a - A1 * a) + 1j * (p2a - A2 * a))
    out = np.stack([up, lo])
    if spec.M is not None:
        out += np.einsum("...ij,j...->i...", spec.M, psi)
    return out


def apply_dirac(spec, psi):
    """``D psi`` with spectral derivatives."""
    _check(spec, psi)
    return SpinorField(psi.grid, _apply(spec, psi.psi))


def apply_magnetic_laplacian(spec, psi):
    """``((p - A)^2) psi`` componentwise, spectral derivatives."""
    _check(spec, psi)
    out = []
    for u in psi.psi:
        p1, p2 = _momenta(spec, u)
        w1 = p1 - spec.A1 * u
        w2 = p2 - spec.A2 * u
        out.append(_momenta(spec, w1)[0] - spec.A1 * w1 + _momenta(spec, w2)[1] - spec.A2 * w2)
    return SpinorField(psi.grid, np.stack(out))


def dirac_energy(spec, psi):
    return float(np.real(psi.inner(apply_dirac(spec, psi))))


# -- time stepping ------------------------------------------------------------


def _su2_exp(tau, a0, a1, a2, a3):
    """Entries of ``exp(-i tau (a0 + a.sigma))`` as a 2x2 nested tuple of arrays."""
    r = np.sqrt(a1 ** 2 + a2 ** 2 + a3 ** 2)
    c = np.cos(tau * r)
    s = np.where(r > 0, np.sin(tau * r) / np.where(r > 0, r, 1.0), tau)
    ph = np.exp(-1j * tau * a0)
    e00 = ph * (c - 1j * s * a3)
    e11 = ph * (c + 1j * s * a3)
    e01 = ph * (-1j * s * (a1 - 1j * a2))
    e10 = ph * (-1j * s * (a1 + 1j * a2))
    # unit columns: keeps the factors unitary to the working precision
    d = np.sqrt(np.abs(e00) ** 2 + np.abs(e10) ** 2)
    return e00 / d, e01 / d, e10 / d, e11 / d


def _mul(E, psi):
    e00, e01, e10, e11 = E
    return np.stack([e00 * psi[0] + e01 * psi[1], e10 * psi[0] + e11 * psi[1]])


@dataclass
class Trajectory:
    grid: PeriodicGrid
    times: np.ndarray
    snapshots: list
    dt: float
    stride: int
    norms: np.ndarray = None
    energies: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def state(self, i):
        return SpinorField(self.grid, self.snapshots[i])


class _StrangStepper:
    """Split-step propagator.  With ``extended`` the factors, FFTs and the
    running state use long double: float64 round trips lose ~1e-16 of norm
    per step systematically, which adds up over long runs."""

    def __init__(self, spec, dt, extended=True):
        self.extended = extended
        real = np.longdouble if extended else float
        g = spec.grid
        q1, q2 = g.wavenumbers()
        q1, q2 = np.broadcast_arrays(q1.astype(real), q2.astype(real))
        v = real(spec.v)
        dt = real(dt)
        self.kin = _su2_exp(dt, real(0), v * q1, v * q2, real(0))
        a0, a1, a2, a3 = (np.asarray(a, dtype=real) for a in spec.pauli_components())
        self.half = _su2_exp(dt / 2, a0, a1, a2, a3)
        self.full = _su2_exp(dt, a0, a1, a2, a3)

    def kinetic(self, psi):
        return ifft2(_mul(self.kin, fft2(psi)))

    def run(self, psi, nsteps):
        """``nsteps`` Strang steps with merged interior half-steps."""
        if nsteps == 0:
            return psi
        psi = psi.astype(np.clongdouble if self.extended else complex)
        psi = _mul(self.half, psi)
        for i in range(nsteps):
            psi = self.kinetic(psi)
            psi = _mul(self.full if i < nsteps - 1 else self.half, psi)
        return psi.astype(complex)


def _rk4_run(spec, psi, dt, nsteps):
    def f(u):
        return -1j * _apply(spec, u)
    for _ in range(nsteps):
        k1 = f(psi)
        k2 = f(psi + 0.5 * dt * k1)
        k3 = f(psi + 0.5 * dt * k2)
        k4 = f(psi + dt * k3)
        psi = psi + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return psi


def evolve(spec, psi0, dt, T, stride=None, method="strang", track_energy=False, extended=True):
    """Integrate ``i d/dt psi = D psi`` to time ``T``; snapshots every ``stride`` steps.

    ``extended`` runs the FFTs of the split-step scheme in long double.
    """
    _check(spec, psi0)
    check_scalar(dt, "dt", min_val=0.0, include_min=False)
    check_scalar(T, "T", min_val=0.0)
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a multiple of dt={dt}")
    stride = nsteps if not stride else int(stride)
    stride = max(stride, 1)
    psi = psi0.psi.copy()
    stepper = _StrangStepper(spec, dt, extended) if method == "strang" else None
    if method not in ("strang", "rk4"):
        raise ValueError(f"unknown method {method!r}")
    times, snaps, norms, energies = [0.0], [psi.copy()], [psi0.grid.norm(psi)], []
    if track_energy:
        energies.append(dirac_energy(spec, SpinorField(spec.grid, psi)))
    done = 0
    while done < nsteps:
        n = min(stride, nsteps - done)
        psi = stepper.run(psi, n) if stepper else _rk4_run(spec, psi, dt, n)
        done += n
        times.append(done * dt)
        snaps.append(psi.copy())
        norms.append(psi0.grid.norm(psi))
        if track_energy:
            energies.append(dirac_energy(spec, SpinorField(spec.grid, psi)))
    return Trajectory(spec.grid, np.array(times), snaps, dt, stride, np.array(norms),
                      np.array(energies) if track_energy else None,
                      {"method": method, "extended": bool(extended)})


def fidelity(traj):
    """``|<psi(0), psi(t)>| / ||psi(0)||^2`` for every snapshot."""
    g = traj.grid
    p0 = traj.snapshots[0]
    n0 = np.real(g.inner(p0, p0))
    return np.array([abs(g.inner(p0, p)) / n0 for p in traj.snapshots])


# -- Landau levels ---------------------------------------------------------------


def hermite_functions(n, x):
    """Normalized Hermite functions ``h_0..h_n`` at ``x`` by the stable recurrence."""
    x = np.asarray(x, dtype=float)
    h = [np.pi ** -0.25 * np.exp(-0.5 * x ** 2)]
    if n >= 1:
        h.append(np.sqrt(2.0) * x * h[0])
    for m in range(2, n + 1):
        h.append(np.sqrt(2.0 / m) * x * h[m - 1] - np.sqrt((m - 1) / m) * h[m - 2])
    return h


def landau_energy(v, B0, n, sign=1):
    """``sign * v * sqrt(2 n |B0|)``; zero for ``n = 0``."""
    check_scalar(n, "n", target_type=(int, np.integer), min_val=0)
    if n == 0:
        return 0.0
    return float(np.sign(sign) * v * math.sqrt(2 * n * abs(B0)))


def scalar_landau_function(grid, B0, n, k, tail_tol=1e-12, check_periodic=True):
    """``psi_{n,k}(Y1, Y2)`` on the grid; raises :class:`BoxTooSmall` on a heavy tail."""
    if B0 == 0:
        raise ValueError("B0 must be nonzero")
    if check_periodic:
        m = k * grid.L2 / (2 * np.pi)
        if abs(m - round(m)) > 1e-9:
            raise ValueError(f"k={k} is not commensurate with L2={grid.L2}")
    Y1, Y2 = grid.Y1, grid.Y2
    xi = np.sqrt(abs(B0)) * (Y1 - k / B0)
    h = hermite_functions(n, xi)[n] * abs(B0) ** 0.25
    edge = max(abs(h[0]), abs(h[-1]))
    if edge > tail_tol * np.max(np.abs(h)):
        raise BoxTooSmall(f"Landau function n={n}, k={k} has tail {edge:.1e} at the box edge")
    return h[:, None] * np.exp(1j * k * Y2)[None, :]


def landau_mode(grid, B0, n, k=0.0, sign=1, tail_tol=1e-12, check_periodic=True):
    """Eigenspinor of the linear-gauge operator (``v`` drops out).

    ``B0 > 0``: ``(i psi_n, +-psi_{n-1})/sqrt 2`` and ``(psi_0, 0)`` for n = 0.
    ``B0 < 0``: ``(+-psi_{n-1}, i psi_n)/sqrt 2`` and ``(0, psi_0)``.
    """
    check_scalar(n, "n", target_type=(int, np.integer), min_val=0)
    f = lambda m: scalar_landau_function(grid, B0, m, k, tail_tol, check_periodic)  # noqa: E731
    zero = np.zeros(grid.shape, dtype=complex)
    if n == 0:
        psi = np.stack([f(0), zero]) if B0 > 0 else np.stack([zero, f(0)])
    else:
        s = 1.0 if sign >= 0 else -1.0
        if B0 > 0:
            psi = np.stack([1j * f(n), s * f(n - 1)]) / np.sqrt(2)
        else:
            psi = np.stack([s * f(n - 1), 1j * f(n)]) / np.sqrt(2)
    return SpinorField(grid, psi)


def linear_gauge_spec(grid, v=1.0, B0=1.0, r_c=8.0, w_c=4.0, W=None):
    """``A = (0, B0 Y1 chi(Y1))`` with the smooth window in magnetic lengths."""
    A2 = linear_gauge_potential(grid.Y1, B0, r_c, w_c)[:, None] * np.ones(grid.N2)
    return DiracOperatorSpec.with_scalar_potential(grid, v, None, A2, W)


def erf_gauge_spec(grid, v=1.0, W=None):
    """``A = (0, erf(Y1))`` periodized across the box edge."""
    A2 = periodized_erf(grid.Y1, grid.L1)[:, None] * np.ones(grid.N2)
    return DiracOperatorSpec.with_scalar_potential(grid, v, None, A2, W)


def erf_zero_mode(grid, k=0.0, check_periodic=True, tail_tol=1e-10):
    """Zero mode ``(e^{i k Y2} exp(k Y1 - int_0^Y1 erf), 0)``, normalized on the box."""
    if not abs(k) < 1:
        raise ValueError(f"erf zero mode needs |k| < 1, got {k}")
    if check_periodic:
        m = k * grid.L2 / (2 * np.pi)
        if abs(m - round(m)) > 1e-9:
            raise ValueError(f"k={k} is not commensurate with L2={grid.L2}")
    Y1 = grid.Y1
    expo = k * Y1 - erf_integral(Y1)
    prof = np.exp(expo - expo.max())
    if max(prof[0], prof[-1]) > tail_tol:
        raise BoxTooSmall(f"erf zero mode (k={k}) has tail {max(prof[0], prof[-1]):.1e} at the box edge")
    up = prof[:, None] * np.exp(1j * k * grid.Y2)[None, :]
    psi = np.stack([up, np.zeros_like(up)])
    out = SpinorField(grid, psi)
    out.psi /= out.norm()
    return out


def gaussian_nodes(k0, w, count=DEFAULT_NODES, clip=None):
    """Trapezoid nodes over ``[k0 - 4w, k0 + 4w]`` (optionally intersected with ``[-clip, clip]``)."""
    lo, hi = k0 - 4 * w, k0 + 4 * w
    if clip is not None:
        lo, hi = max(lo, -clip), min(hi, clip)
    if count == 1:
        return np.array([k0]), np.array([1.0])
    nodes = np.linspace(lo, hi, count)
    wts = np.full(count, nodes[1] - nodes[0])
    wts[[0, -1]] *= 0.5
    return nodes, wts


def wavepacket_superposition(mode, k0, w, nodes=None, weights=None, count=DEFAULT_NODES, clip=None):
    """Normalized ``sum_j wt_j G(k_j) mode(k_j)`` with ``G(k) = exp(-(k-k0)^2/w^2)``.

    ``mode`` maps a transverse momentum to a :class:`SpinorField`.  Returns
    the packet and the normalization constant ``c`` it was multiplied by.
    """
    if nodes is None:
        nodes, weights = gaussian_nodes(k0, w, count, clip)
    nodes = np.atleast_1d(nodes)
    weights = np.ones_like(nodes) if weights is None else np.asarray(weights)
    acc = None
    for k, wt in zip(nodes, weights):
        m = mode(float(k))
        term = wt * np.exp(-((k - k0) / w) ** 2) * m.psi
        acc = term if acc is None else acc + term
    g = m.grid
    out = SpinorField(g, acc)
    c = 1.0 / out.norm()
    out.psi *= c
    # nodes commensurate with L2 make the packet exactly periodic in Y2
    m = nodes * g.L2 / (2 * np.pi)
    edges = [np.max(np.abs(out.psi[:, [0, -1], :]))]
    if np.max(np.abs(m - np.round(m))) > 1e-9:
        edges.append(np.max(np.abs(out.psi[:, :, [0, -1]])))
    edge = max(edges)
    if edge > 1e-6 * np.max(np.abs(out.psi)):
        raise BoxTooSmall(f"wave packet reaches the box edge (relative {edge / np.max(np.abs(out.psi)):.1e})")
    return out, float(c)


# -- 1D fiber spectra -----------------------------------------------------------


def fourier_derivative_matrix(N, L):
    """Dense matrix of ``-i d/dY`` on N periodic points (Nyquist mode removed)."""
    q = 2 * np.pi * np.fft.fftfreq(N, d=L / N)
    if N % 2 == 0:
        q[N // 2] = 0.0
    F = np.fft.fft(np.eye(N), axis=0)
    return np.fft.ifft(q[:, None] * F, axis=0)


def fiber_matrix(spec, k):
    """Hermitian ``2N x 2N`` matrix of D on the transverse-momentum-``k`` fiber."""
    g = spec.grid
    for name, arr in (("A1", spec.A1), ("A2", spec.A2)):
        if np.max(np.abs(arr - arr[:, :1])) > 1e-12 * (1 + np.max(np.abs(arr))):
            raise ValueError(f"{name} depends on Y2; fibers need Y2-independent fields")
    N = g.N1
    P = fourier_derivative_matrix(N, g.L1)
    A1 = np.diag(spec.A1[:, 0])
    A2 = np.diag(spec.A2[:, 0])
    Pi1 = P - A1
    Pi2 = k * np.eye(N) - A2
    H = np.zeros((2 * N, 2 * N), dtype=complex)
    H[:N, N:] = spec.v * (Pi1 - 1j * Pi2)
    H[N:, :N] = spec.v * (Pi1 + 1j * Pi2)
    if spec.M is not None:
        M = spec.M[:, 0]
        for i in range(2):
            for j in range(2):
                H[i * N:(i + 1) * N, j * N:(j + 1) * N] += np.diag(M[:, i, j])
    return 0.5 * (H + H.conj().T)


@dataclass
class FiberSpectrum:
    energies: np.ndarray
    weights: np.ndarray  # probability inside the localization window
    all_energies: np.ndarray


def dirac_spectrum(spec, count=9, window=None, k=0.0, center=0.0, threshold=0.5,
                   max_size=FIBER_MAX):
    """Fiber eigenvalues nearest ``center`` among states localized in ``window``.

    ``window`` is a ``(lo, hi)`` interval in Y1; states with less than
    ``threshold`` of their weight there (free states living where the
    windowed gauge vanishes) are discarded.  ``window=None`` keeps all.
    """
    size = 2 * spec.grid.N1
    if size > max_size:
        raise MemoryGuardError(f"fiber matrix of size {size} exceeds the guard {max_size}")
    H = fiber_matrix(spec, k)
    w, V = scipy.linalg.eigh(H)
    N = spec.grid.N1
    if window is None:
        wt = np.ones_like(w)
    else:
        Y1 = spec.grid.Y1
        inside = (Y1 >= window[0]) & (Y1 <= window[1])
        P = np.abs(V[:N]) ** 2 + np.abs(V[N:]) ** 2
        wt = np.sum(P[inside], axis=0)
    keep = np.flatnonzero(wt >= threshold)
    order = keep[np.argsort(np.abs(w[keep] - center), kind="stable")][:count]
    order = order[np.argsort(w[order], kind="stable")]
    return FiberSpectrum(w[order], wt[order], w)
