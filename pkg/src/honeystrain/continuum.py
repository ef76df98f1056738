"""Full strained continuum models on a periodic supercell and the envelope-error study.

Micro fields are stored as ``phi(y) = exp(i k_b . y) p(y)`` with ``p`` periodic
on a rectangular supercell made of ``(sqrt3, 0) x (0, 1)`` blocks (two
primitive cells each).  Choosing ``k_b = (0, K_y)`` makes every K-quasi-periodic
Bloch mode representable, and for strains and envelopes that depend on
``Y1`` only a single block row suffices.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import (GridMismatch, InstabilityError, KrylovConvergenceError,
                         SupportOverflow)
from .grid import PeriodicGrid, fft2, ifft2
from .lattice import SIGMA0, SIGMA1, SIGMA2, SIGMA3
from .strain import Deformation, StrainGrid, pauli_traces


# -- micro grid -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MicroGrid:
    lattice: object
    N1: int  # blocks along x
    N2: int  # blocks along y
    n1: int  # points per block along x
    n2: int  # points per block along y
    k_base: np.ndarray

    @property
    def block(self):
        s = self.lattice.scale
        return np.sqrt(3.0) * s, 1.0 * s

    @property
    def L1(self):
        return self.N1 * self.block[0]

    @property
    def L2(self):
        return self.N2 * self.block[1]

    @property
    def shape(self):
        return (self.N1 * self.n1, self.N2 * self.n2)

    @property
    def dA(self):
        return self.L1 * self.L2 / (self.shape[0] * self.shape[1])

    @property
    def x(self):
        return self.L1 * np.arange(self.shape[0]) / self.shape[0]

    @property
    def y(self):
        return self.L2 * np.arange(self.shape[1]) / self.shape[1]

    def wavenumbers(self):
        """Shifted angular wavenumbers ``k_b + q`` (broadcastable pair)."""
        n1, n2 = self.shape
        q1 = 2 * np.pi * np.fft.fftfreq(n1, d=self.L1 / n1)
        q2 = 2 * np.pi * np.fft.fftfreq(n2, d=self.L2 / n2)
        return q1[:, None] + self.k_base[0], q2[None, :] + self.k_base[1]

    def block_points(self):
        b1, b2 = self.block
        s1 = b1 * np.arange(self.n1) / self.n1
        s2 = b2 * np.arange(self.n2) / self.n2
        X, Y = np.meshgrid(s1, s2, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def tile(self, a):
        """Repeat a block array (n1, n2, ...) over the supercell."""
        reps = (self.N1, self.N2) + (1,) * (np.ndim(a) - 2)
        return np.tile(a, reps)

    def inner(self, f, g, weight=None):
        w = 1.0 if weight is None else weight
        return np.sum(np.conj(f) * g * w) * self.dA

    def norm(self, f, weight=None):
        return float(np.sqrt(np.real(self.inner(f, f, weight))))


def rect_supercell_grid(lattice, N1, N2=1, n1=17, n2=11, k_base=None):
    """Supercell grid; odd point counts avoid an unpaired Nyquist mode."""
    if k_base is None:
        k_base = np.array([0.0, lattice.K[1]])
    k_base = np.asarray(k_base, dtype=float)
    g = MicroGrid(lattice, int(N1), int(N2), int(n1), int(n2), k_base)
    # the corner must be a block-reciprocal translate of the base momentum
    d = lattice.K - k_base
    b1, b2 = g.block
    j = d * np.array([b1, b2]) / (2 * np.pi)
    if np.max(np.abs(j - np.round(j))) > 1e-9:
        raise GridMismatch("base momentum is not compatible with the rectangular blocks")
    return g


def sample_medium(medium, grid):
    """``A`` and ``V`` on the supercell grid (direct evaluation on one block, tiled)."""
    A, V = medium.evaluate(grid.block_points())
    return grid.tile(A.real if np.all(np.abs(A.imag) < 1e-14) else A), grid.tile(V.real)


def block_indices(grid, q):
    """Integer block-reciprocal coordinates of momenta ``q - k_b`` (shape (..., 2))."""
    b1, b2 = grid.block
    c = (np.asarray(q) - grid.k_base) * np.array([b1, b2]) / (2 * np.pi)
    ci = np.rint(c).astype(int)
    if np.max(np.abs(c - ci)) > 1e-8:
        raise GridMismatch("field momentum is not representable on the block grid")
    return ci


def sample_field(f, grid):
    """Periodic part ``p`` of a quasi-periodic field, projected onto the grid modes."""
    q = f.momenta().reshape(-1, 2)
    idx = block_indices(grid, q)
    coef = f.coef.reshape(-1)
    h1, h2 = (grid.n1 - 1) // 2, (grid.n2 - 1) // 2
    keep = (np.abs(idx[:, 0]) <= h1) & (np.abs(idx[:, 1]) <= h2)
    box = np.zeros((grid.n1, grid.n2), dtype=complex)
    np.add.at(box, (idx[keep, 0] % grid.n1, idx[keep, 1] % grid.n2), coef[keep])
    block = np.fft.ifft2(box) * grid.n1 * grid.n2
    return grid.tile(block)


# -- strained operator ------------------------------------------------------------


class StrainedOperator:
    """``L^eps f = -detJ div(C grad f) + V f`` with ``C = J A J^T / detJ``."""

    def __init__(self, medium, deformation, epsilon, grid, slow_origin=(0.0, 0.0)):
        self.medium = medium
        self.deformation = deformation
        self.epsilon = float(epsilon)
        self.grid = grid
        A, V = sample_medium(medium, grid)
        self.A = A
        self.V = V
        X, Y = np.meshgrid(grid.x, grid.y, indexing="ij")
        self.slow = (self.epsilon * X + slow_origin[0], self.epsilon * Y + slow_origin[1])
        if deformation is None or self.epsilon == 0.0:
            self.U = np.zeros(grid.shape + (2, 2))
        else:
            self.U = deformation.jacobian(*self.slow)
        Jinv = np.eye(2) + self.epsilon * self.U
        det_inv = np.linalg.det(Jinv)
        if np.min(det_inv) <= 0.05:
            raise ValueError("deformation is not invertible on the grid (det D T too small)")
        J = np.linalg.inv(Jinv)
        self.detJ = 1.0 / det_inv
        self.C = np.einsum("...ij,...jk,...lk->...il", J, A, J) / self.detJ[..., None, None]
        self.weight = 1.0 / self.detJ
        self.q1, self.q2 = grid.wavenumbers()

    def gradient(self, f):
        F = fft2(f)
        return ifft2(1j * self.q1 * F), ifft2(1j * self.q2 * F)

    def divergence(self, h1, h2):
        return ifft2(1j * self.q1 * fft2(h1) + 1j * self.q2 * fft2(h2))

    def apply(self, f):
        g1, g2 = self.gradient(f)
        C = self.C
        h1 = C[..., 0, 0] * g1 + C[..., 0, 1] * g2
        h2 = C[..., 1, 0] * g1 + C[..., 1, 1] * g2
        return -self.detJ * self.divergence(h1, h2) + self.V * f

    __call__ = apply

    def frakA(self, f):
        """Grid version of ``d_l(a_li d_j f) + d_j(a_il d_l f)``; shape (2, 2, ...)."""
        g = self.gradient(f)
        A = self.A
        q = (self.q1, self.q2)
        out = np.zeros((2, 2) + f.shape, dtype=complex)
        for i in range(2):
            flux = A[..., i, 0] * g[0] + A[..., i, 1] * g[1]
            for j in range(2):
                F = sum(1j * q[l] * fft2(A[..., l, i] * g[j]) for l in range(2))
                out[i, j] = ifft2(F + 1j * q[j] * fft2(flux))
        return out

    def trace_U_frakA(self, f):
        F = self.frakA(f)
        return np.einsum("...ij,ji...->...", self.U, F)


def apply_Leps(op, f):
    if np.shape(f) != op.grid.shape:
        raise GridMismatch(f"field of shape {np.shape(f)} does not fit grid {op.grid.shape}")
    return op.apply(f)


def expansion_residual(op, f, op0=None):
    """``||L^eps f - L^0 f - eps Tr(U(eps .) frakA f)||_{L2}``."""
    if op0 is None:
        op0 = StrainedOperator(op.medium, None, 0.0, op.grid)
    r = op.apply(f) - op0.apply(f) - op.epsilon * op.trace_U_frakA(f)
    return op.grid.norm(r)


@dataclass
class ExpansionReport:
    epsilons: np.ndarray
    residuals: np.ndarray
    ratio_window: tuple = (3.6, 4.4)

    @property
    def ratios(self):
        r = self.residuals
        return (r[:-1] / r[1:]).tolist()

    @property
    def passed(self):
        if len(self.residuals) < 2:
            return None
        lo, hi = self.ratio_window
        return all(lo <= q <= hi for q in self.ratios)

    def rows(self):
        q = [float("nan")] + self.ratios
        return [(e, r, x) for e, r, x in zip(self.epsilons, self.residuals, q)]

    def to_dict(self):
        return {"epsilons": self.epsilons.tolist(), "residuals": self.residuals.tolist(),
                "ratios": self.ratios, "passed": self.passed,
                "ratio_window": list(self.ratio_window)}


def localized_test_field(grid, width=2.0):
    """Gaussian bump times a smooth oscillation, centered in the supercell."""
    X, Y = np.meshgrid(grid.x, grid.y, indexing="ij")
    c1, c2 = 0.5 * grid.L1, 0.5 * grid.L2
    g = np.exp(-((X - c1) ** 2 + (Y - c2) ** 2) / (2 * width ** 2))
    return g * (1 + 0.5 * np.cos(X - 0.3 * Y))


def expansion_study(medium, deformation, epsilons, blocks=(9, 15), points=(11, 7), width=2.0,
                    ratio_window=(3.6, 4.4)):
    """Expansion residuals on a localized field; the slow frame is pinned at its center."""
    grid = rect_supercell_grid(medium.lattice, blocks[0], blocks[1], points[0], points[1])
    f = localized_test_field(grid, width)
    c = (0.5 * grid.L1, 0.5 * grid.L2)
    op0 = StrainedOperator(medium, None, 0.0, grid)
    eps = np.array(sorted((float(e) for e in epsilons), reverse=True))
    res = []
    for e in eps:
        op = StrainedOperator(medium, deformation, e, grid, slow_origin=(-e * c[0], -e * c[1]))
        res.append(expansion_residual(op, f, op0))
    return ExpansionReport(eps, np.array(res), tuple(ratio_window))


# -- Schrodinger propagator ------------------------------------------------------


@dataclass
class MicroTrajectory:
    times: np.ndarray
    snapshots: list
    norms: np.ndarray
    weighted_norms: np.ndarray
    info: dict = field(default_factory=dict)


def _lanczos(op, v, m, weight, dA):
    """Weighted-inner-product Lanczos; returns (V, alpha, beta, breakdown)."""
    n = v.size
    V = np.empty((m + 1, n), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[0] = v.ravel()
    w_flat = weight.ravel()
    for j in range(m):
        w = op.apply(V[j].reshape(op.grid.shape)).ravel()
        a = np.real(np.vdot(V[j], w * w_flat)) * dA
        w = w - a * V[j]
        if j > 0:
            w = w - beta[j - 1] * V[j - 1]
        b = np.sqrt(np.real(np.vdot(w, w * w_flat)) * dA)
        alpha[j] = a
        beta[j] = b
        if b < 1e-14:
            return V[:j + 1], alpha[:j + 1], beta[:j + 1], True
        V[j + 1] = w / b
    return V, alpha, beta, False


def _krylov_step(op, psi, tau_max, m, tol, dA):
    weight = op.weight
    nrm = np.sqrt(np.real(np.sum(np.conj(psi) * psi * weight)) * dA)
    if nrm == 0:
        return psi, tau_max, 0.0
    V, alpha, beta, brk = _lanczos(op, psi / nrm, m, weight, dA)
    k = len(alpha)
    lam, Q = scipy.linalg.eigh_tridiagonal(alpha, beta[:k - 1])

    def coeffs(tau):
        return Q @ (np.exp(-1j * tau * lam) * Q[0].conj())

    if brk:
        tau = tau_max
        err = 0.0
    else:
        tau = tau_max
        while True:
            c = coeffs(tau)
            err = beta[k - 1] * abs(c[-1])
            if err <= tol or tau < 1e-12:
                break
            tau *= 0.8
        if err > tol:
            return None, tau, err
    c = coeffs(tau)
    out = nrm * (c @ V[:k]).reshape(psi.shape)
    return out, tau, err


def solve_schrodinger(op, phi0, T, snapshot_times=None, tol=1e-9, m=40, dt=None):
    """``i d/dt phi = L^eps phi`` by adaptive Lanczos exponentials.

    ``tol`` bounds the relative local error of each step (a posteriori
    Lanczos estimate); ``dt`` optionally caps the step.  Snapshots are taken exactly at ``snapshot_times``.
    """
    times = np.array([0.0, T]) if snapshot_times is None else np.asarray(snapshot_times, float)
    g = op.grid
    psi = np.asarray(phi0, dtype=complex).copy()
    snaps, norms, wnorms = [psi.copy()], [g.norm(psi)], [g.norm(psi, op.weight)]
    t = 0.0
    tau_guess = dt or 0.05
    steps = 0
    matvecs = 0
    for target in times[1:]:
        while target - t > 1e-12:
            tau_try = min(tau_guess * 1.25, target - t)
            if dt:
                tau_try = min(tau_try, dt)
            new, tau, err = _krylov_step(op, psi, tau_try, m, tol, g.dA)
            matvecs += m
            if new is None:
                raise KrylovConvergenceError(f"Krylov step {steps} failed (error {err:.2e})", step=steps)
            psi = new
            t += tau
            steps += 1
            tau_guess = tau
        snaps.append(psi.copy())
        norms.append(g.norm(psi))
        wnorms.append(g.norm(psi, op.weight))
    return MicroTrajectory(times, snaps, np.array(norms), np.array(wnorms),
                           {"steps": steps, "matvecs": matvecs})


# -- wave equation -----------------------------------------------------------------


def estimate_lambda_max(op, iters=60, seed=0):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(op.grid.shape) + 1j * rng.standard_normal(op.grid.shape)
    lam = 0.0
    for _ in range(iters):
        h = op.apply(f)
        lam = np.real(op.grid.inner(f, h, op.weight)) / np.real(op.grid.inner(f, f, op.weight))
        f = h / op.grid.norm(h)
    return float(lam)


def wave_energy(op, phi, phit):
    g = op.grid
    return float(np.real(g.inner(phit, phit, op.weight) + g.inner(phi, op.apply(phi), op.weight)))


def solve_wave(op, phi0, phit0, dt, T, snapshot_times=None, lambda_max=None, growth_limit=0.1):
    """``phi_tt + L^eps phi = 0`` by Stormer-Verlet (leapfrog)."""
    lam = lambda_max if lambda_max is not None else 1.1 * estimate_lambda_max(op)
    if dt >= 2.0 / np.sqrt(lam):
        raise InstabilityError(f"dt={dt} violates the leapfrog bound 2/sqrt({lam:.1f})",
                               diagnostics={"lambda_max": lam})
    times = np.array([0.0, T]) if snapshot_times is None else np.asarray(snapshot_times, float)
    steps_at = np.rint(times / dt).astype(int)
    if np.max(np.abs(steps_at * dt - times)) > 1e-9 * max(1.0, T):
        raise ValueError("snapshot times must be multiples of dt")
    g = op.grid
    prev = np.asarray(phi0, dtype=complex)
    Lp = op.apply(prev)
    cur = prev + dt * phit0 - 0.5 * dt * dt * Lp
    E0 = wave_energy(op, phi0, phit0)
    snaps, energies = [prev.copy()], [E0]
    nmax = steps_at[-1]
    want = set(steps_at[1:].tolist())
    # cur holds step n, prev step n-1
    n = 1
    if 1 in want:
        snaps.append(cur.copy())
        energies.append(E0)
    while n < nmax:
        nxt = 2 * cur - prev - dt * dt * op.apply(cur)
        n += 1
        if n in want:
            vel = (nxt - prev) / (2 * dt)
            E = wave_energy(op, cur, vel)
            energies.append(E)
            if abs(E - E0) > growth_limit * abs(E0):
                raise InstabilityError(f"energy drifted by {abs(E - E0) / abs(E0):.1%} at step {n}",
                                       diagnostics={"step": n, "energy": E, "energy0": E0})
            snaps.append(nxt.copy())
        prev, cur = cur, nxt
    return MicroTrajectory(times, snaps, np.array([g.norm(s) for s in snaps]),
                           np.array([g.norm(s, op.weight) for s in snaps]),
                           {"energies": energies, "lambda_max": lam, "dt": dt})


# -- envelopes -----------------------------------------------------------------------


def slow_grid(S1, NE):
    """One-dimensional slow torus ``[0, S1)`` (a single point in Y2)."""
    return PeriodicGrid(float(S1), 1.0, int(NE), 1, origin1=0.0, origin2=0.0)


def envelope_to_micro(beta, grid):
    """Zero-padded Fourier transfer of a slow profile ``beta(Y1)`` to ``beta(eps x)``.

    The slow torus must be ``eps * L1`` long so slow mode ``j`` is micro mode ``j``.
    """
    beta = np.asarray(beta)
    NE = beta.shape[-1]
    n = grid.shape[0]
    B = np.fft.fft(beta, axis=-1) / NE
    j = np.fft.fftfreq(NE, d=1.0 / NE).astype(int)
    if NE % 2 == 0:
        B[..., NE // 2] = 0.0
    full = np.zeros(beta.shape[:-1] + (n,), dtype=complex)
    full[..., j % n] = B
    return np.fft.ifft(full, axis=-1) * n


def build_envelope_initial(p1, p2, beta0, epsilon, grid, flavor="schrodinger", E_D=None,
                           tail_tol=1e-8):
    """``eps [beta10(eps y) Phi1 + beta20(eps y) Phi2]`` (and ``i sqrt(E_D)`` times it)."""
    beta0 = np.asarray(beta0)
    amp = np.max(np.abs(beta0))
    if amp > 0:
        edge = max(np.max(np.abs(beta0[:, [0, -1]])), 0.0)
        if edge > tail_tol * amp:
            raise SupportOverflow(f"envelope tail {edge / amp:.1e} at the torus edge")
    b = envelope_to_micro(beta0, grid)
    phi0 = epsilon * (b[0][:, None] * p1 + b[1][:, None] * p2)
    if flavor == "wave":
        return phi0, 1j * np.sqrt(E_D) * phi0
    return phi0, None


def envelope_spec(dpd, strain, flavor="schrodinger"):
    """Standard-form Dirac operator for the envelope and the conjugating Pauli matrix.

    Schrodinger: ``i dT beta = [nu_F (p1 s1 - p2 s2) + M_S] beta``; with
    ``beta = s1 gamma`` this is ``v p.sigma + s1 M_S s1``.  Wave:
    ``i dT alpha = -[...]/(2 sqrt E_D) alpha``; with ``alpha = s2 gamma`` it is
    ``v p.sigma - s2 M_S s2 / (2 sqrt E_D)`` and ``v = nu_F/(2 sqrt E_D)``.
    ``M_S = [[w, mu(t3 - i t1)], [conj(mu)(t3 + i t1), w]]``,
    ``w = xi t0 + xi# t2``.
    """
    from .dynamics import DiracOperatorSpec

    t0, t1, t2, t3 = strain.traces()
    mu = complex(dpd.mu)
    w = (dpd.xi * t0 + complex(dpd.xi_sharp) * t2)
    w = w.real
    MS = np.zeros(strain.grid.shape + (2, 2), dtype=complex)
    MS[..., 0, 0] = w
    MS[..., 1, 1] = w
    MS[..., 0, 1] = mu * (t3 - 1j * t1)
    MS[..., 1, 0] = np.conj(mu) * (t3 + 1j * t1)
    if flavor == "schrodinger":
        P = SIGMA1
        M = P @ MS @ P
        v = dpd.nu_F
    elif flavor == "wave":
        P = SIGMA2
        s = 2 * np.sqrt(dpd.E_D)
        M = -(P @ MS @ P) / s
        v = dpd.nu_F / s
    else:
        raise ValueError(f"unknown flavor {flavor!r}")
    return DiracOperatorSpec(strain.grid, float(v), None, None, M), P


def solve_effective_envelope(dpd, strain, beta0, T_slow, times, flavor="schrodinger", dT=None):
    """Envelope snapshots ``beta(Y, T)`` at the requested slow times; shape (n_t, 2, NE)."""
    from .dynamics import SpinorField, evolve

    spec, P = envelope_spec(dpd, strain, flavor)
    g = strain.grid
    gamma0 = np.einsum("ij,j...->i...", P, np.asarray(beta0, dtype=complex)[:, :, None])
    times = np.asarray(times, float)
    if dT is None:
        dT = min(1e-3, times[1] - times[0] if len(times) > 1 else T_slow)
    stride = int(round((times[1] - times[0]) / dT)) if len(times) > 1 else None
    traj = evolve(spec, SpinorField(g, gamma0), dT, T_slow, stride=stride)
    if len(traj.times) != len(times) or np.max(np.abs(traj.times - times)) > 1e-9:
        raise ValueError("envelope snapshot times must be uniformly spaced multiples of dT")
    return np.array([np.einsum("ij,j...->i...", P, s)[:, :, 0] for s in traj.snapshots])


def effective_field(p1, p2, beta, epsilon, t, E_D, grid, flavor):
    b = envelope_to_micro(beta, grid)
    carrier = np.exp(1j * np.sqrt(E_D) * t) if flavor == "wave" else np.exp(-1j * E_D * t)
    return epsilon * carrier * (b[0][:, None] * p1 + b[1][:, None] * p2)


def envelope_error(traj, p1, p2, betas, epsilon, E_D, grid, flavor, virtual_height=None):
    """``||phi - phi_eff||_{L2}`` at every snapshot.

    With ``virtual_height`` (a slow length ``S2``) the strip norm is rescaled
    to a 2D torus of that slow height on which the data are ``Y2``-independent.
    """
    scale = 1.0 if virtual_height is None else np.sqrt(virtual_height / (epsilon * grid.L2))
    errs = []
    for t, phi, beta in zip(traj.times, traj.snapshots, betas):
        eff = effective_field(p1, p2, beta, epsilon, t, E_D, grid, flavor)
        errs.append(grid.norm(phi - eff) * scale)
    return np.array(errs)


# -- full experiment -----------------------------------------------------------------


@dataclass
class EnvelopeRun:
    epsilon: float
    rho: float
    flavor: str
    times: np.ndarray
    errors: np.ndarray
    runtime: float
    info: dict = field(default_factory=dict)

    @property
    def sup_error(self):
        return float(np.max(self.errors))

    @property
    def normalized(self):
        return self.sup_error / self.epsilon

    def to_dict(self):
        return {"epsilon": self.epsilon, "rho": self.rho, "flavor": self.flavor,
                "times": self.times.tolist(), "errors": self.errors.tolist(),
                "sup_error": self.sup_error, "normalized": self.normalized,
                "runtime_s": self.runtime, "info": self.info}


@dataclass
class ValidationSetup:
    """Parameters of the envelope study (lengths in slow units unless noted)."""

    slow_length: float = 24.0
    envelope_width: float = 2.0
    envelope_points: int = 255
    strain_amplitude: float = 0.5  # peak |U|
    strain_direction: tuple = (0.0, 1.0)
    strain_modes: int = 1
    beta_weights: tuple = (1.0, 0.5j)
    beta_offset: float = 1.0
    n1: int = 17
    n2: int = 11
    snapshots: int = 9
    tol: float = 1e-9
    krylov_dim: int = 40
    wave_dt: float = 0.004
    virtual_height: float = 24.0
    strained: bool = True


def reference_deformation(setup, S1):
    q = 2 * np.pi * setup.strain_modes / S1
    return Deformation("sinusoidal", {"amplitude": setup.strain_amplitude / q,
                                      "direction": list(setup.strain_direction),
                                      "wavevector": [q, 0.0], "phase": 0.0})


def initial_envelope(setup, Y1, S1):
    c = 0.5 * S1
    w = setup.envelope_width
    g1 = np.exp(-((Y1 - c) / w) ** 2)
    g2 = np.exp(-((Y1 - c - setup.beta_offset) / w) ** 2)
    return np.array([setup.beta_weights[0] * g1, setup.beta_weights[1] * g2], dtype=complex)


def run_envelope(dpd, medium, epsilon, rho=2.0, flavor="schrodinger", setup=None):
    """One full-vs-effective comparison on the strip supercell."""
    setup = setup or ValidationSetup()
    t_start = time.perf_counter()
    lat = medium.lattice
    b1 = np.sqrt(3.0) * lat.scale
    N1 = int(round(setup.slow_length / (epsilon * b1)))
    if N1 % 2 == 0:
        N1 += 1  # odd point count along x (n1 is odd)
    grid = rect_supercell_grid(lat, N1, 1, setup.n1, setup.n2)
    S1 = epsilon * grid.L1
    deformation = reference_deformation(setup, S1) if setup.strained else None
    op = StrainedOperator(medium, deformation, epsilon, grid)
    p1 = sample_field(dpd.Phi1, grid)
    p2 = sample_field(dpd.Phi2, grid)
    sg = slow_grid(S1, setup.envelope_points)
    beta0 = initial_envelope(setup, sg.Y1, S1)
    if deformation is None:
        U = np.zeros(sg.shape + (2, 2))
    else:
        U = deformation.jacobian(*sg.mesh())
    strain = StrainGrid(sg, U)
    T_slow = np.linspace(0.0, rho, setup.snapshots)
    times = T_slow / epsilon
    betas = solve_effective_envelope(dpd, strain, beta0, rho, T_slow, flavor)
    phi0, phit0 = build_envelope_initial(p1, p2, beta0, epsilon, grid, flavor, dpd.E_D)
    if flavor == "schrodinger":
        traj = solve_schrodinger(op, phi0, times[-1], times, tol=setup.tol, m=setup.krylov_dim)
    else:
        dt = setup.wave_dt
        steps = np.rint(times / dt)
        dt = times[-1] / steps[-1]
        traj = solve_wave(op, phi0, phit0, dt, times[-1], times)
    errs = envelope_error(traj, p1, p2, betas, epsilon, dpd.E_D, grid, flavor,
                          setup.virtual_height)
    info = {"N1": N1, "grid": list(grid.shape), "slow_length": S1,
            "flat_norm_drift": float(abs(traj.norms[-1] - traj.norms[0]) / traj.norms[0]),
            "weighted_norm_drift": float(abs(traj.weighted_norms[-1] - traj.weighted_norms[0])
                                         / traj.weighted_norms[0]),
            "strained": setup.strained}
    info.update({k: v for k, v in traj.info.items() if k != "energies"})
    if flavor == "wave":
        E = np.asarray(traj.info["energies"])
        info["energy_drift"] = float(np.max(np.abs(E - E[0])) / abs(E[0]))
    return EnvelopeRun(float(epsilon), float(rho), flavor, times, errs,
                       time.perf_counter() - t_start, info)


@dataclass
class ConvergenceReport:
    runs: list
    ratio_window: tuple = (1.5, 2.6)
    flavor: str = "schrodinger"

    @property
    def ratios(self):
        e = [r.sup_error for r in self.runs]
        return [e[i] / e[i + 1] for i in range(len(e) - 1)]

    @property
    def monotone(self):
        e = [r.sup_error for r in self.runs]
        return all(e[i] > e[i + 1] for i in range(len(e) - 1))

    @property
    def passed(self):
        if len(self.runs) < 2:
            return None
        lo, hi = self.ratio_window
        return all(lo <= q <= hi for q in self.ratios)

    def to_csv(self, path=None):
        lines = ["epsilon,sup_error,normalized,runtime_s"]
        for r in self.runs:
            lines.append(f"{r.epsilon!r},{r.sup_error!r},{r.normalized!r},{r.runtime!r}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    def to_dict(self):
        return {"flavor": self.flavor, "runs": [r.to_dict() for r in self.runs],
                "ratios": self.ratios, "monotone": self.monotone, "passed": self.passed,
                "ratio_window": list(self.ratio_window)}


def convergence_study(dpd, medium, epsilons, rho=2.0, flavor="schrodinger", setup=None,
                      ratio_window=(1.5, 2.6)):
    eps = sorted((float(e) for e in epsilons), reverse=True)
    runs = [run_envelope(dpd, medium, e, rho, flavor, setup) for e in eps]
    return ConvergenceReport(runs, tuple(ratio_window), flavor)
