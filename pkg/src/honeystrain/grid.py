"""Rectangular periodic grids with spectral and fourth-order finite-difference derivatives."""

from dataclasses import dataclass

import numpy as np
import scipy.fft

from ._validation import check_scalar
from .exceptions import GridMismatch

_WORKERS = None


def set_fft_workers(n):
    global _WORKERS
    _WORKERS = n


def fft2(a):
    return scipy.fft.fft2(a, axes=(-2, -1), workers=_WORKERS)


def ifft2(a):
    return scipy.fft.ifft2(a, axes=(-2, -1), workers=_WORKERS)


@dataclass(frozen=True)
class PeriodicGrid:
    """``N1 x N2`` points on ``[-L1/2, L1/2) x [-L2/2, L2/2)`` (or from ``origin``)."""

    L1: float
    L2: float
    N1: int
    N2: int
    origin1: float = None
    origin2: float = None

    def __post_init__(self):
        check_scalar(self.L1, "L1", min_val=0.0, include_min=False)
        check_scalar(self.L2, "L2", min_val=0.0, include_min=False)
        check_scalar(self.N1, "N1", target_type=(int, np.integer), min_val=1)
        check_scalar(self.N2, "N2", target_type=(int, np.integer), min_val=1)
        if self.origin1 is None:
            object.__setattr__(self, "origin1", -0.5 * self.L1)
        if self.origin2 is None:
            object.__setattr__(self, "origin2", -0.5 * self.L2)

    @property
    def shape(self):
        return (self.N1, self.N2)

    @property
    def h1(self):
        return self.L1 / self.N1

    @property
    def h2(self):
        return self.L2 / self.N2

    @property
    def dA(self):
        return self.h1 * self.h2

    @property
    def Y1(self):
        return self.origin1 + self.h1 * np.arange(self.N1)

    @property
    def Y2(self):
        return self.origin2 + self.h2 * np.arange(self.N2)

    def mesh(self):
        return np.meshgrid(self.Y1, self.Y2, indexing="ij")

    def wavenumbers(self, nyquist_zero=True):
        """Angular wavenumbers (2D broadcastable); the Nyquist mode is zeroed
        for odd derivatives so real fields stay real."""
        q1 = 2 * np.pi * np.fft.fftfreq(self.N1, d=self.h1)
        q2 = 2 * np.pi * np.fft.fftfreq(self.N2, d=self.h2)
        if nyquist_zero:
            if self.N1 % 2 == 0:
                q1[self.N1 // 2] = 0.0
            if self.N2 % 2 == 0:
                q2[self.N2 // 2] = 0.0
        return q1[:, None], q2[None, :]

    def full_wavenumbers(self):
        return self.wavenumbers(nyquist_zero=False)

    def inner(self, f, g):
        """Riemann (trapezoid on the torus) inner product, summed over leading axes."""
        return np.sum(np.conj(f) * g) * self.dA

    def norm(self, f):
        return float(np.sqrt(np.sum(np.abs(f) ** 2) * self.dA))

    def check(self, arr):
        if np.shape(arr)[-2:] != self.shape:
            raise GridMismatch(f"array of shape {np.shape(arr)} does not live on grid {self.shape}")

    def to_dict(self):
        return {"L1": self.L1, "L2": self.L2, "N1": int(self.N1), "N2": int(self.N2),
                "origin1": self.origin1, "origin2": self.origin2}


def spectral_gradient(grid, f):
    """``(d1 f, d2 f)`` by discrete Fourier differentiation."""
    q1, q2 = grid.wavenumbers()
    F = fft2(f)
    return ifft2(1j * q1 * F), ifft2(1j * q2 * F)


def fd4_derivative(f, h, axis):
    """Periodic fourth-order central difference along ``axis``."""
    return (-np.roll(f, -2, axis) + 8 * np.roll(f, -1, axis)
            - 8 * np.roll(f, 1, axis) + np.roll(f, 2, axis)) / (12 * h)
