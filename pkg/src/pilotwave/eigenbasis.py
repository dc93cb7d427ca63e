"""Energy eigenstates of a single 1D harmonic oscillator.

Everything here is expressed in units with hbar = 1 and unit mass; the mode
frequency Omega carries the only scale.  The time-dependent eigenstate is

    psi_n(x, t) = (Omega/pi)^(1/4) (2^n n!)^(-1/2)
                  H_n(sqrt(Omega) x) exp(-Omega x^2 / 2) exp(-i (n + 1/2) Omega t)

with H_n the physicists' Hermite polynomial.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericRangeError


@dataclass(frozen=True)
class Eigenmode:
    """Quantum number and frequency of one oscillator eigenstate."""

    n: int
    omega: float

    def __post_init__(self) -> None:
        if not isinstance(self.n, (int, np.integer)) or isinstance(self.n, bool):
            raise DomainError(f"quantum number must be an integer, got {self.n!r}")
        if self.n < 0:
            raise DomainError(f"quantum number must be non-negative, got {self.n}")
        if not (math.isfinite(self.omega) and self.omega > 0.0):
            raise DomainError(f"mode frequency must be finite and positive, got {self.omega!r}")

    @property
    def energy(self) -> float:
        return (self.n + 0.5) * self.omega


def _check_degree(n) -> int:
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 0:
        raise DomainError(f"Hermite degree must be a non-negative integer, got {n!r}")
    return int(n)


def _hermite_pair(n: int, u):
    """Return (H_{n-1}(u), H_n(u)) by upward recurrence; H_{-1} := 0.

    Overflow is tolerated here and surfaced by the callers' finiteness
    checks, so the transient inf/nan arithmetic must not warn.
    """
    u = np.asarray(u, dtype=float)
    prev = np.zeros_like(u)          # H_{-1}
    cur = np.ones_like(u)            # H_0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            prev, cur = cur, 2.0 * u * cur - 2.0 * k * prev
    return prev, cur


def hermite(n: int, u):
    """Physicists' Hermite polynomial H_n(u).

    Evaluated by the upward recurrence H_{k+1} = 2u H_k - 2k H_{k-1}, which is
    stable for the degrees used here (n up to ~50).  Overflow for extreme n*u
    surfaces as NumericRangeError, never as a silent inf.
    """
    n = _check_degree(n)
    scalar = np.isscalar(u) or np.ndim(u) == 0
    _, value = _hermite_pair(n, u)
    if not np.all(np.isfinite(value)):
        raise NumericRangeError(f"Hermite value overflowed for n={n}")
    return float(value) if scalar else value


def log_norm(n: int, omega: float) -> float:
    """log of the eigenstate normalization (Omega/pi)^(1/4) (2^n n!)^(-1/2).

    Computed through lgamma so that degrees up to ~50 stay well inside the
    floating range before the Gaussian factor is applied.
    """
    return 0.25 * math.log(omega / math.pi) - 0.5 * (n * math.log(2.0) + math.lgamma(n + 1.0))


def eigenstate(n: int, omega: float, x, t: float):
    """Time-dependent oscillator eigenstate psi_n(x, t) for frequency omega.

    Parameters
    ----------
    n, omega : quantum number and mode frequency (validated as in Eigenmode).
    x : position, scalar or array.
    t : time, scalar.

    Returns a complex scalar or array.  The modulus is t-independent; the
    phase advances as exp(-i (n + 1/2) omega t).
    """
    mode = Eigenmode(n, float(omega))
    scalar = np.isscalar(x) or np.ndim(x) == 0
    u = math.sqrt(mode.omega) * np.asarray(x, dtype=float)
    _, h = _hermite_pair(mode.n, u)
    envelope = math.exp(log_norm(mode.n, mode.omega)) * h * np.exp(-0.5 * u * u)
    value = envelope * np.exp(-1j * mode.energy * t)
    if not np.all(np.isfinite(value)):
        raise NumericRangeError(f"eigenstate overflowed for n={n}, omega={omega}")
    return complex(value) if scalar else value


def eigenstate_dx(n: int, omega: float, x, t: float):
    """Spatial derivative of eigenstate(n, omega, x, t).

    Uses H_n'(u) = 2n H_{n-1}(u), assembled from H_{n-1} and H_n directly so
    the Gaussian tail does not amplify cancellation:

        d/dx [H_n(u) e^{-u^2/2}] = sqrt(Omega) (2n H_{n-1}(u) - u H_n(u)) e^{-u^2/2}
    """
    mode = Eigenmode(n, float(omega))
    scalar = np.isscalar(x) or np.ndim(x) == 0
    sq = math.sqrt(mode.omega)
    u = sq * np.asarray(x, dtype=float)
    h_prev, h = _hermite_pair(mode.n, u)
    bracket = 2.0 * mode.n * h_prev - u * h
    envelope = math.exp(log_norm(mode.n, mode.omega)) * sq * bracket * np.exp(-0.5 * u * u)
    value = envelope * np.exp(-1j * mode.energy * t)
    if not np.all(np.isfinite(value)):
        raise NumericRangeError(f"eigenstate derivative overflowed for n={n}, omega={omega}")
    return complex(value) if scalar else value
