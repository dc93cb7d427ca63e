"""Superposed wave functions for two linearly coupled oscillators.

The Hamiltonian

    H = p_a^2/2m + p_b^2/2m + (m w^2/2)(x_a^2 + x_b^2) + (m k/2) x_a x_b

decouples in rotated, mass-scaled coordinates

    x_1 = sqrt(m/2) (x_a + x_b),      x_2 = sqrt(m/2) (x_a - x_b)

into two unit-mass oscillators with normal frequencies

    Omega_1 = sqrt(w^2 + k/2),        Omega_2 = sqrt(w^2 - k/2)

which requires 0 <= k < 2 w^2.  A state here is an equal-weight random-phase
superposition of M distinct eigenstate pairs of the normal modes:

    Psi(x1, x2, t) = sum_j  M^(-1/2) e^{2 pi i theta_j}
                     psi_{n1_j}(x1, t; Omega_1) psi_{n2_j}(x2, t; Omega_2)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .eigenbasis import log_norm
from .errors import DomainError, NumericRangeError

# Probability densities below this are treated as a node (division unsafe).
NODE_FLOOR = 1e-300


def build_frequencies(omega: float, k: float) -> tuple[float, float]:
    """Normal-mode frequencies (Omega_1, Omega_2) for base frequency omega and coupling k.

    The coupling domain is 0 <= k < 2 omega^2, strictly below the upper edge
    where the softer mode would lose confinement.
    """
    if not (math.isfinite(omega) and omega > 0.0):
        raise DomainError(f"base frequency must be finite and positive, got {omega!r}")
    if not math.isfinite(k) or k < 0.0 or k >= 2.0 * omega * omega:
        raise DomainError(f"coupling must satisfy 0 <= k < 2*omega^2 = {2.0 * omega * omega}, got {k!r}")
    return math.sqrt(omega * omega + 0.5 * k), math.sqrt(omega * omega - 0.5 * k)


def to_normal(x_a, x_b, mass: float = 1.0):
    """Map original coordinates (x_a, x_b) to normal coordinates (x_1, x_2)."""
    s = math.sqrt(0.5 * mass)
    return s * (np.asarray(x_a) + np.asarray(x_b)), s * (np.asarray(x_a) - np.asarray(x_b))


def from_normal(x_1, x_2, mass: float = 1.0):
    """Inverse of to_normal."""
    s = math.sqrt(0.5 / mass)
    return s * (np.asarray(x_1) + np.asarray(x_2)), s * (np.asarray(x_1) - np.asarray(x_2))


@dataclass(frozen=True)
class OscillatorModel:
    """Two coupled oscillators: mass, base frequency, bilinear coupling."""

    mass: float = 1.0
    omega: float = 1.0
    coupling: float = 0.0
    omega1: float = field(init=False)
    omega2: float = field(init=False)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mass) and self.mass > 0.0):
            raise DomainError(f"mass must be finite and positive, got {self.mass!r}")
        o1, o2 = build_frequencies(self.omega, self.coupling)
        object.__setattr__(self, "omega1", o1)
        object.__setattr__(self, "omega2", o2)


@dataclass(frozen=True)
class ModeSet:
    """Distinct (n1, n2) eigenstate pairs with their random phases in [0, 1)."""

    modes: tuple[tuple[int, int], ...]
    phases: tuple[float, ...]
    seed: int | None = None
    n_max: int | None = None

    def __post_init__(self) -> None:
        if len(self.modes) == 0:
            raise DomainError("a mode set needs at least one mode")
        if len(self.modes) != len(self.phases):
            raise DomainError("modes and phases must have equal length")
        if len(set(self.modes)) != len(self.modes):
            raise DomainError("mode pairs must be distinct")
        for n1, n2 in self.modes:
            if n1 < 0 or n2 < 0:
                raise DomainError(f"quantum numbers must be non-negative, got ({n1}, {n2})")
            if self.n_max is not None and (n1 > self.n_max or n2 > self.n_max):
                raise DomainError(f"mode ({n1}, {n2}) exceeds n_max={self.n_max}")
        for th in self.phases:
            if not (0.0 <= th < 1.0):
                raise DomainError(f"phases must lie in [0, 1), got {th!r}")

    @property
    def m_modes(self) -> int:
        return len(self.modes)

    def coefficients(self) -> np.ndarray:
        """Equal-weight coefficients c_j = M^(-1/2) exp(2 pi i theta_j); sum |c|^2 = 1."""
        th = np.asarray(self.phases, dtype=float)
        return np.exp(2j * math.pi * th) / math.sqrt(self.m_modes)


def sample_mode_set(m_modes: int, n_max: int, seed: int) -> ModeSet:
    """Draw M distinct mode pairs uniformly from {0..n_max}^2 plus uniform phases.

    Deterministic in seed.  Raises DomainError when M exceeds the (n_max+1)^2
    available pairs.
    """
    if m_modes < 1:
        raise DomainError(f"need at least one mode, got {m_modes}")
    if n_max < 0:
        raise DomainError(f"n_max must be non-negative, got {n_max}")
    side = n_max + 1
    if m_modes > side * side:
        raise DomainError(f"cannot draw {m_modes} distinct pairs from a {side}x{side} grid")
    rng = np.random.default_rng(seed)
    flat = rng.choice(side * side, size=m_modes, replace=False)
    modes = tuple((int(f) // side, int(f) % side) for f in flat)
    phases = tuple(float(p) for p in rng.random(m_modes))
    return ModeSet(modes=modes, phases=phases, seed=seed, n_max=n_max)


def mode_set_to_text(ms: ModeSet) -> str:
    """Canonical plain-text record of a ModeSet; floats round-trip exactly."""
    lines = ["modeset v1", f"M = {ms.m_modes}"]
    lines.append(f"n_max = {ms.n_max if ms.n_max is not None else 'none'}")
    lines.append(f"seed = {ms.seed if ms.seed is not None else 'none'}")
    for i, ((n1, n2), th) in enumerate(zip(ms.modes, ms.phases)):
        lines.append(f"mode {i} = {n1} {n2} {th!r}")
    return "\n".join(lines) + "\n"


def mode_set_from_text(text: str) -> ModeSet:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "modeset v1":
        raise DomainError("not a modeset record (missing 'modeset v1' header)")
    kv = {}
    modes, phases = [], []
    for ln in lines[1:]:
        key, _, value = ln.partition("=")
        key, value = key.strip(), value.strip()
        if key.startswith("mode "):
            n1, n2, th = value.split()
            modes.append((int(n1), int(n2)))
            phases.append(float(th))
        else:
            kv[key] = value
    m = int(kv["M"])
    if m != len(modes):
        raise DomainError(f"modeset record claims M={m} but lists {len(modes)} modes")
    n_max = None if kv["n_max"] == "none" else int(kv["n_max"])
    seed = None if kv["seed"] == "none" else int(kv["seed"])
    return ModeSet(modes=tuple(modes), phases=tuple(phases), seed=seed, n_max=n_max)


class WaveFunction:
    """A ModeSet bound to an OscillatorModel, with precomputed evaluation tables.

    Instances are immutable in spirit: the precomputed arrays must not be
    mutated.  Evaluation folds the per-mode normalization constants into the
    superposition coefficients once, and shares the Hermite and phase-ladder
    recurrences across all M terms.
    """

    def __init__(self, model: OscillatorModel, mode_set: ModeSet):
        self.model = model
        self.mode_set = mode_set
        n1 = np.array([m[0] for m in mode_set.modes], dtype=np.int64)
        n2 = np.array([m[1] for m in mode_set.modes], dtype=np.int64)
        self._n1 = n1
        self._n2 = n2
        self.max_n1 = int(n1.max())
        self.max_n2 = int(n2.max())
        self._sq1 = math.sqrt(model.omega1)
        self._sq2 = math.sqrt(model.omega2)
        lognorm = np.array(
            [log_norm(int(a), model.omega1) + log_norm(int(b), model.omega2) for a, b in mode_set.modes]
        )
        self._w = mode_set.coefficients() * np.exp(lognorm)
        self._dn1 = 2.0 * n1.astype(float)
        self._dn2 = 2.0 * n2.astype(float)

    # -- evaluation core -------------------------------------------------

    def _ladders(self, u, max_n):
        """Hermite values H_0..H_max_n at u (list of arrays, shared recurrence)."""
        out = [np.ones_like(u)]
        if max_n >= 1:
            out.append(2.0 * u)
        for k in range(1, max_n):
            out.append(2.0 * u * out[k] - 2.0 * k * out[k - 1])
        return out

    def _phases(self, t, omega, max_n):
        """exp(-i (n + 1/2) omega t) for n = 0..max_n."""
        half = np.exp(-0.5j * omega * np.asarray(t, dtype=float))
        step = half * half
        out = [half]
        for _ in range(max_n):
            out.append(out[-1] * step)
        return out

    def reduced(self, x1, x2, t, want_grad: bool):
        """Gaussian-factored evaluation: Psi = g * S with g = exp(-(u1^2+u2^2)/2).

        Returns (S, D1, D2, log_g) where D_r = (dPsi/dx_r) / g, or None for the
        gradients when want_grad is false.  Working with S and D keeps node
        detection and velocities well-conditioned far outside the bulk, where
        g underflows but the polynomial part does not.

        One accumulation path for every input shape: per-lane results must
        not depend on what else rides in the batch, and the per-mode order
        is fixed, so chunked and parallel callers get identical bits.
        """
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        tt = np.asarray(t, dtype=float)
        u1 = self._sq1 * x1
        u2 = self._sq2 * x2
        h1 = self._ladders(u1, self.max_n1)
        h2 = self._ladders(u2, self.max_n2)
        p1 = self._phases(tt, self.model.omega1, self.max_n1)
        p2 = self._phases(tt, self.model.omega2, self.max_n2)

        shape = np.broadcast_shapes(u1.shape, u2.shape, tt.shape)
        s_acc = np.zeros(shape, dtype=complex)
        t1_acc = np.zeros(shape, dtype=complex) if want_grad else None
        t2_acc = np.zeros(shape, dtype=complex) if want_grad else None
        # Overflow from far-out trial points is expected and handled by the
        # callers' finiteness checks; it must not warn here.
        with np.errstate(over="ignore", invalid="ignore"):
            for j in range(len(self._w)):
                a, b = int(self._n1[j]), int(self._n2[j])
                wpp = self._w[j] * (p1[a] * p2[b])
                hh = h1[a] * h2[b]
                s_acc += wpp * hh
                if want_grad:
                    if a > 0:
                        t1_acc += (self._dn1[j] * wpp) * (h1[a - 1] * h2[b])
                    if b > 0:
                        t2_acc += (self._dn2[j] * wpp) * (h1[a] * h2[b - 1])
            log_g = -0.5 * (u1 * u1 + u2 * u2)
            if not want_grad:
                return s_acc, None, None, log_g
            d1 = self._sq1 * (t1_acc - u1 * s_acc)
            d2 = self._sq2 * (t2_acc - u2 * s_acc)
        return s_acc, d1, d2, log_g


def psi(wf: WaveFunction, x1, x2, t):
    """Wave function value in normal coordinates."""
    scalar = np.ndim(x1) == 0 and np.ndim(x2) == 0
    s, _, _, log_g = wf.reduced(x1, x2, t, want_grad=False)
    value = np.exp(log_g) * s
    if not np.all(np.isfinite(value)):
        raise NumericRangeError("wave function evaluation left the floating range")
    return complex(value) if scalar else value


def grad_psi(wf: WaveFunction, x1, x2, t):
    """(dPsi/dx1, dPsi/dx2) in normal coordinates."""
    scalar = np.ndim(x1) == 0 and np.ndim(x2) == 0
    s, d1, d2, log_g = wf.reduced(x1, x2, t, want_grad=True)
    g = np.exp(log_g)
    g1 = g * d1
    g2 = g * d2
    if not (np.all(np.isfinite(g1)) and np.all(np.isfinite(g2))):
        raise NumericRangeError("wave-function gradient left the floating range")
    return (complex(g1), complex(g2)) if scalar else (g1, g2)


def density_original(wf: WaveFunction, x_a, x_b, t):
    """|Psi|^2 expressed over original coordinates.

    The (x_a, x_b) -> (x_1, x_2) map has Jacobian magnitude m, so the density
    that integrates to one over (x_a, x_b) is m |Psi(x_1, x_2, t)|^2.
    """
    scalar = np.ndim(x_a) == 0 and np.ndim(x_b) == 0
    x1, x2 = to_normal(x_a, x_b, wf.model.mass)
    s, _, _, log_g = wf.reduced(x1, x2, t, want_grad=False)
    g = np.exp(log_g)
    dens = wf.model.mass * (g * g) * (s.real * s.real + s.imag * s.imag)
    if not np.all(np.isfinite(dens)):
        raise NumericRangeError("density evaluation left the floating range")
    return float(dens) if scalar else dens
