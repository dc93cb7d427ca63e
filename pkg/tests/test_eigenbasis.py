"""Oscillator eigenstates against explicit-sum and quadrature references."""
import math

import numpy as np
import pytest

from pilotwave.eigenbasis import Eigenmode, eigenstate, eigenstate_dx, hermite, log_norm
from pilotwave.errors import DomainError, NumericRangeError

from ._oracles import eigenstate_ref, gauss_legendre_norm, grad_fd, hermite_sum

U_GRID = np.array([-3.7, -1.25, -0.3, 0.0, 0.41, 1.0, 2.9])


def test_hermite_matches_explicit_sum():
    for n in range(13):
        got = hermite(n, U_GRID)
        want = hermite_sum(n, U_GRID)
        scale = np.maximum(np.abs(want), 1.0)
        assert np.all(np.abs(got - want) <= 1e-11 * scale), f"degree {n}"


def test_hermite_frozen_value():
    # H_6(u) = 64 u^6 - 480 u^4 + 720 u^2 - 120 at u = 0.3, by hand.
    assert hermite(6, 0.3) == pytest.approx(-59.041344, rel=1e-13)
    assert hermite_sum(6, np.array(0.3)) == pytest.approx(-59.041344, rel=1e-13)


def test_hermite_low_degrees_exact():
    u = 0.77
    assert hermite(0, u) == 1.0
    assert hermite(1, u) == 2.0 * u
    assert hermite(2, u) == pytest.approx(4.0 * u * u - 2.0, rel=1e-15)


def test_hermite_rejects_bad_degree():
    for bad in (-1, 2.5, True, "3"):
        with pytest.raises(DomainError):
            hermite(bad, 0.0)


def test_hermite_overflow_is_loud():
    with pytest.raises(NumericRangeError):
        hermite(200, 50.0)


def test_eigenmode_validation():
    assert Eigenmode(3, 2.0).energy == pytest.approx(7.0)
    with pytest.raises(DomainError):
        Eigenmode(-1, 1.0)
    with pytest.raises(DomainError):
        Eigenmode(True, 1.0)
    with pytest.raises(DomainError):
        Eigenmode(0, 0.0)
    with pytest.raises(DomainError):
        Eigenmode(0, float("nan"))


@pytest.mark.parametrize("n,omega", [(0, 1.0), (1, 1.0), (4, 0.8), (6, 1.3), (9, 2.0)])
def test_eigenstate_matches_reference(n, omega):
    x = np.linspace(-3.0, 3.0, 41)
    for t in (0.0, 0.6, 4.1):
        got = eigenstate(n, omega, x, t)
        want = eigenstate_ref(n, omega, x, t)
        scale = np.maximum(np.abs(want), 1e-3)
        assert np.all(np.abs(got - want) <= 1e-11 * scale)


@pytest.mark.parametrize("n,omega", [(0, 1.0), (3, 0.9), (7, 1.6)])
def test_eigenstate_unit_norm_by_quadrature(n, omega):
    # Reference normalization first: the oracle itself must integrate to one.
    assert gauss_legendre_norm(n, omega) == pytest.approx(1.0, abs=1e-12)
    L = 14.0 / math.sqrt(omega)
    nodes, weights = np.polynomial.legendre.leggauss(400)
    vals = np.abs(eigenstate(n, omega, nodes * L, 0.0)) ** 2
    assert float(np.sum(weights * vals) * L) == pytest.approx(1.0, abs=1e-12)


def test_eigenstate_phase_advances_with_energy():
    x = np.linspace(-2.0, 2.0, 9)
    n, omega, t = 5, 1.1, 0.83
    rotated = eigenstate(n, omega, x, 0.0) * np.exp(-1j * (n + 0.5) * omega * t)
    assert np.allclose(eigenstate(n, omega, x, t), rotated, rtol=0, atol=1e-14)


@pytest.mark.parametrize("n,omega", [(0, 1.0), (1, 1.0), (5, 0.8), (8, 1.4)])
def test_eigenstate_dx_matches_finite_difference(n, omega):
    x = np.linspace(-2.5, 2.5, 21)
    t = 0.37

    def fn(x1, _unused, tt):
        return eigenstate_ref(n, omega, x1, tt)

    want, _ = grad_fd(fn, x, np.zeros_like(x), t, h=1e-5)
    got = eigenstate_dx(n, omega, x, t)
    scale = np.maximum(np.abs(want), 1e-2)
    assert np.all(np.abs(got - want) <= 2e-8 * scale)


def test_log_norm_against_factorials():
    for n in (0, 1, 4, 10):
        direct = math.log((1.3 / math.pi) ** 0.25 / math.sqrt(2.0 ** n * math.factorial(n)))
        assert log_norm(n, 1.3) == pytest.approx(direct, rel=1e-13)
