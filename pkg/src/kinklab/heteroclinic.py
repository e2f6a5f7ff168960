"""The heteroclinic connection between the stable phases and derived profiles.

The increasing solution U of U'' - f(U) = 0 with U(0) = 0, U(+-inf) = +-1 is
the single building block of every multi-kink profile.  For the standard
quartic double well F(u) = (1 - u^2)^2 / 4 everything is closed form
(U = tanh(x / sqrt 2)); for custom symmetric double wells U is resolved by
shooting on the equivalent first-order problem U' = sqrt(2 F(U)).
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import InvalidArgumentError

SQRT2 = float(np.sqrt(2.0))

#: truncation half-width for whole-line quadratures; the integrands decay like
#: exp(-sqrt(2) x), so the tail beyond 40 is ~1e-24
TRUNCATION_HALFWIDTH = 40.0

#: shooting step for custom potentials
_SHOOT_STEP = 1e-4


@dataclass(frozen=True)
class Potential:
    """Symmetric double-well potential with minima at -1 and +1.

    ``f`` is the derivative of ``F``; ``lambda0`` is the constant in the
    one-kink spectral gap (3/2 for the quartic well, user supplied otherwise).
    """

    kind: str  # "quartic" | "custom"
    f: Callable[[np.ndarray], np.ndarray]
    f_prime: Callable[[np.ndarray], np.ndarray]
    F: Callable[[np.ndarray], np.ndarray]
    lambda0: float

    def __post_init__(self):
        if self.kind not in ("quartic", "custom"):
            raise InvalidArgumentError(f"unknown potential kind {self.kind!r}")
        if self.lambda0 <= 0:
            raise InvalidArgumentError("lambda0 must be positive")
        if self.kind == "custom":
            _validate_double_well(self)

    def __hash__(self):
        return hash((self.kind, id(self.f), id(self.F), self.lambda0))


def _validate_double_well(pot: Potential):
    """Spot-check the structural double-well requirements."""
    for u in (1.0, -1.0):
        if abs(pot.F(u)) > 1e-12 or abs(pot.f(u)) > 1e-12:
            raise InvalidArgumentError("F and f must vanish at u = +-1")
    if abs(pot.f(0.0)) > 1e-12:
        raise InvalidArgumentError("f must vanish at u = 0")
    if pot.f_prime(0.0) >= 0 or pot.f_prime(1.0) <= 0:
        raise InvalidArgumentError("need f'(0) < 0 and f'(+-1) > 0")
    us = np.linspace(-0.999, 0.999, 97)
    Fu = np.asarray([pot.F(u) for u in us])
    if np.any(Fu < 0):
        raise InvalidArgumentError("F must be nonnegative")
    if np.max(np.abs(Fu - Fu[::-1])) > 1e-10:
        raise InvalidArgumentError("F must be even")


def _quartic_f(u):
    return (u * u - 1.0) * u


def _quartic_f_prime(u):
    return 3.0 * (u * u) - 1.0


def _quartic_F(u):
    w = 1.0 - u * u
    return 0.25 * (w * w)


QUARTIC = Potential(
    kind="quartic",
    f=_quartic_f,
    f_prime=_quartic_f_prime,
    F=_quartic_F,
    lambda0=1.5,
)


# -- shooting solver for custom potentials ----------------------------------

class _ShotHeteroclinic:
    """Dense-output table of U on [0, 40], RK4 on U' = sqrt(2 F(U))."""

    def __init__(self, pot: Potential):
        h = _SHOOT_STEP
        n = int(TRUNCATION_HALFWIDTH / h) + 1

        def rhs(u):
            return np.sqrt(max(2.0 * pot.F(min(u, 1.0)), 0.0))

        us = np.empty(n)
        us[0] = 0.0
        u = 0.0
        for i in range(1, n):
            k1 = rhs(u)
            k2 = rhs(u + 0.5 * h * k1)
            k3 = rhs(u + 0.5 * h * k2)
            k4 = rhs(u + h * k3)
            u = min(u + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4), 1.0)
            us[i] = u
        self.xs = np.linspace(0.0, TRUNCATION_HALFWIDTH, n)
        self.us = us

    def __call__(self, x):
        ax = np.abs(x)
        vals = np.interp(ax, self.xs, self.us, right=1.0)
        return np.sign(x) * vals


_shot_cache: dict[int, _ShotHeteroclinic] = {}
_shot_lock = threading.Lock()


def _shot(pot: Potential) -> _ShotHeteroclinic:
    key = id(pot)
    table = _shot_cache.get(key)
    if table is None:
        with _shot_lock:
            table = _shot_cache.get(key)
            if table is None:
                table = _ShotHeteroclinic(pot)
                _shot_cache[key] = table
    return table


# -- public operations -------------------------------------------------------

def u_het(x, potential: Potential = QUARTIC):
    """The heteroclinic U(x); strictly increasing, odd, U(+-inf) = +-1."""
    x = np.asarray(x, dtype=float)
    if potential.kind == "quartic":
        out = np.tanh(x / SQRT2)
    else:
        out = _shot(potential)(x)
    return out if out.ndim else float(out)


def u_het_deriv(x, order: int, potential: Potential = QUARTIC):
    """Derivatives of U through order 3, expressed through U itself.

    U' = sqrt(2 F(U)), U'' = f(U), U''' = f'(U) U'; the first derivative is
    strictly positive and everything decays exponentially.
    """
    if order not in (1, 2, 3):
        raise InvalidArgumentError(f"order must be 1, 2 or 3, got {order}")
    x = np.asarray(x, dtype=float)
    if potential.kind == "quartic":
        # every derivative is polynomial in t = tanh(x/sqrt2): U' = (1-t^2)/sqrt2
        t = np.tanh(x / SQRT2)
        sech2 = 1.0 - t * t
        if order == 1:
            out = sech2 / SQRT2
        elif order == 2:
            out = _quartic_f(t)
        else:
            out = _quartic_f_prime(t) * sech2 / SQRT2
    else:
        u = np.asarray(u_het(x, potential))
        up = np.sqrt(np.maximum(2.0 * potential.F(u), 0.0))
        if order == 1:
            out = up
        elif order == 2:
            out = np.asarray(potential.f(u))
        else:
            out = np.asarray(potential.f_prime(u)) * up
    return out if out.ndim else float(out)


def rescaled_profile(x, xi: float, sign: int, eps: float,
                     potential: Potential = QUARTIC):
    """Translated, eps-rescaled kink: sign * U((x - xi) / eps).

    Solves eps^2 U_xx - f(U) = 0, centered at xi, running from -sign to +sign.
    """
    if eps <= 0:
        raise InvalidArgumentError("eps must be positive")
    if sign not in (1, -1):
        raise InvalidArgumentError("sign must be +1 or -1")
    x = np.asarray(x, dtype=float)
    return sign * u_het((x - xi) / eps, potential)


_chi_cache: dict[int, float] = {}
_chi_lock = threading.Lock()


def chi_constant(potential: Potential = QUARTIC) -> float:
    """The kink energy constant: the whole-line integral of U'(y)^2.

    Computed once per potential by adaptive quadrature on a truncated domain
    (tail below 1e-24) and cached; 2*sqrt(2)/3 for the quartic well.
    """
    key = id(potential)
    val = _chi_cache.get(key)
    if val is None:
        with _chi_lock:
            val = _chi_cache.get(key)
            if val is None:
                integrand = lambda y: u_het_deriv(y, 1, potential) ** 2
                val, _ = quad(integrand, -TRUNCATION_HALFWIDTH,
                              TRUNCATION_HALFWIDTH,
                              epsabs=1e-14, epsrel=1e-13, limit=200)
                _chi_cache[key] = val
    return val
