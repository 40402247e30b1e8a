"""Periodic multi-well potentials and the exact optimal transition profile.

Wells sit at the integers and transitions run 0 -> 1.  The calibrated
default is the cosine family W(z) = amplitude * (1 - cos(2 pi z)) with
amplitude = sigma / (4 pi^2), for which

    phi(x) = 1/2 + arctan(x)/pi

solves A phi = W'(phi) exactly:  A phi(x) = -(sigma/pi) * x/(1+x^2) and
W'(phi(x)) = -4 pi amplitude * x/(1+x^2).  In particular W''(0) = sigma.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import CalibrationError
from .operators import DEFAULT_SIGMA, Normalization


@dataclass(frozen=True)
class Potential:
    """1-periodic multi-well potential with W(0) = 0 and W''(0) > 0.

    ``beta`` is a threshold in (0, 1/8) below which -W'(1-t) >= W''(1) t / 2
    and W' is monotone on [1-beta, 1]; the sub-/super-solution constructions
    switch regimes at u = beta and u = 1 - beta.
    """

    w: Callable = field(repr=False)
    dw: Callable = field(repr=False)
    d2w: Callable = field(repr=False)
    amplitude: float = 1.0
    beta: float = 0.1

    def __post_init__(self):
        if not 0 < self.beta < 0.125:
            raise ValueError("beta must lie in (0, 1/8)")
        self.validate()

    def validate(self, n_sample: int = 257) -> None:
        z = np.linspace(-1.5, 1.5, n_sample)
        if abs(self.w(0.0)) > 1e-12:
            raise CalibrationError("W(0) != 0")
        if np.max(np.abs(self.w(z + 1.0) - self.w(z))) > 1e-10 * max(1.0, self.amplitude):
            raise CalibrationError("W is not 1-periodic on the sample grid")
        dist2 = np.minimum(np.abs(z - np.round(z)), 0.5) ** 2
        interior = dist2 > 1e-4
        ratio = self.w(z[interior]) / dist2[interior]
        if np.min(ratio) <= 0:
            raise CalibrationError("W does not dominate c*dist^2(z, Z)")
        if self.d2w(0.0) <= 0:
            raise CalibrationError("W''(0) must be positive")
        t = np.linspace(1e-6, self.beta, 64)
        if np.any(-self.dw(1.0 - t) < 0.5 * self.d2w(1.0) * t - 1e-12):
            raise CalibrationError("beta too large: -W'(1-t) >= W''(1) t/2 fails on [0, beta]")
        zz = np.linspace(1.0 - self.beta, 1.0, 64)
        if np.any(np.diff(self.dw(zz)) < -1e-12):
            raise CalibrationError("W' not monotone on [1-beta, 1]")

    @property
    def curvature_at_wells(self) -> float:
        return float(self.d2w(0.0))


def cosine_potential(amplitude: float, beta: float = 0.1) -> Potential:
    a = float(amplitude)
    return Potential(
        w=lambda z: a * (1.0 - np.cos(2 * np.pi * np.asarray(z, dtype=float))),
        dw=lambda z: 2 * np.pi * a * np.sin(2 * np.pi * np.asarray(z, dtype=float)),
        d2w=lambda z: 4 * np.pi ** 2 * a * np.cos(2 * np.pi * np.asarray(z, dtype=float)),
        amplitude=a,
        beta=beta,
    )


# ---------------------------------------------------------------------------
# optimal transition profile (analytic)
# ---------------------------------------------------------------------------

def profile(x):
    """Monotone 0 -> 1 standing transition, phi(x) = 1/2 + arctan(x)/pi."""
    return 0.5 + np.arctan(x) / np.pi


def profile_derivative(x):
    return 1.0 / (np.pi * (1.0 + np.asarray(x, dtype=float) ** 2))


def profile_second_derivative(x):
    x = np.asarray(x, dtype=float)
    return -2.0 * x / (np.pi * (1.0 + x ** 2) ** 2)


def profile_energy_density_integral() -> float:
    """int (phi')^2 dx = 1/(2 pi), the interface mobility normalizer."""
    return 1.0 / (2 * np.pi)


def half_laplacian_profile_quad(x: float, sigma: float = DEFAULT_SIGMA) -> float:
    """Independent quadrature oracle for (A phi)(x) on the whole line.

    Uses the symmetrized principal-value form
    A phi(x) = (sigma/pi) * int_0^inf [phi(x+s) + phi(x-s) - 2 phi(x)] / s^2 ds,
    which is absolutely convergent; the tail is handled by quad's infinite
    interval transform.
    """

    def integrand(s):
        return (profile(x + s) + profile(x - s) - 2 * profile(x)) / s ** 2

    val, _ = integrate.quad(integrand, 0.0, np.inf, limit=400)
    return (sigma / np.pi) * val


def calibrated_potential(normalization: Normalization | float | None = None,
                         n_check: int = 9, tol: float = 1e-6) -> Potential:
    """Cosine potential with amplitude sigma/(4 pi^2), so A phi = W'(phi).

    The calibration is verified against the quadrature oracle at sample
    points; a residual above ``tol`` aborts.
    """
    if normalization is None:
        sigma = DEFAULT_SIGMA
    elif isinstance(normalization, Normalization):
        sigma = normalization.sigma
    else:
        sigma = float(normalization)
    pot = cosine_potential(sigma / (4 * np.pi ** 2))
    xs = np.concatenate([[0.0], np.geomspace(0.1, 1e3, n_check - 1)])
    resid = max(abs(half_laplacian_profile_quad(float(x), sigma) - float(pot.dw(profile(x))))
                for x in xs)
    if resid > tol:
        raise CalibrationError(
            f"profile calibration residual {resid:.3e} exceeds {tol:.1e} for sigma={sigma}")
    return pot
