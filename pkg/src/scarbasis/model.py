"""Quartic oscillator Hamiltonian and its mean-spectrum scales.

All quantities are dimensionless.  The classical Hamiltonian is

    H = (px**2 + py**2)/2 + x**2 y**2 / 2 + (x**4 + y**4)/400

and only its totally symmetric (A1) quantum states are considered.
The smooth level counting function and the time scales derived from it
use fitted coefficients for this particular potential.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Smooth A1 staircase N(E) = a E^{3/2}/hbar^2 + b E^{3/4}/hbar and its derivative.
COUNT_WEYL = 0.251
COUNT_EDGE = 0.605
DENSITY_WEYL = 0.376
DENSITY_EDGE = 0.454
# Mean Lyapunov exponent and Poincare section area, both at hbar-independent scale.
LYAPUNOV_COEF = 0.385
SECTION_AREA_COEF = 11.1


@dataclass(frozen=True)
class ModelParams:
    hbar: float = 1.0
    coupling: float = 0.5
    quartic: float = 1.0 / 400.0

    def __post_init__(self):
        if not self.hbar > 0:
            raise ValueError(f"hbar must be positive, got {self.hbar}")
        if self.coupling < 0 or self.quartic < 0:
            raise ValueError("potential coefficients must be non-negative")


@dataclass(frozen=True)
class SemiclassicalScales:
    energy: float
    density: float
    heisenberg: float
    lyapunov: float
    section_area: float
    ehrenfest: float

    @property
    def mean_spacing(self) -> float:
        return 1.0 / self.density

    @property
    def pad(self) -> float:
        """Enlarged-window pad: an energy interval holding 2 t_H/t_E levels."""
        return 2.0 * (self.heisenberg / self.ehrenfest) / self.density


DEFAULT_PARAMS = ModelParams()


def potential(x, y, params: ModelParams = DEFAULT_PARAMS):
    x2 = np.multiply(x, x)
    y2 = np.multiply(y, y)
    return params.coupling * x2 * y2 + params.quartic * (x2 * x2 + y2 * y2)


def gradient(x, y, params: ModelParams = DEFAULT_PARAMS):
    """Return (dV/dx, dV/dy)."""
    c = 2.0 * params.coupling
    q = 4.0 * params.quartic
    x2 = np.multiply(x, x)
    y2 = np.multiply(y, y)
    return (c * x * y2 + q * x * x2, c * x2 * y + q * y * y2)


def hessian(x, y, params: ModelParams = DEFAULT_PARAMS):
    """Return (V_xx, V_xy, V_yy)."""
    c = 2.0 * params.coupling
    q = 12.0 * params.quartic
    x2 = np.multiply(x, x)
    y2 = np.multiply(y, y)
    return (c * y2 + q * x2, 2.0 * c * np.multiply(x, y), c * x2 + q * y2)


def energy(state, params: ModelParams = DEFAULT_PARAMS):
    """Energy of phase points stored as (..., 4) arrays ordered (x, y, px, py)."""
    s = np.asarray(state, dtype=float)
    return 0.5 * (s[..., 2] ** 2 + s[..., 3] ** 2) + potential(s[..., 0], s[..., 1], params)


def _check_energy(E: float) -> float:
    E = float(E)
    if not E > 0:
        raise ValueError(f"energy must be positive, got {E}")
    return E


def counting_function(E: float, params: ModelParams = DEFAULT_PARAMS) -> float:
    """Smooth number of A1 levels below E."""
    E = _check_energy(E)
    h = params.hbar
    return COUNT_WEYL * E**1.5 / h**2 + COUNT_EDGE * E**0.75 / h


def density(E: float, params: ModelParams = DEFAULT_PARAMS) -> float:
    E = _check_energy(E)
    h = params.hbar
    return DENSITY_WEYL * math.sqrt(E) / h**2 + DENSITY_EDGE * E**-0.25 / h


def scales(E: float, params: ModelParams = DEFAULT_PARAMS) -> SemiclassicalScales:
    E = _check_energy(E)
    h = params.hbar
    rho = density(E, params)
    lam = LYAPUNOV_COEF * E**0.25
    area = SECTION_AREA_COEF * E**0.75
    if area <= h:
        raise ValueError(
            f"section area {area:.4g} does not exceed hbar={h}; Ehrenfest time undefined")
    return SemiclassicalScales(
        energy=E,
        density=rho,
        heisenberg=2.0 * math.pi * h * rho,
        lyapunov=lam,
        section_area=area,
        ehrenfest=math.log(area / h) / (2.0 * lam),
    )


def enlarged_window(E0: float, dE: float, params: ModelParams = DEFAULT_PARAMS):
    """Return (low, high, pad) of the candidate window around [E0-dE, E0+dE]."""
    if not dE > 0:
        raise ValueError("window half-width must be positive")
    pad = scales(E0, params).pad
    return E0 - (dE + pad), E0 + (dE + pad), pad


def turning_radius(E: float, params: ModelParams = DEFAULT_PARAMS) -> float:
    """Outer turning point along the coordinate axes."""
    return (_check_energy(E) / params.quartic) ** 0.25
