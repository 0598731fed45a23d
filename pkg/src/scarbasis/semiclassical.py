"""Bohr-Sommerfeld levels of periodic orbits and Gaussian tube functions."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .classical import PeriodicOrbit, scale_orbit
from .model import DEFAULT_PARAMS, ModelParams, hessian
from .quantum import GridSpec, GridWavefunction, energy_moments, project_a1

log = logging.getLogger(__name__)

MAX_TUBE_SAMPLES = 2048
MIN_TUBE_SAMPLES = 512
ALPHA_SPAN = 2.0
ALPHA_RTOL = 1e-3


class RejectedLevelError(ValueError):
    pass


@dataclass(frozen=True)
class BSLevel:
    orbit_id: int
    n: int
    energy: float

    @property
    def label(self) -> str:
        return f"|{self.orbit_id},{self.n}>"


@dataclass
class TubeFunction:
    level: BSLevel
    alpha: float
    grid: GridWavefunction
    mean_energy: float
    dispersion: float
    warning: str = ""


def quantization_phase(orbit: PeriodicOrbit, energy: float, hbar: float) -> float:
    """S(E)/hbar - mu*pi/2 for the desymmetrized orbit, using S ~ E^(3/4)."""
    s = orbit.action * (energy / orbit.energy) ** 0.75
    return s / hbar - 0.5 * math.pi * orbit.maslov_index


def bs_levels(orbit: PeriodicOrbit, window, params: ModelParams = DEFAULT_PARAMS) -> list[BSLevel]:
    """Levels with S/hbar - mu*pi/2 = 2*pi*n inside [lo, hi]."""
    lo, hi = float(window[0]), float(window[1])
    if orbit.maslov_index is None or not math.isfinite(orbit.action):
        raise ValueError("orbit must be characterized before quantization")
    hbar = params.hbar
    mu = orbit.maslov_index

    def level_energy(n):
        return orbit.energy * ((2 * math.pi * n + 0.5 * math.pi * mu) * hbar / orbit.action) ** (4.0 / 3.0)

    # phase grows monotonically with E, so bracket n directly
    n_lo = max(0, math.ceil(quantization_phase(orbit, max(lo, 1e-300), hbar) / (2 * math.pi) - 1e-12))
    out = []
    n = n_lo
    while True:
        e = level_energy(n)
        if e > hi:
            break
        if e >= lo:
            out.append(BSLevel(orbit.id, n, e))
        n += 1
    return out


# --------------------------------------------------------------------------
# Gaussians and tubes

def _axis_factors(points: np.ndarray, alpha: float, axis: np.ndarray, hbar: float):
    """Per-axis Gaussian factors, shape (samples, n_points) each."""
    dxg = axis[None, :] - points[:, 0:1]
    dyg = axis[None, :] - points[:, 1:2]
    gx = np.exp(-alpha * dxg ** 2 + 1j * points[:, 2:3] * dxg / hbar)
    gy = np.exp(-alpha * dyg ** 2 + 1j * points[:, 3:4] * dyg / hbar)
    return gx, gy


def frozen_gaussian(point, phase: float, alpha: float, grid: GridSpec) -> GridWavefunction:
    """exp(-alpha |r - q|^2 + i p.(r - q)/hbar + i phase) on the grid."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    z = np.asarray(point, dtype=float).reshape(1, 4)
    gx, gy = _axis_factors(z, alpha, grid.axis, grid.hbar)
    amp = np.exp(1j * phase) * np.outer(gy[0], gx[0])
    return GridWavefunction(grid, amp)


def tube_phase(samples: np.ndarray, dt: float, maslov_full: int, hbar: float) -> np.ndarray:
    """Phase along the orbit: reduced action over hbar minus a uniform Maslov ramp.

    ``samples`` covers one full period including the closing point, so the
    total phase advance equals S/hbar - mu*pi/2.
    """
    ke2 = np.sum(samples[:, 2:] ** 2, axis=1)
    w = np.concatenate([[0.0], np.cumsum(0.5 * (ke2[1:] + ke2[:-1]) * dt)])
    frac = np.arange(len(samples)) / (len(samples) - 1)
    return w / hbar - 0.5 * math.pi * maslov_full * frac


def _unfolded_samples(orbit: PeriodicOrbit):
    full = orbit.unfolded()
    m = len(full) - 1
    stride = max(1, m // MAX_TUBE_SAMPLES)
    while m % stride:
        stride -= 1
    if m // stride < MIN_TUBE_SAMPLES:
        raise ValueError(f"orbit sampled too coarsely ({m} points per period)")
    return full, stride


def build_tube(orbit: PeriodicOrbit, level: BSLevel, alpha: float, grid: GridSpec,
               params: ModelParams = DEFAULT_PARAMS) -> TubeFunction:
    """Sum of frozen Gaussians along the full orbit, projected on A1."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if abs(orbit.energy - level.energy) > 1e-12 * level.energy:
        orbit = scale_orbit(orbit, level.energy)
    hbar = params.hbar
    full, stride = _unfolded_samples(orbit)
    dt = orbit.dt
    mu_full = orbit.maslov_index * orbit.repetitions
    theta = tube_phase(full, dt, mu_full, hbar)
    closing = theta[-1] - theta[0] - 2 * math.pi * level.n * orbit.repetitions
    if abs(closing) > 1e-6:
        raise ValueError(f"tube phase does not close (mismatch {closing:.3e}); orbit not at a BS level")
    pts = full[:-1:stride]
    gx, gy = _axis_factors(pts, alpha, grid.axis, hbar)
    weights = (dt * stride) * np.exp(1j * theta[:-1:stride])
    amp = gy.T @ (weights[:, None] * gx)
    raw = GridWavefunction(grid, amp)
    proj = project_a1(raw)
    if proj.norm() <= 1e-8 * raw.norm():
        raise RejectedLevelError(f"level {level.label} has no A1 component")
    psi = proj.normalized()
    mean, disp = energy_moments(psi, params)
    return TubeFunction(level, alpha, psi, mean, disp)


# --------------------------------------------------------------------------
# width optimization

def transverse_frequency(orbit: PeriodicOrbit, params: ModelParams = DEFAULT_PARAMS) -> float:
    """Root of the orbit-averaged potential curvature across the trajectory."""
    z = orbit.samples[:-1]
    p = z[:, 2:]
    speed = np.linalg.norm(p, axis=1)
    ok = speed > 1e-8 * speed.max()
    n = np.stack([-p[ok, 1], p[ok, 0]], axis=1) / speed[ok, None]
    vxx, vxy, vyy = hessian(z[ok, 0], z[ok, 1], params)
    curv = n[:, 0] ** 2 * vxx + 2 * n[:, 0] * n[:, 1] * vxy + n[:, 1] ** 2 * vyy
    return math.sqrt(abs(float(np.mean(curv))))


def initial_alpha(orbit: PeriodicOrbit, params: ModelParams = DEFAULT_PARAMS) -> float:
    w = transverse_frequency(orbit, params)
    if not w > 0:
        w = orbit.stability
    return w / (2 * params.hbar)


def _golden(f, a, b, tol):
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def optimize_tube(orbit: PeriodicOrbit, level: BSLevel, grid: GridSpec,
                  params: ModelParams = DEFAULT_PARAMS, alpha0: float | None = None) -> TubeFunction:
    """Tube with the width minimizing its energy dispersion.

    Golden-section search on ln(alpha) over two e-folds around ``alpha0``;
    if the best point sits on the bracket edge the bracket is widened once
    on that side, after which the best tube found is returned with a
    warning.
    """
    if abs(orbit.energy - level.energy) > 1e-12 * level.energy:
        orbit = scale_orbit(orbit, level.energy)
    if alpha0 is None:
        alpha0 = initial_alpha(orbit, params)
    cache: dict[float, TubeFunction] = {}

    def disp(u):
        if u not in cache:
            cache[u] = build_tube(orbit, level, math.exp(u), grid, params)
        return cache[u].dispersion

    u0 = math.log(alpha0)
    lo, hi = u0 - ALPHA_SPAN, u0 + ALPHA_SPAN
    warning = ""
    for attempt in range(2):
        u = _golden(disp, lo, hi, ALPHA_RTOL)
        disp(u)
        disp(lo), disp(hi)
        best = min(cache, key=lambda k: cache[k].dispersion)
        if lo < best < hi:
            break
        if attempt == 0:
            if best == lo:
                lo, hi = lo - ALPHA_SPAN, lo + 0.5
            else:
                lo, hi = hi - 0.5, hi + ALPHA_SPAN
        else:
            warning = "dispersion minimum on bracket edge"
            log.warning("level %s: %s", level.label, warning)
    tube = cache[min(cache, key=lambda k: cache[k].dispersion)]
    tube.warning = warning
    return tube


def optimize_alpha(orbit: PeriodicOrbit, level: BSLevel, grid: GridSpec,
                   params: ModelParams = DEFAULT_PARAMS) -> float:
    return optimize_tube(orbit, level, grid, params).alpha
