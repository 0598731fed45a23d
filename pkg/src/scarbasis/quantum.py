"""Wavefunctions on a uniform periodic grid and their time evolution.

Amplitudes are stored as ``amplitudes[iy, ix]`` on the points
``-L + k*dx`` (k = 0..N-1) of each axis, with ``dx = 2L/N``.  Inner products
carry the ``dx**2`` quadrature weight.  The kinetic energy is applied in
Fourier space, so the grid must be large enough for the wavefunction to
vanish at its edges.
"""
from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.fft as fft

from .model import DEFAULT_PARAMS, ModelParams, potential

log = logging.getLogger(__name__)

CONFINEMENT_TOL = 1e-5
DEFAULT_DT = 2.5e-3


class GridTooSmallError(RuntimeError):
    pass


class NumericalConsistencyError(ArithmeticError):
    pass


@dataclass(frozen=True)
class GridSpec:
    n_points: int
    half_extent: float
    hbar: float = 1.0

    def __post_init__(self):
        n = self.n_points
        if n < 64 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= 64, got {n}")
        if not self.half_extent > 0:
            raise ValueError("half_extent must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_extent / self.n_points

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.half_extent + self.dx * np.arange(self.n_points)

    @cached_property
    def mesh(self):
        """(X, Y) arrays indexed [iy, ix]."""
        return np.meshgrid(self.axis, self.axis, indexing="xy")

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * fft.fftfreq(self.n_points, d=self.dx)

    @cached_property
    def k_squared(self) -> np.ndarray:
        k = self.wavenumbers
        return k[None, :] ** 2 + k[:, None] ** 2

    def potential(self, params: ModelParams = DEFAULT_PARAMS) -> np.ndarray:
        x, y = self.mesh
        return potential(x, y, params)

    def covers(self, E_max: float, params: ModelParams = DEFAULT_PARAMS, margin: float = 1.2) -> bool:
        return self.half_extent > margin * (E_max / params.quartic) ** 0.25


@dataclass
class GridWavefunction:
    spec: GridSpec
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        n = self.spec.n_points
        if a.shape != (n, n):
            raise ValueError(f"amplitudes must be {n}x{n}, got {a.shape}")
        self.amplitudes = a

    def inner(self, other: "GridWavefunction") -> complex:
        """<self|other>."""
        return complex(np.vdot(self.amplitudes, other.amplitudes) * self.spec.dx ** 2)

    def norm(self) -> float:
        return math.sqrt(float(np.sum(np.abs(self.amplitudes) ** 2)) * self.spec.dx ** 2)

    def normalized(self) -> "GridWavefunction":
        nrm = self.norm()
        if nrm == 0 or not math.isfinite(nrm):
            raise NumericalConsistencyError("cannot normalize a vanishing wavefunction")
        return GridWavefunction(self.spec, self.amplitudes / nrm)

    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def boundary_ratio(self) -> float:
        """Largest edge modulus relative to the peak modulus."""
        a = np.abs(self.amplitudes)
        peak = a.max()
        if peak == 0:
            return 0.0
        edge = max(a[0].max(), a[-1].max(), a[:, 0].max(), a[:, -1].max())
        return float(edge / peak)

    def __add__(self, other):
        return GridWavefunction(self.spec, self.amplitudes + other.amplitudes)

    def __sub__(self, other):
        return GridWavefunction(self.spec, self.amplitudes - other.amplitudes)

    def __mul__(self, c):
        return GridWavefunction(self.spec, self.amplitudes * c)

    __rmul__ = __mul__


# --------------------------------------------------------------------------
# point-group action on the grid

def _flip(a: np.ndarray, axis: int) -> np.ndarray:
    # x_k -> -x_k maps index k to (N - k) mod N on the periodic grid
    return np.roll(np.flip(a, axis=axis), 1, axis=axis)


def group_images(a: np.ndarray) -> Iterable[np.ndarray]:
    """The eight C4v images of a grid array."""
    for b in (a, a.T):
        fx = _flip(b, 1)
        yield b
        yield fx
        yield _flip(b, 0)
        yield _flip(fx, 0)


def project_a1(psi: GridWavefunction | np.ndarray):
    """Average over the eight point-group operations."""
    a = psi.amplitudes if isinstance(psi, GridWavefunction) else np.asarray(psi)
    out = sum(group_images(a)) / 8.0
    if isinstance(psi, GridWavefunction):
        return GridWavefunction(psi.spec, out)
    return out


def a1_asymmetry(psi: GridWavefunction) -> float:
    """Largest deviation from A1 symmetry relative to the peak modulus."""
    a = psi.amplitudes
    peak = np.abs(a).max()
    return float(max(np.abs(b - a).max() for b in group_images(a)) / peak)


# --------------------------------------------------------------------------
# Hamiltonian

class GridHamiltonian:
    """Cached operators of the quartic Hamiltonian on one grid."""

    def __init__(self, spec: GridSpec, params: ModelParams = DEFAULT_PARAMS):
        if abs(spec.hbar - params.hbar) > 1e-15:
            raise ValueError("grid and model disagree on hbar")
        self.spec = spec
        self.params = params
        self.v = spec.potential(params)
        self.t = 0.5 * params.hbar ** 2 * spec.k_squared
        self._dt = None

    def apply(self, a: np.ndarray) -> np.ndarray:
        kin = fft.ifft2(self.t * fft.fft2(a))
        return kin + self.v * a

    def _set_step(self, dt: float):
        if self._dt != dt:
            h = self.params.hbar
            self._half_v = np.exp(-0.5j * dt * self.v / h)
            self._full_t = np.exp(-1j * dt * self.t / h)
            self._dt = dt

    def step(self, a: np.ndarray, dt: float) -> np.ndarray:
        """Strang step V/2 T V/2 of duration dt (negative for backwards)."""
        self._set_step(dt)
        a = self._half_v * a
        a = fft.ifft2(self._full_t * fft.fft2(a))
        return self._half_v * a


_HAM_CACHE: dict = {}


def hamiltonian_for(spec: GridSpec, params: ModelParams = DEFAULT_PARAMS) -> GridHamiltonian:
    key = (spec, params)
    ham = _HAM_CACHE.get(key)
    if ham is None:
        if len(_HAM_CACHE) > 4:
            _HAM_CACHE.clear()
        ham = _HAM_CACHE[key] = GridHamiltonian(spec, params)
    return ham


def apply_hamiltonian(psi: GridWavefunction, params: ModelParams = DEFAULT_PARAMS) -> GridWavefunction:
    ham = hamiltonian_for(psi.spec, params)
    return GridWavefunction(psi.spec, ham.apply(psi.amplitudes))


def energy_moments(psi: GridWavefunction, params: ModelParams = DEFAULT_PARAMS):
    """Return (mean, dispersion) of H in the normalized state psi."""
    hpsi = apply_hamiltonian(psi, params)
    w = psi.spec.dx ** 2
    mean_c = np.vdot(psi.amplitudes, hpsi.amplitudes) * w
    if abs(mean_c.imag) > 1e-10 * max(1.0, abs(mean_c.real)):
        raise NumericalConsistencyError(f"<H> has imaginary part {mean_c.imag:.3e}")
    mean = float(mean_c.real)
    second = float(np.vdot(hpsi.amplitudes, hpsi.amplitudes).real * w)
    var = second - mean * mean
    if var < -1e-12 * max(1.0, second):
        raise NumericalConsistencyError(f"negative energy variance {var:.3e}")
    return mean, math.sqrt(max(var, 0.0))


# triple-jump weights turning the second-order Strang step into fourth order
_JUMP = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
COMPOSITION = (_JUMP, 1.0 - 2.0 * _JUMP, _JUMP)


def _composed_step(ham: GridHamiltonian, a: np.ndarray, h: float, order: int) -> np.ndarray:
    if order == 2:
        return ham.step(a, h)
    for w in COMPOSITION:
        a = ham.step(a, w * h)
    return a


def propagate(psi: GridWavefunction, duration: float, dt: float = DEFAULT_DT,
              params: ModelParams = DEFAULT_PARAMS, order: int = 4,
              check_every: int = 50) -> GridWavefunction:
    """Evolve psi by exp(-i H duration / hbar).

    Each step is a Strang split (order 2) or a symmetric triple-jump
    composition of three Strang splits (order 4).  The step is adjusted to
    ``duration/n`` with ``n = ceil(|duration|/dt)``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    if duration == 0:
        return GridWavefunction(psi.spec, psi.amplitudes.copy())
    n = int(math.ceil(abs(duration) / dt - 1e-9))
    h = duration / n
    ham = hamiltonian_for(psi.spec, params)
    a = psi.amplitudes
    for i in range(n):
        a = _composed_step(ham, a, h, order)
        if (i + 1) % check_every == 0 or i == n - 1:
            _check_confinement(a)
    return GridWavefunction(psi.spec, a)


def time_step_error(psi: GridWavefunction, duration: float, dt: float = DEFAULT_DT,
                    params: ModelParams = DEFAULT_PARAMS, order: int = 4) -> float:
    """Norm of the change in psi(duration) when dt is halved."""
    a = propagate(psi, duration, dt, params, order)
    b = propagate(psi, duration, 0.5 * dt, params, order)
    return (a - b).norm() / psi.norm()


def converged_time_step(psi: GridWavefunction, duration: float, dt: float = DEFAULT_DT,
                        params: ModelParams = DEFAULT_PARAMS, tol: float = 1e-6,
                        max_halvings: int = 4) -> float:
    """Halve dt until halving once more changes psi(duration) by at most tol."""
    for _ in range(max_halvings + 1):
        if time_step_error(psi, duration, dt, params) <= tol:
            return dt
        dt *= 0.5
    raise NumericalConsistencyError(f"time step not converged down to dt={dt:.3g}")


def real_phase(psi: GridWavefunction, tol: float = 1e-9):
    """Global phase chi with psi = exp(i chi) * (real array), or None."""
    a = psi.amplitudes
    z = np.sum(a * a)
    if abs(z) < 1e-300:
        return None
    chi = 0.5 * np.angle(z)
    if np.abs((a * np.exp(-1j * chi)).imag).max() <= tol * np.abs(a).max():
        return chi
    return None


def _check_confinement(a: np.ndarray):
    m = np.abs(a)
    edge = max(m[0].max(), m[-1].max(), m[:, 0].max(), m[:, -1].max())
    if edge > CONFINEMENT_TOL * m.max():
        raise GridTooSmallError(
            f"wavefunction reaches the grid edge (ratio {edge / m.max():.2e})")


# --------------------------------------------------------------------------
# scar functions

@dataclass
class ScarFunction:
    level: object
    grid: GridWavefunction
    mean_energy: float
    dispersion: float
    ehrenfest_time_used: float
    tube_dispersion: float = float("nan")
    warning: str = ""

    @property
    def label(self) -> str:
        return self.level.label


def cosine_window(t, t_e: float):
    return np.cos(0.5 * np.pi * np.asarray(t) / t_e)


def build_scar(tube, t_e: float, dt: float = DEFAULT_DT,
               params: ModelParams = DEFAULT_PARAMS) -> ScarFunction:
    """Filter a tube function by cosine-windowed evolution over [-t_E, t_E].

    Accumulates  sum_t w(t) cos(pi t / 2 t_E) exp(i E_n t/hbar) psi(t)  with
    trapezoid weights, then projects on A1 and normalizes.  When the tube is
    real up to a global phase, the backward half follows from the forward
    half by time reversal.
    """
    if not t_e > 0:
        raise ValueError("Ehrenfest time must be positive")
    psi0 = tube.grid
    e_n = tube.level.energy
    hbar = params.hbar
    n = int(math.ceil(t_e / dt - 1e-9))
    h = t_e / n
    ham = hamiltonian_for(psi0.spec, params)
    chi = real_phase(psi0)

    def sweep(sign):
        acc = np.zeros_like(psi0.amplitudes)
        a = psi0.amplitudes
        for i in range(1, n):
            a = _composed_step(ham, a, sign * h, 4)
            if i % 50 == 0:
                _check_confinement(a)
            acc += math.cos(0.5 * math.pi * i / n) * np.exp(1j * sign * e_n * i * h / hbar) * a
        # the window vanishes at +-t_E; one more step only checks confinement
        _check_confinement(_composed_step(ham, a, sign * h, 4))
        return acc

    fwd = sweep(1.0)
    if chi is None:
        bwd = sweep(-1.0)
    else:
        # psi(-t) = exp(2i chi) conj(psi(t)), and the filter phase flips with t
        bwd = np.exp(2j * chi) * np.conj(fwd)
    total = h * (psi0.amplitudes + fwd + bwd)
    out = project_a1(GridWavefunction(psi0.spec, total)).normalized()
    mean, disp = energy_moments(out, params)
    scar = ScarFunction(level=tube.level, grid=out, mean_energy=mean, dispersion=disp,
                        ehrenfest_time_used=t_e, tube_dispersion=tube.dispersion)
    if not disp < tube.dispersion:
        scar.warning = "dispersion not reduced"
        log.warning("scar %s: dispersion %.4g not below tube %.4g",
                    tube.level.label, disp, tube.dispersion)
    return scar


# --------------------------------------------------------------------------
# binary wavefunction files

MAGIC = b"SCARWF01"
VERSION = 1
_HEADER = struct.Struct("<8sIIddiidd")


def write_wavefunction(path, psi: GridWavefunction, orbit_id: int = 0, n: int = -1,
                       mean_energy: float = float("nan"), dispersion: float = float("nan")):
    """Header then row-major little-endian complex128 amplitudes."""
    spec = psi.spec
    header = _HEADER.pack(MAGIC, VERSION, spec.n_points, spec.half_extent, spec.hbar,
                          int(orbit_id), int(n), float(mean_energy), float(dispersion))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(psi.amplitudes, dtype="<c16").tobytes())


def read_wavefunction(path):
    """Return (GridWavefunction, metadata dict)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, n, L, hbar, oid, lvl, mean, disp = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    body = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    if body.size != n * n:
        raise ValueError(f"{path}: expected {n * n} amplitudes, found {body.size}")
    psi = GridWavefunction(GridSpec(n, L, hbar), body.reshape(n, n).astype(complex))
    meta = dict(orbit_id=oid, n=lvl, mean_energy=mean, dispersion=disp)
    return psi, meta
