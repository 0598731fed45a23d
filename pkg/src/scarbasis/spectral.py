"""Scar-basis selection, windowed diagonalization and comparison against the oracle."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model import DEFAULT_PARAMS, ModelParams, density, enlarged_window
from .quantum import GridWavefunction, hamiltonian_for

log = logging.getLogger(__name__)

DEPENDENCE_TOL = 1e-6


class MatchingConflictError(RuntimeError):
    pass


@dataclass(frozen=True)
class WindowJob:
    E0: float
    dE: float
    delta: float
    threshold: float | None = None

    def __post_init__(self):
        if not (self.dE > 0 and self.delta > 0):
            raise ValueError("window half-width and pad must be positive")
        if self.threshold is None:
            object.__setattr__(self, "threshold", 2.0 * self.delta)

    @classmethod
    def centered(cls, E0: float, dE: float, params: ModelParams = DEFAULT_PARAMS, threshold=None):
        _, _, pad = enlarged_window(E0, dE, params)
        return cls(E0, dE, pad, threshold)

    @property
    def window(self):
        return (self.E0 - self.dE, self.E0 + self.dE)

    @property
    def enlarged(self):
        w = self.dE + self.delta
        return (self.E0 - w, self.E0 + w)


@dataclass
class SelectionStep:
    step: int
    label: str
    dispersion: float


@dataclass
class ScarBasis:
    members: list
    states: np.ndarray          # (k, N, N) orthonormalized grid amplitudes
    overlap: np.ndarray
    hmatrix: np.ndarray
    trace: list = field(default_factory=list)
    spec: object = None

    def __len__(self):
        return len(self.members)

    @property
    def labels(self):
        return [m.label for m in self.members]


@dataclass
class EigenResult:
    energies: np.ndarray
    coefficients: np.ndarray    # columns are basis-coefficient vectors
    grid_states: list
    residuals: np.ndarray


# --------------------------------------------------------------------------

def _moments(ham, a, w):
    ha = ham.apply(a)
    mean = float(np.vdot(a, ha).real * w)
    var = float(np.vdot(ha, ha).real * w) - mean * mean
    return mean, math.sqrt(max(var, 0.0))


def gram_schmidt_selective(candidates, job: WindowJob, params: ModelParams = DEFAULT_PARAMS) -> ScarBasis:
    """Greedy selection by minimum dispersion with deflation of the rest.

    At each step the remaining candidate whose deflated state has the
    smallest energy dispersion is taken, the others are orthogonalized
    against it and renormalized, and their dispersions are recomputed on
    the grid.  Selection stops when the smallest dispersion exceeds
    ``job.threshold``.
    """
    if not candidates:
        raise ValueError("no candidate scar functions")
    spec = candidates[0].grid.spec
    w = spec.dx ** 2
    ham = hamiltonian_for(spec, params)
    work = [c.grid.amplitudes.copy() for c in candidates]
    disp = []
    for c, a in zip(candidates, work):
        if not math.isfinite(c.dispersion):
            raise ValueError(f"candidate {c.label} has non-finite dispersion")
        disp.append(_moments(ham, a, w)[1])
    remaining = list(range(len(candidates)))
    chosen, states, trace = [], [], []
    while remaining:
        k = min(remaining, key=lambda i: disp[i])
        if disp[k] > job.threshold:
            break
        trace.append(SelectionStep(len(chosen) + 1, candidates[k].label, disp[k]))
        chosen.append(k)
        sel = work[k]
        states.append(sel)
        remaining.remove(k)
        keep = []
        for i in remaining:
            a = work[i] - (np.vdot(sel, work[i]) * w) * sel
            nrm = math.sqrt(float(np.vdot(a, a).real * w))
            if nrm < DEPENDENCE_TOL:
                log.info("dropping %s: linearly dependent on the selected set", candidates[i].label)
                continue
            work[i] = a / nrm
            disp[i] = _moments(ham, work[i], w)[1]
            keep.append(i)
        remaining = keep
    if not states:
        return ScarBasis([], np.zeros((0,) + (spec.n_points,) * 2, complex),
                         np.zeros((0, 0)), np.zeros((0, 0)), trace, spec)
    arr = np.array(states)
    flat = arr.reshape(len(arr), -1)
    hflat = np.array([ham.apply(a) for a in arr]).reshape(len(arr), -1)
    s = (flat.conj() @ flat.T) * w
    h = (flat.conj() @ hflat.T) * w
    h = 0.5 * (h + h.conj().T)
    err = np.abs(s - np.eye(len(arr))).max()
    if err > 1e-8:
        raise ArithmeticError(f"selected basis not orthonormal ({err:.2e})")
    return ScarBasis([candidates[i] for i in chosen], arr, s, h, trace, spec)


def solve_window(basis: ScarBasis, job: WindowJob, params: ModelParams = DEFAULT_PARAMS) -> EigenResult:
    if len(basis) == 0:
        return EigenResult(np.zeros(0), np.zeros((0, 0)), [], np.zeros(0))
    vals, vecs = np.linalg.eigh(basis.hmatrix)
    lo, hi = job.window
    idx = np.nonzero((vals >= lo) & (vals <= hi))[0]
    ham = hamiltonian_for(basis.spec, params)
    states, resid = [], []
    for j in idx:
        a = np.tensordot(vecs[:, j], basis.states, axes=1)
        psi = GridWavefunction(basis.spec, a)
        r = ham.apply(a) - vals[j] * a
        resid.append(math.sqrt(float(np.vdot(r, r).real)) * basis.spec.dx / psi.norm())
        states.append(psi)
    return EigenResult(vals[idx], vecs[:, idx], states, np.array(resid))


# --------------------------------------------------------------------------
# comparison with the oracle

def oracle_overlaps(psi: GridWavefunction, reference) -> np.ndarray:
    """<N|psi> for every oracle eigenstate N."""
    from .oracle import project_onto_basis
    c = project_onto_basis(psi, reference.spec)
    return reference.states.T @ c


@dataclass
class StateError:
    energy: float
    oracle_index: int
    oracle_energy: float
    energy_error: float
    state_error: float


def match_states(states, reference):
    """Greedy one-to-one pairing by overlap magnitude."""
    ov = np.array([np.abs(oracle_overlaps(s, reference)) for s in states])
    best = ov.argmax(axis=1) if len(states) else np.zeros(0, int)
    if len(set(best.tolist())) != len(best):
        raise MatchingConflictError("two computed states match the same oracle state")
    return best, ov


def error_metrics(result: EigenResult, reference, params: ModelParams = DEFAULT_PARAMS) -> list[StateError]:
    best, ov = match_states(result.grid_states, reference)
    out = []
    for j, (e, k) in enumerate(zip(result.energies, best)):
        e_ref = float(reference.energies[k])
        out.append(StateError(float(e), int(k), e_ref,
                              density(e_ref, params) * abs(e - e_ref),
                              1.0 - ov[j, k] ** 2))
    return out


@dataclass
class IntensitySpectrum:
    line_energies: np.ndarray
    line_intensities: np.ndarray
    energies: np.ndarray
    curve: np.ndarray
    width: float


def lorentzian_sum(e, line_energies, line_intensities, width):
    e = np.asarray(e, dtype=float)
    d = e[..., None] - line_energies
    return (width / (2 * np.pi)) * np.sum(line_intensities / (d ** 2 + 0.25 * width ** 2), axis=-1)


def intensity_spectrum(psi: GridWavefunction, reference, width: float = 0.4,
                       energies=None) -> IntensitySpectrum:
    if not width > 0:
        raise ValueError("width must be positive")
    inten = np.abs(oracle_overlaps(psi, reference)) ** 2
    if energies is None:
        top = reference.converged_below if math.isfinite(reference.converged_below) else reference.energies[-1]
        energies = np.linspace(reference.energies[0], top, 2000)
    energies = np.asarray(energies, dtype=float)
    curve = lorentzian_sum(energies, reference.energies, inten, width)
    return IntensitySpectrum(reference.energies.copy(), inten, energies, curve, width)


def spectral_centroid(spec: IntensitySpectrum) -> float:
    return float(np.sum(spec.line_energies * spec.line_intensities) / np.sum(spec.line_intensities))


def decay_slopes(spec: IntensitySpectrum, center: float, decades: float = 3.0):
    """Fitted slopes of log10 intensity against energy below and above center.

    Lines within ``decades`` of the strongest line on each side are used.
    """
    e, i = spec.line_energies, spec.line_intensities
    peak = i.max()
    keep = i > peak * 10.0 ** (-decades)
    out = []
    for side in (e <= center, e >= center):
        m = keep & side
        if m.sum() < 2:
            out.append(float("nan"))
            continue
        dist = np.abs(e[m] - center)
        out.append(float(np.polyfit(dist, np.log10(i[m]), 1)[0]))
    return tuple(out)


@dataclass
class ReconstructionEntry:
    label: str
    overlap2: float
    cumulative: float


def _projection2(v, s, tol=1e-10):
    w, u = np.linalg.eigh(s)
    if w.min() < tol * max(1.0, w.max()):
        return None
    c = u.conj().T @ v
    return float(np.real(np.sum(np.abs(c) ** 2 / w)))


def reconstruction_report(state: GridWavefunction, scars, k_max: int | None = None) -> list[ReconstructionEntry]:
    """Greedy ordering of scars by gain in squared projection of ``state``."""
    grids = [s.grid if hasattr(s, "grid") else s for s in scars]
    labels = [getattr(s, "label", str(i)) for i, s in enumerate(scars)]
    psi = state.normalized()
    v = np.array([g.inner(psi) for g in grids])
    n = len(grids)
    flat = np.array([g.amplitudes.ravel() for g in grids])
    gram = (flat.conj() @ flat.T) * grids[0].spec.dx ** 2 if n else np.zeros((0, 0))
    k_max = n if k_max is None else min(k_max, n)
    chosen, out, current = [], [], 0.0
    pool = list(range(n))
    while pool and len(chosen) < k_max:
        best, gain_best = None, -1.0
        for i in list(pool):
            idx = chosen + [i]
            p = _projection2(v[idx], gram[np.ix_(idx, idx)])
            if p is None:
                pool.remove(i)
                continue
            if p > gain_best:
                best, gain_best = i, p
        if best is None:
            break
        pool.remove(best)
        chosen.append(best)
        current = max(current, min(gain_best, 1.0))
        out.append(ReconstructionEntry(labels[best], float(abs(v[best]) ** 2), current))
    return out
