"""Reference eigenpairs from a symmetrized harmonic-oscillator product basis.

The A1 block is spanned by |2i, 2j> + |2j, 2i> with 2(i + j) <= max_total_quanta.
One-dimensional matrix elements of x**2, x**4 and p**2 follow from the
ladder operators and are exact within the truncated basis (they are built in
a padded space before truncation).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse as sp

from .model import DEFAULT_PARAMS, ModelParams

log = logging.getLogger(__name__)


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleBasisSpec:
    omega: float = 1.5
    max_total_quanta: int = 152
    symmetry: bool = True
    hbar: float = 1.0
    size_limit: int = 6000

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("oscillator frequency must be positive")
        if self.max_total_quanta < 0:
            raise ValueError("cutoff must be non-negative")
        if not self.symmetry:
            raise ValueError("only the A1 block is supported")

    @property
    def n_even(self) -> int:
        """Number of even 1D oscillator states, n = 0, 2, ..., cutoff."""
        return self.max_total_quanta // 2 + 1

    @property
    def pairs(self) -> np.ndarray:
        m = self.max_total_quanta // 2
        return np.array([(i, j) for j in range(m + 1) for i in range(j + 1) if i + j <= m])

    @property
    def size(self) -> int:
        m = self.max_total_quanta // 2
        return sum(min(j, m - j) + 1 for j in range(m + 1))

    def with_cutoff(self, quanta: int) -> "OracleBasisSpec":
        return OracleBasisSpec(self.omega, quanta, self.symmetry, self.hbar, self.size_limit)

    def with_omega(self, omega: float) -> "OracleBasisSpec":
        return OracleBasisSpec(omega, self.max_total_quanta, self.symmetry, self.hbar, self.size_limit)


def cutoff_for_size(n_states: int) -> int:
    """Smallest even quanta cutoff whose A1 block holds at least n_states."""
    q = 0
    while OracleBasisSpec(max_total_quanta=q, size_limit=10**9).size < n_states:
        q += 2
    return q


@dataclass
class OracleResult:
    spec: OracleBasisSpec
    energies: np.ndarray
    states: np.ndarray
    converged_below: float = float("nan")
    params: ModelParams = field(default=DEFAULT_PARAMS)

    def product_coefficients(self, index: int) -> np.ndarray:
        """Coefficient matrix C[i, j] of state ``index`` on phi_2i(x) phi_2j(y)."""
        return a1_to_product(self.spec, self.states[:, index])

    def intensities(self, coeffs: np.ndarray) -> np.ndarray:
        """|<N|psi>|^2 for psi given by A1 basis coefficients."""
        return np.abs(self.states.T @ coeffs) ** 2

    def count_below(self, E: float) -> int:
        return int(np.searchsorted(self.energies, E, side="right"))


def ladder_matrices(n: int, omega: float, hbar: float = 1.0):
    """Return (x2, x4, p2) for the first n oscillator states."""
    pad = n + 6
    k = np.sqrt(np.arange(1, pad))
    a = np.diag(k, 1)
    x = math.sqrt(hbar / (2 * omega)) * (a + a.T)
    p2 = -(hbar * omega / 2) * (a.T - a) @ (a.T - a)
    x2 = x @ x
    x4 = x2 @ x2
    return x2[:n, :n], x4[:n, :n], p2[:n, :n]


def _even_block(mat: np.ndarray) -> np.ndarray:
    return mat[::2, ::2]


def _symmetrizer(spec: OracleBasisSpec):
    """Sparse map from A1 coefficients to the restricted product basis.

    Product indices enumerate (i, j) with i + j <= m over the even states.
    """
    m = spec.n_even - 1
    prod = [(i, j) for i in range(m + 1) for j in range(m + 1) if i + j <= m]
    index = {ij: k for k, ij in enumerate(prod)}
    pairs = spec.pairs
    rows, cols, vals = [], [], []
    for c, (i, j) in enumerate(pairs):
        if i == j:
            rows.append(index[(i, i)]); cols.append(c); vals.append(1.0)
        else:
            w = 1.0 / math.sqrt(2.0)
            rows += [index[(i, j)], index[(j, i)]]
            cols += [c, c]
            vals += [w, w]
    u = sp.csr_matrix((vals, (rows, cols)), shape=(len(prod), len(pairs)))
    return u, np.array(prod)


def assemble_oracle(spec: OracleBasisSpec, params: ModelParams = DEFAULT_PARAMS,
                    anharmonic: bool = True) -> np.ndarray:
    """Dense A1 Hamiltonian matrix in the symmetrized oscillator basis.

    The reference oscillator p**2/2 + omega**2 r**2/2 is diagonal; the
    remainder V - omega**2 r**2/2 is added from ladder-operator matrices
    unless ``anharmonic`` is False.
    """
    if spec.size > spec.size_limit:
        raise OracleError(f"basis of {spec.size} exceeds the limit {spec.size_limit}")
    if spec.size == 0:
        raise OracleError("empty basis")
    m = spec.n_even
    pairs = spec.pairs
    quanta = 2 * (pairs[:, 0] + pairs[:, 1])
    h = np.diag(spec.hbar * spec.omega * (quanta + 1.0))
    if not anharmonic:
        return h
    x2, x4, _ = ladder_matrices(2 * m - 1, spec.omega, spec.hbar)
    x2, x4 = _even_block(x2), _even_block(x4)
    h1 = params.quartic * x4 - 0.5 * spec.omega ** 2 * x2
    u, prod = _symmetrizer(spec)
    flat = prod[:, 0] * m + prod[:, 1]
    full = (sp.kron(sp.csr_matrix(h1), sp.identity(m)) + sp.kron(sp.identity(m), sp.csr_matrix(h1))
            + params.coupling * sp.kron(sp.csr_matrix(x2), sp.csr_matrix(x2))).tocsr()
    restricted = full[flat][:, flat]
    h = h + (u.T @ restricted @ u).toarray()
    return 0.5 * (h + h.T)


def a1_to_product(spec: OracleBasisSpec, coeffs: np.ndarray) -> np.ndarray:
    """Expand A1 coefficients (or a matrix of columns) into C[i, j, ...]."""
    pairs = spec.pairs
    coeffs = np.asarray(coeffs)
    out = np.zeros((spec.n_even, spec.n_even) + coeffs.shape[1:], dtype=coeffs.dtype)
    diag = pairs[:, 0] == pairs[:, 1]
    w = np.where(diag, 1.0, 1.0 / math.sqrt(2.0))
    wc = coeffs * w.reshape((-1,) + (1,) * (coeffs.ndim - 1))
    out[pairs[:, 0], pairs[:, 1]] = wc
    out[pairs[:, 1], pairs[:, 0]] = wc
    return out


def product_to_a1(spec: OracleBasisSpec, cmat: np.ndarray) -> np.ndarray:
    """A1 components of a product coefficient matrix (projection)."""
    pairs = spec.pairs
    diag = pairs[:, 0] == pairs[:, 1]
    i, j = pairs[:, 0], pairs[:, 1]
    sym = np.where(diag, cmat[i, j], (cmat[i, j] + cmat[j, i]) / math.sqrt(2.0))
    return sym


def diagonalize_oracle(matrix: np.ndarray, spec: OracleBasisSpec,
                       params: ModelParams = DEFAULT_PARAMS,
                       reference: "OracleResult | None" = None,
                       shift_tol: float = 1e-6) -> OracleResult:
    """Full dense eigendecomposition.

    With ``reference`` from a larger cutoff, ``converged_below`` is the lowest
    energy at which an eigenvalue shifts by more than ``shift_tol``.
    """
    try:
        w, v = scipy.linalg.eigh(matrix)
    except (np.linalg.LinAlgError, ValueError) as err:
        raise OracleError(f"eigensolver failed: {err}") from err
    res = OracleResult(spec=spec, energies=w, states=v, params=params)
    if reference is not None:
        res.converged_below = convergence_bound(w, reference.energies, shift_tol)
    return res


def convergence_bound(small: np.ndarray, large: np.ndarray, tol: float) -> float:
    n = min(len(small), len(large))
    bad = np.nonzero(np.abs(small[:n] - large[:n]) >= tol)[0]
    if len(bad) == 0:
        return float(small[n - 1])
    return float(small[bad[0]])


def trace_optimal_omega(cutoff: int, params: ModelParams = DEFAULT_PARAMS,
                        hbar: float = 1.0) -> float:
    """Frequency minimizing the trace of the truncated A1 Hamiltonian."""

    def tr(logw):
        spec = OracleBasisSpec(omega=math.exp(logw), max_total_quanta=cutoff, hbar=hbar,
                               size_limit=10**9)
        return float(np.trace(assemble_oracle(spec, params)))

    res = scipy.optimize.minimize_scalar(tr, bounds=(math.log(0.05), math.log(20.0)),
                                         method="bounded", options={"xatol": 1e-6})
    return math.exp(res.x)


def solve_oracle(spec: OracleBasisSpec, params: ModelParams = DEFAULT_PARAMS,
                 growth: float = 1.2, shift_tol: float = 1e-6) -> OracleResult:
    """Diagonalize at ``spec`` and estimate the converged range.

    The comparison run uses a basis about ``growth`` times larger.
    """
    big_q = spec.max_total_quanta
    while spec.with_cutoff(big_q).size < growth * spec.size:
        big_q += 2
    big_spec = OracleBasisSpec(spec.omega, big_q, spec.symmetry, spec.hbar, 10**9)
    big = diagonalize_oracle(assemble_oracle(big_spec, params), big_spec, params)
    res = diagonalize_oracle(assemble_oracle(spec, params), spec, params, reference=big,
                             shift_tol=shift_tol)
    log.info("oracle: %d A1 states, omega=%.4f, converged below E=%.4f",
             spec.size, spec.omega, res.converged_below)
    return res


# --------------------------------------------------------------------------
# oscillator functions on grids

def oscillator_table(x: np.ndarray, n_max: int, omega: float, hbar: float = 1.0) -> np.ndarray:
    """Normalized 1D oscillator eigenfunctions phi_0..phi_{n_max} at x.

    Uses the three-term recurrence for the normalized functions, which keeps
    every intermediate value bounded by the Gaussian envelope.
    """
    xi = np.asarray(x, dtype=float) * math.sqrt(omega / hbar)
    out = np.empty((n_max + 1,) + xi.shape)
    out[0] = (omega / (math.pi * hbar)) ** 0.25 * np.exp(-0.5 * xi * xi)
    if n_max >= 1:
        out[1] = math.sqrt(2.0) * xi * out[0]
    for n in range(1, n_max):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * xi * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    if not np.all(np.isfinite(out)):
        bad = int(np.argmax(~np.all(np.isfinite(out.reshape(n_max + 1, -1)), axis=1)))
        raise OracleError(f"oscillator recurrence overflow at quantum number {bad}")
    return out


def even_table(x: np.ndarray, spec: OracleBasisSpec) -> np.ndarray:
    return oscillator_table(x, 2 * (spec.n_even - 1), spec.omega, spec.hbar)[::2]


def render_coefficients(cmat: np.ndarray, x: np.ndarray, spec: OracleBasisSpec) -> np.ndarray:
    """Evaluate sum_ij C[i, j] phi_2i(x) phi_2j(y) on the tensor grid x by x.

    Rows of the result index y and columns index x.
    """
    tab = even_table(x, spec)
    return tab.T @ cmat.T @ tab


def render_to_grid(result: OracleResult, index: int, grid, normalize: bool = True):
    """Grid wavefunction of oracle state ``index``."""
    from .quantum import GridWavefunction

    if not 0 <= index < len(result.energies):
        raise IndexError(f"state {index} outside the oracle spectrum")
    if np.isfinite(result.converged_below) and result.energies[index] > result.converged_below:
        log.warning("rendering unconverged oracle state %d (E=%.4f)", index, result.energies[index])
    amp = render_coefficients(result.product_coefficients(index), grid.axis, result.spec)
    psi = GridWavefunction(grid, amp.astype(complex))
    return psi.normalized() if normalize else psi


def project_onto_basis(psi, spec: OracleBasisSpec) -> np.ndarray:
    """A1 coefficients of a grid function by quadrature against the basis."""
    tab = even_table(psi.spec.axis, spec)
    # amplitudes are indexed [y, x]
    cmat = tab @ psi.amplitudes.T @ tab.T * psi.spec.dx ** 2
    return product_to_a1(spec, cmat)
