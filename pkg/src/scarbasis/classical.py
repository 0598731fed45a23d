"""Classical flow, symmetric periodic-orbit search and orbit characterization.

Phase points are stored as float arrays ordered (x, y, px, py); trajectories
are (n_samples, 4) arrays sampled on a uniform time grid.

Periodic orbits are searched for in the desymmetrized dynamics of the C4v
potential.  Every orbit found here is self-retracing inside the fundamental
wedge: it leaves one symmetry line (or a turning point) orthogonally and
arrives orthogonally at another one after half of its desymmetrized period.
The second half is the mirror image of the first, so a desymmetrized orbit
closes onto ``g @ start`` for a point-group element ``g``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate as sp_integrate
from scipy.special import gamma

from .model import (DEFAULT_PARAMS, ModelParams, energy, gradient, hessian,
                    potential, scales)

log = logging.getLogger(__name__)

# Suzuki's fourth-order composition of the velocity-Verlet step.
_S = 1.0 / (4.0 - 4.0 ** (1.0 / 3.0))
COMPOSITION = (_S, _S, 1.0 - 4.0 * _S, _S, _S)

STEPS_PER_PERIOD = 2048
CLOSURE_TOL = 1e-8
RESIDUAL_TOL = 1e-10


class PhasePoint(NamedTuple):
    x: float
    y: float
    px: float
    py: float

    @property
    def array(self) -> np.ndarray:
        return np.array(self, dtype=float)


class OrbitSearchError(RuntimeError):
    def __init__(self, message, best_residual=math.inf):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


class EllipticOrbitError(ValueError):
    pass


class InsufficientCatalogError(ValueError):
    def __init__(self, total, target):
        super().__init__(
            f"catalog periods sum to {total:.4g}, short of t_H={target:.4g} "
            f"by {target - total:.4g}")
        self.shortfall = target - total


# --------------------------------------------------------------------------
# symmetry lines and the point group

# Unit directions of the four symmetry lines through the origin.
LINE_NAMES = ("y=0", "x=0", "y=x", "y=-x")
LINE_DIRECTIONS = np.array([[1.0, 0.0], [0.0, 1.0],
                            [1.0, 1.0], [1.0, -1.0]]) / np.array([[1.0], [1.0], [math.sqrt(2)], [math.sqrt(2)]])
LINE_NORMALS = np.stack([-LINE_DIRECTIONS[:, 1], LINE_DIRECTIONS[:, 0]], axis=1)
BRAKE = "brake"


def reflection(line: int) -> np.ndarray:
    d = LINE_DIRECTIONS[line]
    return 2.0 * np.outer(d, d) - np.eye(2)


def point_group() -> list[np.ndarray]:
    """The eight 2x2 orthogonal matrices of C4v."""
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    mats = [np.linalg.matrix_power(rot, k) for k in range(4)]
    mats += [m @ reflection(0) for m in mats]
    return mats


def phase_space_action(g2: np.ndarray) -> np.ndarray:
    g = np.zeros((4, 4))
    g[:2, :2] = g2
    g[2:, 2:] = g2
    return g


def group_order(g2: np.ndarray) -> int:
    m = np.eye(2)
    for k in range(1, 9):
        m = g2 @ m
        if np.allclose(m, np.eye(2), atol=1e-12):
            return k
    raise ValueError("matrix is not a point-group element")


# --------------------------------------------------------------------------
# integration

def _kick(x, y, px, py, a, params):
    gx, gy = gradient(x, y, params)
    return px - a * gx, py - a * gy


def symplectic_step(z, h: float, params: ModelParams = DEFAULT_PARAMS):
    """One fourth-order step.  ``z`` has shape (4,) or (4, batch)."""
    x, y, px, py = z
    a_prev = 0.0
    for w in COMPOSITION:
        a = 0.5 * w * h
        # closing half kick of one stage fuses with the opening one of the next
        px, py = _kick(x, y, px, py, a_prev + a, params)
        x = x + w * h * px
        y = y + w * h * py
        a_prev = a
    px, py = _kick(x, y, px, py, a_prev, params)
    return np.array([x, y, px, py])


def _as_state(start) -> np.ndarray:
    z = np.array(start, dtype=float)
    if z.shape != (4,):
        raise ValueError("phase point must have four components")
    return z


def integrate(start, duration: float, dt: float,
              params: ModelParams = DEFAULT_PARAMS) -> np.ndarray:
    """Sample the flow from ``start``.

    The step is ``duration/n`` with ``n = round(duration/dt)`` so the last
    sample lands exactly at ``duration``.  Negative durations integrate
    backwards.  Returns an (n+1, 4) array including the start.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if abs(duration) < dt:
        raise ValueError("duration must be at least one step")
    n = max(1, int(round(abs(duration) / dt)))
    h = duration / n
    out = np.empty((n + 1, 4))
    z = _as_state(start)
    out[0] = z
    for i in range(n):
        z = symplectic_step(z, h, params)
        out[i + 1] = z
    return out


def _tangent_step(z, m, h, params):
    """Advance a state and its 4xk tangent block with the same composition."""
    x, y, px, py = z
    dq = m[:2].copy()
    dp = m[2:].copy()
    for i, w in enumerate(COMPOSITION):
        a = 0.5 * w * h
        vxx, vxy, vyy = hessian(x, y, params)
        gx, gy = gradient(x, y, params)
        px, py = px - a * gx, py - a * gy
        dp = dp - a * np.array([vxx * dq[0] + vxy * dq[1], vxy * dq[0] + vyy * dq[1]])
        x, y = x + w * h * px, y + w * h * py
        dq = dq + w * h * dp
        vxx, vxy, vyy = hessian(x, y, params)
        gx, gy = gradient(x, y, params)
        px, py = px - a * gx, py - a * gy
        dp = dp - a * np.array([vxx * dq[0] + vxy * dq[1], vxy * dq[0] + vyy * dq[1]])
    return np.array([x, y, px, py]), np.vstack([dq, dp])


def integrate_tangent(start, duration: float, n: int,
                      params: ModelParams = DEFAULT_PARAMS,
                      vectors: np.ndarray | None = None):
    """Integrate the flow together with its linearization.

    Returns ``(samples, maps)`` with ``maps[i]`` the 4x4 tangent map from time
    0 to sample i, or the propagated ``vectors`` (4xk) when those are given.
    """
    h = duration / n
    z = _as_state(start)
    m = np.eye(4) if vectors is None else np.array(vectors, dtype=float)
    samples = np.empty((n + 1, 4))
    maps = np.empty((n + 1,) + m.shape)
    samples[0], maps[0] = z, m
    for i in range(n):
        z, m = _tangent_step(z, m, h, params)
        samples[i + 1], maps[i + 1] = z, m
    return samples, maps


def flow_vector(z, params: ModelParams = DEFAULT_PARAMS) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    gx, gy = gradient(z[..., 0], z[..., 1], params)
    return np.stack([z[..., 2], z[..., 3], -gx, -gy], axis=-1)


def symplectic_form() -> np.ndarray:
    j = np.zeros((4, 4))
    j[:2, 2:] = np.eye(2)
    j[2:, :2] = -np.eye(2)
    return j


# --------------------------------------------------------------------------
# starting families for the shooting

def momentum_norm(q, E, params):
    ke = E - potential(q[0], q[1], params)
    if np.any(ke < 0):
        raise ValueError("start point outside the classically allowed region")
    return np.sqrt(2.0 * ke)


def equipotential_radius(theta, E, params: ModelParams = DEFAULT_PARAMS):
    c, s = np.cos(theta), np.sin(theta)
    v1 = potential(c, s, params)
    return (E / v1) ** 0.25


def start_point(kind, s, E, params: ModelParams = DEFAULT_PARAMS) -> np.ndarray:
    """Phase point(s) of a starting family.

    ``kind`` is a line index (0: y=0, 2: y=x), with ``s`` the signed distance
    from the origin along the line and momentum orthogonal to it, or
    ``"brake"`` with ``s`` the polar angle of a turning point.
    """
    s = np.asarray(s, dtype=float)
    if kind == BRAKE:
        r = equipotential_radius(s, E, params)
        return np.array([r * np.cos(s), r * np.sin(s), 0 * s, 0 * s])
    d = LINE_DIRECTIONS[kind]
    nrm = LINE_NORMALS[kind]
    q = np.array([s * d[0], s * d[1]])
    pn = momentum_norm(q, E, params)
    return np.array([q[0], q[1], pn * nrm[0], pn * nrm[1]])


def start_range(kind, E, params: ModelParams = DEFAULT_PARAMS):
    if kind == BRAKE:
        return 0.0, math.pi / 4
    d = LINE_DIRECTIONS[kind]
    return 0.0, float(equipotential_radius(math.atan2(d[1], d[0]), E, params))


def arrival_residual(z, end) -> np.ndarray:
    """Two residuals that vanish on an orthogonal hit of ``end``."""
    q, p = z[:2], z[2:]
    if end == BRAKE:
        return p
    return np.array([LINE_NORMALS[end] @ q, LINE_DIRECTIONS[end] @ p])


@dataclass(frozen=True)
class SymmetryConstraint:
    """Start family and arrival condition of a self-retracing orbit."""
    start: object
    end: object
    crossing: int = 1

    def __str__(self):
        name = lambda k: BRAKE if k == BRAKE else LINE_NAMES[k]
        return f"{name(self.start)}->{name(self.end)}#{self.crossing}"


def closing_element(constraint: SymmetryConstraint) -> np.ndarray:
    """Point-group element g with z(T_desym) = g z(0)."""
    r1 = np.eye(2) if constraint.start == BRAKE else reflection(constraint.start)
    r2 = np.eye(2) if constraint.end == BRAKE else reflection(constraint.end)
    return r2 @ r1


# --------------------------------------------------------------------------
# periodic orbits

@dataclass
class PeriodicOrbit:
    id: int
    samples: np.ndarray
    energy: float
    period: float
    constraint: SymmetryConstraint
    start_coordinate: float
    action: float = float("nan")
    maslov: int | None = None
    stability: float = float("nan")
    monodromy: np.ndarray = field(default_factory=lambda: np.full((2, 2), np.nan))
    bounces: int = 0
    residual: float = 0.0
    hyperbolic: bool = True
    maslov_override: int | None = None

    @property
    def symmetry_class(self) -> str:
        return str(self.constraint)

    @property
    def closing(self) -> np.ndarray:
        return closing_element(self.constraint)

    @property
    def repetitions(self) -> int:
        """Copies of the desymmetrized orbit making up the full orbit."""
        return group_order(self.closing)

    @property
    def full_period(self) -> float:
        return self.period * self.repetitions

    @property
    def maslov_index(self) -> int:
        return self.maslov if self.maslov_override is None else self.maslov_override

    @property
    def start(self) -> PhasePoint:
        return PhasePoint(*self.samples[0])

    @property
    def dt(self) -> float:
        return self.period / (len(self.samples) - 1)

    def unfolded(self) -> np.ndarray:
        """Samples of the full orbit, ``repetitions`` * (n-1) + 1 points."""
        g = phase_space_action(self.closing)
        parts = [self.samples[:-1]]
        gk = np.eye(4)
        for _ in range(1, self.repetitions):
            gk = g @ gk
            parts.append(self.samples[:-1] @ gk.T)
        full = np.vstack(parts + [self.samples[:1]])
        return full

    def closure_error(self) -> float:
        g = phase_space_action(self.closing)
        return float(np.max(np.abs(self.samples[-1] - g @ self.samples[0])))


def _shoot(constraint, s, tau, E, n, params):
    z0 = start_point(constraint.start, s, E, params)
    z = z0
    h = tau / n
    for _ in range(n):
        z = symplectic_step(z, h, params)
    return z


def _brake_sign_residual(z, params):
    gx, gy = gradient(z[0], z[1], params)
    return np.array([gx * z[2] + gy * z[3], -gy * z[2] + gx * z[3]])


def refine(constraint: SymmetryConstraint, s: float, tau: float, E: float,
           params: ModelParams = DEFAULT_PARAMS, n: int = STEPS_PER_PERIOD // 2,
           max_iter: int = 40):
    """Newton iteration on (start coordinate, half period)."""
    lo, hi = start_range(constraint.start, E, params)

    def resid(u):
        z = _shoot(constraint, u[0], u[1], E, n, params)
        if constraint.end == BRAKE:
            return _brake_sign_residual(z, params)
        return arrival_residual(z, constraint.end)

    u = np.array([s, tau], dtype=float)
    f = resid(u)
    best = float(np.max(np.abs(f)))
    for it in range(max_iter):
        if best <= RESIDUAL_TOL:
            break
        jac = np.empty((2, 2))
        for j, step in enumerate((1e-7 * max(1.0, abs(u[0])), 1e-7 * u[1])):
            du = np.zeros(2)
            du[j] = step
            jac[:, j] = (resid(u + du) - resid(u - du)) / (2 * step)
        try:
            delta = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            raise OrbitSearchError(f"singular Jacobian for {constraint}", best)
        lam = 1.0
        while lam > 1e-4:
            trial = u + lam * delta
            if lo <= trial[0] <= hi and trial[1] > 0:
                ft = resid(trial)
                if np.max(np.abs(ft)) < np.max(np.abs(f)) or lam < 1e-3:
                    break
            lam *= 0.5
        u, f = trial, ft
        best = float(np.max(np.abs(f)))
    if best > RESIDUAL_TOL:
        raise OrbitSearchError(f"shooting {constraint} did not converge", best)
    return u[0], u[1], best


def channel_orbit(line: int, E: float, params: ModelParams = DEFAULT_PARAMS,
                  n: int = STEPS_PER_PERIOD) -> PeriodicOrbit:
    """Orbit along a symmetry axis (line 0) or diagonal (line 2).

    The motion is one-dimensional in the quartic r**4 potential, so the
    quarter period is known in closed form and no shooting is needed.
    """
    d = LINE_DIRECTIONS[line]
    v1 = float(potential(d[0], d[1], params))
    rt = (E / v1) ** 0.25
    # quarter period of r'' = -4 v1 r^3 from rest at rt
    k = gamma(0.25) ** 2 / (4.0 * math.sqrt(2.0 * math.pi))
    quarter = rt / math.sqrt(2.0 * E) * k
    other = 1 if line == 0 else 3
    constraint = SymmetryConstraint(BRAKE, other, 1)
    start = np.array([rt * d[0], rt * d[1], 0.0, 0.0])
    samples = integrate(start, 2 * quarter, 2 * quarter / n, params)
    theta = math.atan2(d[1], d[0])
    return PeriodicOrbit(id=0, samples=samples, energy=E, period=2 * quarter,
                         constraint=constraint, start_coordinate=theta, residual=0.0)


def find_periodic_orbit(seed, constraint: SymmetryConstraint,
                        params: ModelParams = DEFAULT_PARAMS, *,
                        tau_guess: float | None = None,
                        n: int = STEPS_PER_PERIOD) -> PeriodicOrbit:
    """Refine a symmetric periodic orbit from a seed on its start family.

    ``seed`` must lie on the start line with momentum orthogonal to it (or be
    a turning point for brake starts).  Without ``tau_guess`` the arrival is
    located as the ``constraint.crossing``-th crossing of the arrival line.
    """
    z0 = _as_state(seed)
    E = float(energy(z0, params))
    if not E > 0:
        raise ValueError("seed energy must be positive")
    if constraint.start == BRAKE:
        if np.hypot(z0[2], z0[3]) > 1e-8:
            raise ValueError("brake seed must have zero momentum")
        s = math.atan2(z0[1], z0[0])
    else:
        d, nrm = LINE_DIRECTIONS[constraint.start], LINE_NORMALS[constraint.start]
        if abs(nrm @ z0[:2]) > 1e-8 or abs(d @ z0[2:]) > 1e-8:
            raise ValueError("seed is not orthogonal to its start line")
        s = float(d @ z0[:2])
    if tau_guess is None:
        tau_guess = _locate_arrival(z0, constraint, params)
    s, tau, res = refine(constraint, s, tau_guess, E, params, n // 2)
    start = start_point(constraint.start, s, E, params)
    samples = integrate(start, 2 * tau, 2 * tau / n, params)
    orbit = PeriodicOrbit(id=0, samples=samples, energy=E, period=2 * tau,
                          constraint=constraint, start_coordinate=float(s),
                          residual=res)
    if orbit.closure_error() > 1e3 * CLOSURE_TOL:
        raise OrbitSearchError("orbit does not close", orbit.closure_error())
    return orbit


def _locate_arrival(z0, constraint, params, t_max=40.0, dt=2e-3):
    """Time of the requested crossing of the arrival line."""
    count = 0
    z = z0.copy()
    nrm = None if constraint.end == BRAKE else LINE_NORMALS[constraint.end]
    prev = None
    t = 0.0
    while t < t_max:
        zn = symplectic_step(z, dt, params)
        if nrm is not None:
            g0, g1 = nrm @ z[:2], nrm @ zn[:2]
            if g0 != 0 and np.sign(g0) != np.sign(g1):
                count += 1
                if count == constraint.crossing:
                    return t + dt * g0 / (g0 - g1)
        else:
            k1 = zn[2] ** 2 + zn[3] ** 2
            if prev is not None and prev[1] < prev[0] and prev[1] <= k1:
                count += 1
                if count == constraint.crossing:
                    return t
            prev = (prev[1] if prev else k1, k1)
        z = zn
        t += dt
    raise OrbitSearchError(f"no arrival for {constraint} before t={t_max}")


# --------------------------------------------------------------------------
# characterization

def transverse_basis(z, params: ModelParams = DEFAULT_PARAMS) -> np.ndarray:
    """Symplectic pair (w1, w2) spanning the energy-shell section at z."""
    q, p = z[:2], z[2:]
    pp = p @ p
    if pp < 1e-20:
        raise ValueError("transverse frame undefined at a turning point")
    n = np.array([-p[1], p[0]]) / math.sqrt(pp)
    gv = np.array(gradient(q[0], q[1], params))
    w1 = np.concatenate([n, -(gv @ n) / pp * p])
    w2 = np.concatenate([np.zeros(2), n])
    return np.stack([w1, w2], axis=1)


def reduce_monodromy(full: np.ndarray, z, params: ModelParams = DEFAULT_PARAMS) -> np.ndarray:
    """Project a 4x4 return map at z onto the 2D transverse section."""
    w = transverse_basis(z, params)
    f = flow_vector(z, params)
    basis = np.column_stack([w, f])
    coef, *_ = np.linalg.lstsq(basis, full @ w, rcond=None)
    return coef[:2]


def maslov_from_frames(frames: np.ndarray) -> int:
    """Maslov index of a closed path of Lagrangian planes.

    ``frames`` is (n, 4, 2): two spanning vectors per sample.  The index is
    the winding of det(X + iP), counted in half turns, clockwise positive.
    """
    z = frames[:, :2, :] + 1j * frames[:, 2:, :]
    det = z[:, 0, 0] * z[:, 1, 1] - z[:, 0, 1] * z[:, 1, 0]
    ang = np.unwrap(np.angle(det))
    if np.max(np.abs(np.diff(ang))) > 0.5 * math.pi:
        raise ValueError("Lagrangian frame under-sampled for winding count")
    winding = -(ang[-1] - ang[0]) / math.pi
    mu = int(round(winding))
    if abs(winding - mu) > 1e-3:
        raise ValueError(f"non-integer Maslov winding {winding:.4f}")
    return mu


def characterize(orbit: PeriodicOrbit, params: ModelParams = DEFAULT_PARAMS) -> PeriodicOrbit:
    """Fill action, monodromy, stability exponent, Maslov index and bounces."""
    if orbit.closure_error() > 1e3 * CLOSURE_TOL:
        raise ValueError("orbit is not closed")
    n = len(orbit.samples) - 1
    samples, maps = integrate_tangent(orbit.samples[0], orbit.period, n, params)
    g = phase_space_action(orbit.closing)
    ret = g.T @ maps[-1]  # g is orthogonal

    # reference point with the largest speed for the transverse frame
    i_ref = int(np.argmax(np.sum(samples[:-1, 2:] ** 2, axis=1)))
    conj = maps[i_ref] @ ret @ np.linalg.inv(maps[i_ref])
    mono = reduce_monodromy(conj, samples[i_ref], params)

    ev = np.linalg.eigvals(mono)
    tr = float(np.trace(mono))
    hyperbolic = abs(tr) > 2.0
    nu = float(np.max(np.abs(ev)))

    # action over the desymmetrized period; p.dq = |p|^2 dt
    ke2 = np.sum(samples[:, 2:] ** 2, axis=1)
    action = float(_periodic_trapezoid(ke2) * orbit.dt)

    maslov = None
    if hyperbolic:
        # unstable eigenvector of the return map at the start, carried along
        w, v = np.linalg.eig(ret)
        k = int(np.argmax(np.abs(w)))
        u0 = np.real(v[:, k])
        u0 /= np.linalg.norm(u0)
        _, vec = integrate_tangent(orbit.samples[0], orbit.period, n * 4, params,
                                   vectors=u0[:, None])
        fine = integrate(orbit.samples[0], orbit.period, orbit.period / (4 * n), params)
        f = flow_vector(fine, params)
        frames = np.stack([f, vec[:, :, 0]], axis=2)
        maslov = maslov_from_frames(frames)
    out = replace(orbit, samples=samples, action=action, monodromy=mono,
                  stability=math.log(nu) / orbit.period if hyperbolic else 0.0,
                  maslov=maslov, hyperbolic=hyperbolic,
                  bounces=count_bounces(orbit))
    if not hyperbolic:
        log.warning("orbit %s is elliptic (trace %.4f); excluded", orbit.symmetry_class, tr)
    return out


def _periodic_trapezoid(values: np.ndarray) -> float:
    return float(np.sum(values[:-1]) + 0.5 * (values[-1] - values[0]))


def count_bounces(orbit: PeriodicOrbit, tol: float = 1e-7) -> int:
    """Symmetry-line hits along one desymmetrized period.

    Transversal crossings are counted where the line function changes sign;
    orthogonal endpoint hits count once each.  Motion along a line counts as
    a single hit at the origin.
    """
    c = orbit.constraint
    q = orbit.samples[:, :2]
    total = 0
    for line in range(4):
        g = q @ LINE_NORMALS[line]
        if np.all(np.abs(g) < tol):
            continue
        nz = g[np.abs(g) > tol]
        total += int(np.count_nonzero(np.sign(nz[1:]) != np.sign(nz[:-1])))
    total += int(c.start != BRAKE) + int(c.end != BRAKE)
    return total


def scale_orbit(orbit: PeriodicOrbit, E_target: float) -> PeriodicOrbit:
    """Rescale by mechanical similarity of the quartic potential."""
    E_target = float(E_target)
    if not E_target > 0:
        raise ValueError("target energy must be positive")
    r = E_target / orbit.energy
    if r == 1.0:
        return replace(orbit)
    fq, fp = r ** 0.25, r ** 0.5
    samples = orbit.samples * np.array([fq, fq, fp, fp])
    mono = orbit.monodromy.copy()
    # transverse frame (q_perp, p_perp) rescales as (fq, fp) -> conjugation
    mono[0, 1] *= fq / fp
    mono[1, 0] *= fp / fq
    s = orbit.start_coordinate if orbit.constraint.start == BRAKE else orbit.start_coordinate * fq
    return replace(orbit, samples=samples, energy=E_target,
                   period=orbit.period * r ** -0.25, action=orbit.action * r ** 0.75,
                   stability=orbit.stability * r ** 0.25, monodromy=mono,
                   start_coordinate=s)


def select_orbit_set(catalog: Sequence[PeriodicOrbit], E: float,
                     params: ModelParams = DEFAULT_PARAMS, count: int | None = None) -> list[PeriodicOrbit]:
    """Shortest catalog prefix whose periods at E add up to more than t_H(E).

    With ``count`` the first ``count`` orbits are taken instead; their
    periods must still cover t_H(E).
    """
    t_h = scales(E, params).heisenberg
    total = 0.0
    chosen = []
    for orbit in catalog:
        scaled = scale_orbit(orbit, E)
        chosen.append(scaled)
        total += scaled.period
        if count is None and total > t_h:
            return chosen
        if count is not None and len(chosen) == count:
            break
    if count is not None and len(chosen) == count and total > t_h:
        return chosen
    raise InsufficientCatalogError(total, t_h)


# --------------------------------------------------------------------------
# catalog search

def quadrature_quarter_period(E: float, params: ModelParams = DEFAULT_PARAMS) -> float:
    """Quarter period of the axis channel by adaptive quadrature."""
    xt = (E / params.quartic) ** 0.25

    def f(x):
        return 1.0 / math.sqrt(2.0 * (E - params.quartic * x ** 4))

    # substitute x = xt sin(phi)-like to remove the endpoint singularity
    val, _ = sp_integrate.quad(lambda u: f(xt * (1 - u * u)) * 2 * u * xt, 0.0, 1.0,
                               epsabs=1e-13, epsrel=1e-13, limit=200)
    return val


def scan_family(start, E: float, params: ModelParams = DEFAULT_PARAMS, *,
                n_seeds: int = 1200, t_max: float = 6.0, dt: float = 4e-3,
                max_crossings: int = 12):
    """Brute-force scan of a start family for orthogonal arrivals.

    Returns candidate (constraint, s, tau) triples, located where the
    tangential momentum at the k-th crossing of a fixed line changes sign
    between neighbouring seeds.
    """
    lo, hi = start_range(start, E, params)
    eps = 1e-4 * (hi - lo)
    seeds = np.linspace(lo + eps, hi - eps, n_seeds)
    z = start_point(start, seeds, E, params)
    events: list[list[tuple]] = [[] for _ in range(n_seeds)]
    g_old = LINE_NORMALS @ z[:2]
    ke_before = ke_now = None
    t = 0.0
    for _ in range(int(round(t_max / dt))):
        zn = symplectic_step(z, dt, params)
        g = LINE_NORMALS @ zn[:2]
        for line in range(4):
            hit = np.nonzero((g_old[line] != 0) & (np.sign(g[line]) != np.sign(g_old[line]))
                             & (np.abs(g_old[line]) > 1e-12))[0]
            for j in hit:
                f = g_old[line, j] / (g_old[line, j] - g[line, j])
                zz = z[:, j] + f * (zn[:, j] - z[:, j])
                pt = LINE_DIRECTIONS[line] @ zz[2:] / math.hypot(zz[2], zz[3])
                events[j].append((line, t + f * dt, pt))
        ke = zn[2] ** 2 + zn[3] ** 2
        if ke_before is not None:
            # z sits at a local minimum of the kinetic energy: near-turning point
            mins = np.nonzero((ke_now < ke_before) & (ke_now <= ke) & (ke_now < 0.05 * E))[0]
            for j in mins:
                r = _brake_sign_residual(z[:, j], params)[1]
                events[j].append((BRAKE, t, r / E))
        ke_before, ke_now = ke_now, ke
        g_old = g
        z = zn
        t += dt
    out = []
    for k in range(max_crossings):
        for j in range(n_seeds - 1):
            a, b = events[j], events[j + 1]
            if len(a) <= k or len(b) <= k:
                continue
            (la, ta, ra), (lb, tb, rb) = a[k], b[k]
            if la != lb or np.sign(ra) == np.sign(rb):
                continue
            if max(abs(ra), abs(rb)) > 0.5 or abs(ta - tb) > 0.2:
                continue
            # skip repeats: an earlier event of this seed already orthogonal
            if any(abs(e[2]) < 0.02 for e in a[:k]):
                continue
            frac = ra / (ra - rb)
            s0 = seeds[j] + frac * (seeds[j + 1] - seeds[j])
            out.append((SymmetryConstraint(start, la, k + 1), s0, ta + frac * (tb - ta)))
    return out


def search_catalog(E: float = 1.0, params: ModelParams = DEFAULT_PARAMS, *,
                   t_max: float = 6.0, n_seeds: int = 1200,
                   n_steps: int = STEPS_PER_PERIOD) -> list[PeriodicOrbit]:
    """All distinct symmetric hyperbolic orbits with half period below t_max.

    Returns them ordered by bounce count, then period, with the axis and
    diagonal channel orbits first.
    """
    found = [characterize(channel_orbit(0, E, params, n_steps), params),
             characterize(channel_orbit(2, E, params, n_steps), params)]
    candidates = []
    for start in (0, 2, BRAKE):
        candidates += scan_family(start, E, params, n_seeds=n_seeds, t_max=t_max)
    for constraint, s, tau in sorted(candidates, key=lambda c: c[2]):
        try:
            s_ref, tau_ref, res = refine(constraint, s, tau, E, params, n_steps // 2)
        except OrbitSearchError as err:
            log.debug("dropping candidate %s: %s", constraint, err)
            continue
        start = start_point(constraint.start, s_ref, E, params)
        orbit = PeriodicOrbit(id=0, samples=integrate(start, 2 * tau_ref, 2 * tau_ref / n_steps, params),
                              energy=E, period=2 * tau_ref, constraint=constraint,
                              start_coordinate=float(s_ref), residual=res)
        if orbit.closure_error() > 1e3 * CLOSURE_TOL:
            continue
        if any(_same_orbit(orbit, o) for o in found):
            continue
        try:
            orbit = characterize(orbit, params)
        except ValueError as err:
            log.debug("dropping %s: %s", constraint, err)
            continue
        if not orbit.hyperbolic:
            continue
        found.append(orbit)
    head, rest = found[:2], found[2:]
    rest.sort(key=lambda o: (o.bounces, o.period))
    ordered = head + rest
    for i, o in enumerate(ordered, start=1):
        o.id = i
    return ordered


def _fold(q):
    """Map positions into the fundamental wedge 0 <= y <= x."""
    x, y = np.abs(q[:, 0]), np.abs(q[:, 1])
    return np.stack([np.maximum(x, y), np.minimum(x, y)], axis=1)


def _same_orbit(a: PeriodicOrbit, b: PeriodicOrbit, tol: float = 1e-5) -> bool:
    if abs(a.period - b.period) > tol * max(a.period, 1.0):
        return False
    fa, fb = _fold(a.samples[:, :2]), _fold(b.samples[:, :2])
    # any sample of a must be close to the folded path of b
    idx = np.linspace(0, len(fa) - 1, 17).astype(int)
    d = np.min(np.linalg.norm(fa[idx, None, :] - fb[None, :, :], axis=2), axis=1)
    return bool(np.max(d) < 1e-3)
