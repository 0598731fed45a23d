import cmath
import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scarbasis import quantum as qm
from scarbasis.model import DEFAULT_PARAMS, ModelParams
from scarbasis.oracle import render_to_grid
from scarbasis.quantum import (GridSpec, GridTooSmallError, GridWavefunction, a1_asymmetry,
                               apply_hamiltonian, energy_moments, project_a1, propagate)
from scarbasis.semiclassical import BSLevel, frozen_gaussian


def _gaussian(grid, x0=0.0, y0=0.0, px=0.0, py=0.0, alpha=1.0):
    return frozen_gaussian((x0, y0, px, py), 0.0, alpha, grid).normalized()


def _random_state(grid, rng, smooth=True):
    a = rng.normal(size=(grid.n_points,) * 2) + 1j * rng.normal(size=(grid.n_points,) * 2)
    if smooth:
        a *= np.exp(-0.05 * (grid.mesh[0] ** 2 + grid.mesh[1] ** 2))
    return GridWavefunction(grid, a).normalized()


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec(100, 10.0)
    with pytest.raises(ValueError):
        GridSpec(32, 10.0)
    with pytest.raises(ValueError):
        GridSpec(128, 0.0)
    g = GridSpec(128, 16.0)
    assert g.dx == 0.25
    assert g.axis[0] == -16.0 and g.axis[-1] == pytest.approx(16.0 - 0.25)
    assert g.covers(20.0) and not g.covers(300.0)


def test_wavefunction_shape_checked(small_grid):
    with pytest.raises(ValueError):
        GridWavefunction(small_grid, np.zeros((4, 4)))
    with pytest.raises(qm.NumericalConsistencyError):
        GridWavefunction(small_grid, np.zeros((128, 128))).normalized()


@pytest.mark.parametrize("alpha,px", [(0.5, 0.0), (1.0, 0.0), (1.5, 2.0)])
def test_gaussian_energy_closed_form(small_grid, alpha, px):
    p = DEFAULT_PARAMS
    psi = _gaussian(small_grid, px=px, alpha=alpha)
    mean, _ = energy_moments(psi)
    expect = alpha + 0.5 * px ** 2 + (p.coupling + 6 * p.quartic) / (16 * alpha ** 2)
    assert mean == pytest.approx(expect, abs=1e-8)


def test_hamiltonian_hermitian(small_grid, rng):
    u = _random_state(small_grid, rng, smooth=False)
    v = _random_state(small_grid, rng, smooth=False)
    lhs = u.inner(apply_hamiltonian(v))
    rhs = apply_hamiltonian(u).inner(v)
    scale = apply_hamiltonian(u).norm() * apply_hamiltonian(v).norm()
    assert abs(lhs - rhs) <= 1e-10 * scale


def test_hbar_mismatch_rejected():
    with pytest.raises(ValueError):
        qm.GridHamiltonian(GridSpec(64, 10.0, hbar=0.5), DEFAULT_PARAMS)


def test_a1_projector(small_grid, rng):
    psi = _random_state(small_grid, rng, smooth=False)
    p1 = project_a1(psi)
    p2 = project_a1(p1)
    assert np.max(np.abs(p2.amplitudes - p1.amplitudes)) <= 1e-12 * np.abs(p1.amplitudes).max()
    assert a1_asymmetry(p1) <= 1e-12
    assert a1_asymmetry(psi) > 0.1
    # projection is orthogonal
    assert abs((psi - p1).inner(p1)) <= 1e-12


def test_group_has_eight_images(small_grid):
    psi = _gaussian(small_grid, x0=1.0, y0=0.4)
    imgs = list(qm.group_images(psi.amplitudes))
    assert len(imgs) == 8
    centres = {(round(float(np.sum(small_grid.mesh[0] * np.abs(a) ** 2) / np.sum(np.abs(a) ** 2)), 6),
                round(float(np.sum(small_grid.mesh[1] * np.abs(a) ** 2) / np.sum(np.abs(a) ** 2)), 6))
               for a in imgs}
    assert len(centres) == 8


@settings(max_examples=8, deadline=None)
@given(x0=st.floats(-2, 2), y0=st.floats(-2, 2), px=st.floats(-3, 3), t=st.floats(0.05, 0.4))
def test_propagation_unitary_and_reversible(x0, y0, px, t):
    grid = GridSpec(128, 15.0)
    psi = _gaussian(grid, x0, y0, px, 0.0)
    fwd = propagate(psi, t)
    assert fwd.norm() == pytest.approx(1.0, abs=1e-9)
    back = propagate(fwd, -t)
    assert (back - psi).norm() <= 1e-8


def test_zero_duration_identity(small_grid):
    psi = _gaussian(small_grid, 1.0, 0.5, 1.0, 0.0)
    out = propagate(psi, 0.0)
    assert np.array_equal(out.amplitudes, psi.amplitudes)
    assert out.amplitudes is not psi.amplitudes


def test_propagate_rejects_bad_arguments(small_grid):
    psi = _gaussian(small_grid)
    with pytest.raises(ValueError):
        propagate(psi, 1.0, dt=0.0)
    with pytest.raises(ValueError):
        propagate(psi, 1.0, order=3)


def test_energy_conservation_and_symmetry(small_grid):
    psi = project_a1(_gaussian(small_grid, 2.0, 0.5, 0.0, 3.0)).normalized()
    e0, d0 = energy_moments(psi)
    out = propagate(psi, 1.0)
    e1, d1 = energy_moments(out)
    assert e1 == pytest.approx(e0, abs=1e-7)
    assert d1 == pytest.approx(d0, abs=1e-6)
    assert a1_asymmetry(out) <= 1e-10


def test_time_step_halving(desk_grid):
    psi = _gaussian(desk_grid, 3.0, 0.0, 0.0, 5.0)
    assert qm.time_step_error(psi, 0.5) <= 1e-6
    # the second-order split alone is not enough at this step
    assert qm.time_step_error(psi, 0.5, order=2) > 1e-6
    assert qm.converged_time_step(psi, 0.5) == qm.DEFAULT_DT


def test_eigenstate_phase(desk_oracle, desk_grid):
    k = 9
    e = desk_oracle.energies[k]
    psi = render_to_grid(desk_oracle, k, desk_grid)
    t = 0.7
    out = propagate(psi, t)
    ov = psi.inner(out)
    assert abs(ov) >= 1 - 1e-6
    dphi = cmath.phase(ov * cmath.exp(1j * e * t))
    assert abs(dphi) <= 1e-4


def test_two_level_moments(desk_oracle, desk_grid):
    a, b = 3, 11
    psi = (render_to_grid(desk_oracle, a, desk_grid) + render_to_grid(desk_oracle, b, desk_grid)) * (
        1 / math.sqrt(2))
    mean, disp = energy_moments(psi)
    ea, eb = desk_oracle.energies[[a, b]]
    assert mean == pytest.approx(0.5 * (ea + eb), abs=1e-4)
    assert disp == pytest.approx(0.5 * abs(eb - ea), abs=1e-4)


def test_grid_too_small_detected():
    grid = GridSpec(64, 4.0)
    psi = _gaussian(grid, 1.0, 0.0, 6.0, 0.0)
    with pytest.raises(GridTooSmallError):
        propagate(psi, 2.0)


def test_real_phase(small_grid):
    psi = _gaussian(small_grid, 1.0, 0.0)
    assert qm.real_phase(psi * cmath.exp(0.3j)) == pytest.approx(0.3, abs=1e-12) or \
        qm.real_phase(psi * cmath.exp(0.3j)) == pytest.approx(0.3 - math.pi, abs=1e-12)
    assert qm.real_phase(_gaussian(small_grid, 1.0, 0.0, 1.0, 0.0)) is None


def test_cosine_window():
    w = qm.cosine_window(np.array([0.0, 1.0, 2.0]), 2.0)
    assert np.allclose(w, [1.0, math.sqrt(0.5), 0.0])


def _fake_tube(grid, energy, amp):
    level = BSLevel(1, 3, energy)
    psi = GridWavefunction(grid, amp).normalized()
    _, disp = energy_moments(psi)
    return SimpleNamespace(level=level, grid=psi, dispersion=disp)


@pytest.fixture(scope="module")
def tube_state(small_grid):
    g = project_a1(_gaussian(small_grid, 1.5, 0.0, 0.0, 0.0, alpha=0.7))
    return g.amplitudes


def test_scar_time_reversal_matches_explicit_sweep(small_grid, tube_state, monkeypatch):
    tube = _fake_tube(small_grid, 2.0, tube_state)
    fast = qm.build_scar(tube, 0.6)
    monkeypatch.setattr(qm, "real_phase", lambda psi, tol=1e-9: None)
    slow = qm.build_scar(tube, 0.6)
    assert (fast.grid - slow.grid).norm() <= 1e-10
    assert fast.dispersion < tube.dispersion
    assert fast.ehrenfest_time_used == 0.6


def test_scar_phase_covariance(small_grid, tube_state):
    phi = 0.9
    plain = qm.build_scar(_fake_tube(small_grid, 2.0, tube_state), 0.6)
    turned = qm.build_scar(_fake_tube(small_grid, 2.0, tube_state * cmath.exp(1j * phi)), 0.6)
    assert (turned.grid - plain.grid * cmath.exp(1j * phi)).norm() <= 1e-10
    assert turned.mean_energy == pytest.approx(plain.mean_energy, abs=1e-10)


def test_scar_rejects_bad_time(small_grid, tube_state):
    with pytest.raises(ValueError):
        qm.build_scar(_fake_tube(small_grid, 2.0, tube_state), 0.0)


def test_wavefunction_file_round_trip(tmp_path, small_grid, rng):
    psi = _random_state(small_grid, rng)
    path = tmp_path / "s.bin"
    qm.write_wavefunction(path, psi, orbit_id=4, n=7, mean_energy=17.25, dispersion=0.125)
    back, meta = qm.read_wavefunction(path)
    assert back.spec == small_grid
    assert np.array_equal(back.amplitudes, psi.amplitudes)
    assert meta == dict(orbit_id=4, n=7, mean_energy=17.25, dispersion=0.125)
    assert path.stat().st_size == qm._HEADER.size + 16 * 128 * 128


def test_wavefunction_file_errors(tmp_path, small_grid):
    psi = _gaussian(small_grid)
    path = tmp_path / "s.bin"
    qm.write_wavefunction(path, psi)
    raw = path.read_bytes()
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTSCARS" + raw[8:])
    with pytest.raises(ValueError, match="magic"):
        qm.read_wavefunction(bad)
    bad.write_bytes(raw[:-16])
    with pytest.raises(ValueError):
        qm.read_wavefunction(bad)
    bad.write_bytes(raw[:10])
    with pytest.raises(ValueError, match="truncated"):
        qm.read_wavefunction(bad)
