import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scarbasis import semiclassical as sc
from scarbasis.classical import scale_orbit
from scarbasis.model import ModelParams
from scarbasis.quantum import GridSpec, a1_asymmetry, energy_moments
from scarbasis.semiclassical import BSLevel


def test_level_label():
    assert BSLevel(3, 12, 17.0).label == "|3,12>"


@pytest.mark.parametrize("index", [0, 1, 4])
def test_bs_levels_satisfy_quantization(catalog, index):
    orbit = catalog[index]
    levels = sc.bs_levels(orbit, (5.0, 40.0))
    assert levels
    for lv in levels:
        assert 5.0 <= lv.energy <= 40.0
        assert sc.quantization_phase(orbit, lv.energy, 1.0) == pytest.approx(2 * math.pi * lv.n, abs=1e-8)
    ns = [lv.n for lv in levels]
    assert ns == list(range(ns[0], ns[-1] + 1))
    # nothing missing at either end of the window
    below = orbit.energy * ((2 * math.pi * (ns[0] - 1) + 0.5 * math.pi * orbit.maslov_index)
                            / orbit.action) ** (4 / 3)
    assert ns[0] == 0 or below < 5.0
    assert sc.bs_levels(orbit, (levels[-1].energy + 1e-9, levels[-1].energy + 1e-6)) == []


def test_bs_levels_scale_invariant(catalog):
    """Quantizing a rescaled copy of the orbit gives the same levels."""
    orbit = catalog[2]
    a = sc.bs_levels(orbit, (10.0, 30.0))
    b = sc.bs_levels(scale_orbit(orbit, 17.0), (10.0, 30.0))
    assert [x.n for x in a] == [x.n for x in b]
    assert np.allclose([x.energy for x in a], [x.energy for x in b], rtol=1e-10)


def test_level_spacing_matches_period(catalog):
    orbit = catalog[0]
    levels = sc.bs_levels(orbit, (15.0, 25.0))
    for a, b in zip(levels, levels[1:]):
        mid = scale_orbit(orbit, 0.5 * (a.energy + b.energy))
        assert (b.energy - a.energy) == pytest.approx(2 * math.pi / mid.period, rel=0.02)


@settings(max_examples=25, deadline=None)
@given(hbar=st.floats(0.2, 2.0), index=st.integers(0, 16))
def test_bs_invariant_any_hbar(catalog, hbar, index):
    orbit = catalog[index]
    params = ModelParams(hbar=hbar)
    for lv in sc.bs_levels(orbit, (8.0, 20.0), params):
        assert sc.quantization_phase(orbit, lv.energy, hbar) == pytest.approx(2 * math.pi * lv.n, abs=1e-8)


def test_frozen_gaussian(small_grid):
    q = (small_grid.axis[70], small_grid.axis[60])
    g = sc.frozen_gaussian((q[0], q[1], 0.0, 0.0), 0.0, 0.8, small_grid)
    assert np.all(np.abs(g.amplitudes.imag) == 0)
    assert np.unravel_index(np.abs(g.amplitudes).argmax(), g.amplitudes.shape) == (60, 70)
    assert abs(g.amplitudes[60, 70]) == pytest.approx(1.0)
    assert g.norm() ** 2 == pytest.approx(math.pi / (2 * 0.8), rel=1e-12)
    moving = sc.frozen_gaussian((q[0], q[1], 2.0, -1.0), 0.4, 0.8, small_grid)
    assert np.allclose(np.abs(moving.amplitudes), g.amplitudes)
    with pytest.raises(ValueError):
        sc.frozen_gaussian((0, 0, 0, 0), 0.0, 0.0, small_grid)


def test_tube_phase_total_advance(catalog):
    orbit = scale_orbit(catalog[3], 12.0)
    full = orbit.unfolded()
    theta = sc.tube_phase(full, orbit.dt, orbit.maslov_index * orbit.repetitions, 1.0)
    k = orbit.repetitions
    expect = k * (orbit.action - 0.5 * math.pi * orbit.maslov_index)
    assert theta[0] == 0.0
    assert theta[-1] == pytest.approx(expect, rel=1e-7)


@pytest.fixture(scope="module")
def level17(catalog):
    orbit = catalog[1]
    (lv,) = [x for x in sc.bs_levels(orbit, (15.0, 19.0))][:1]
    return orbit, lv


def test_tube_function(catalog, small_grid, level17):
    orbit, lv = level17
    alpha = sc.initial_alpha(scale_orbit(orbit, lv.energy))
    tube = sc.build_tube(orbit, lv, alpha, small_grid)
    assert tube.grid.norm() == pytest.approx(1.0, abs=1e-12)
    assert a1_asymmetry(tube.grid) <= 1e-10
    mean, disp = energy_moments(tube.grid)
    assert (mean, disp) == (pytest.approx(tube.mean_energy), pytest.approx(tube.dispersion))
    assert abs(tube.mean_energy - lv.energy) <= 3 * tube.dispersion


def test_tube_rejects_off_level_energy(small_grid, level17):
    orbit, lv = level17
    off = BSLevel(lv.orbit_id, lv.n, lv.energy * 1.01)
    with pytest.raises(ValueError, match="close"):
        sc.build_tube(orbit, off, 1.0, small_grid)
    with pytest.raises(ValueError):
        sc.build_tube(orbit, lv, -1.0, small_grid)


def test_optimized_width_is_local_minimum(small_grid, level17):
    orbit, lv = level17
    tube = sc.optimize_tube(orbit, lv, small_grid)
    assert tube.warning == ""
    for f in (0.5, 2.0):
        other = sc.build_tube(orbit, lv, tube.alpha * f, small_grid)
        assert tube.dispersion <= other.dispersion
    assert sc.optimize_alpha(orbit, lv, small_grid) == pytest.approx(tube.alpha)


def test_transverse_frequency_positive(catalog):
    for orbit in catalog[:6]:
        w = sc.transverse_frequency(orbit)
        assert w > 0
        # curvature scales like the potential's quadratic part, E^(1/2)
        assert sc.transverse_frequency(scale_orbit(orbit, 16.0)) == pytest.approx(2 * w, rel=1e-6)
