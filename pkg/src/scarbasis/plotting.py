"""Figures written alongside the report tables (non-interactive backend)."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

DPI = 120


def _save(fig, path):
    fig.savefig(path, dpi=DPI, bbox_inches="tight")
    plt.close(fig)
    return Path(path)


def plot_densities(states, energies, extent, path, potential=None, level=None):
    """Probability densities of eigenstates on a panel grid."""
    n = len(states)
    if n == 0:
        return None
    cols = min(n, 3)
    rows = math.ceil(n / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 3.2 * rows), squeeze=False)
    for ax in axes.flat[n:]:
        ax.axis("off")
    for ax, psi, e in zip(axes.flat, states, energies):
        ax.imshow(psi.density(), origin="lower", extent=extent, cmap="magma")
        if potential is not None and level is not None:
            ax.contour(potential, levels=[level], extent=extent, colors="w", linewidths=0.5)
        ax.set_title(f"E = {e:.5f}", fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    return _save(fig, path)


def plot_reconstruction(entries_by_state, path):
    """Cumulative squared projection against the number of scar functions."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for idx, entries in entries_by_state.items():
        if not entries:
            continue
        k = np.arange(1, len(entries) + 1)
        ax.plot(k, [e.cumulative for e in entries], marker="o", label=f"state {idx}")
    ax.set_xlabel("scar functions used")
    ax.set_ylabel("squared projection")
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_intensity(spectrum, bs_energy, path, title=""):
    """Smoothed intensity spectrum in linear and logarithmic scale."""
    fig, (lin, lg) = plt.subplots(1, 2, figsize=(9, 3.2))
    for ax in (lin, lg):
        ax.plot(spectrum.energies, spectrum.curve, lw=1)
        ax.axvline(bs_energy, color="k", ls="--", lw=0.7)
        ax.set_xlabel("E")
    lin.set_ylabel("I(E)")
    lg.set_yscale("log")
    lines = spectrum.line_intensities > 0
    lg.plot(spectrum.line_energies[lines], spectrum.line_intensities[lines], ".", ms=3)
    lo = max(spectrum.curve.max() * 1e-8, 1e-300)
    lg.set_ylim(lo, spectrum.curve.max() * 2)
    if title:
        fig.suptitle(title, fontsize=10)
    return _save(fig, path)


def plot_selection(trace, threshold, path):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot([t.step for t in trace], [t.dispersion for t in trace], marker=".")
    ax.axhline(threshold, color="r", lw=0.7, label="threshold")
    ax.set_xlabel("selection step")
    ax.set_ylabel("energy dispersion")
    ax.set_yscale("log")
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_errors(errors, path):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    e = [x.energy for x in errors]
    ax.semilogy(e, [max(x.energy_error, 1e-16) for x in errors], "o", label="energy")
    ax.semilogy(e, [max(x.state_error, 1e-16) for x in errors], "s", label="state")
    ax.set_xlabel("E")
    ax.set_ylabel("error")
    ax.legend(fontsize=7)
    return _save(fig, path)


def render_report(pipeline, spectra, recon, out):
    """Write every report figure for a finished pipeline run."""
    out = Path(out)
    st = pipeline.state
    cfg = pipeline.config
    grid = cfg.grid
    L = grid.half_extent
    extent = (-L, L - grid.dx, -L, L - grid.dx)
    files = [plot_densities(st.result.grid_states, st.result.energies, extent,
                            out / "densities.png", grid.potential(cfg.params), cfg.center)]
    files.append(plot_reconstruction(recon, out / "reconstruction.png"))
    files.append(plot_selection(st.basis.trace, cfg.job.threshold, out / "selection.png"))
    if st.errors:
        files.append(plot_errors(st.errors, out / "errors.png"))
    for s in st.scars:
        files.append(plot_intensity(spectra[s.label], s.level.energy,
                                    out / f"intensity_{s.level.orbit_id}_{s.level.n}.png", s.label))
    return [f for f in files if f is not None]
