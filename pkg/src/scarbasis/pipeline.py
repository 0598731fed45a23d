"""Stage orchestration with on-disk caching and report emission.

Stages run in the order orbits, quantize, tubes, scars, select, solve,
compare, report.  Expensive products (orbit catalog searches, tube and scar
functions, oracle diagonalizations) are cached under ``<output>/cache`` with
keys derived from a hash of the configuration fields they depend on.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft

from . import __version__
from .catalog import load_catalog, save_catalog
from .classical import InsufficientCatalogError, search_catalog, select_orbit_set
from .model import ModelParams, counting_function, scales
from .oracle import (OracleBasisSpec, OracleResult, diagonalize_oracle, solve_oracle,
                     trace_optimal_omega)
from .quantum import (DEFAULT_DT, GridSpec, GridWavefunction, ScarFunction, build_scar,
                      converged_time_step, read_wavefunction, write_wavefunction)
from .semiclassical import (BSLevel, RejectedLevelError, TubeFunction, bs_levels,
                            optimize_tube)
from .spectral import (WindowJob, decay_slopes, error_metrics, gram_schmidt_selective,
                       intensity_spectrum, reconstruction_report, solve_window,
                       spectral_centroid)

log = logging.getLogger(__name__)

STAGES = ("orbits", "quantize", "tubes", "scars", "select", "solve", "compare", "report")
EXIT_CODES = {"config": 2, "orbits": 10, "quantize": 11, "tubes": 12, "scars": 13,
              "select": 14, "solve": 15, "compare": 16, "report": 17}
BUILTIN_CATALOG = Path(__file__).parent / "data" / "catalog_E1.json"


class StageError(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage

    @property
    def exit_code(self):
        return EXIT_CODES[self.stage]


@dataclass
class PipelineConfig:
    """Run configuration.  Energies in units of the model Hamiltonian, times
    in matching units, lengths in grid coordinates."""
    hbar: float = 1.0
    coupling: float = 0.5
    quartic: float = 1.0 / 400.0
    center: float = 17.0
    half_width: float = 1.0
    grid_points: int = 256
    grid_half_extent: float = 15.0
    catalog: str = "builtin"          # "builtin", "search", or a catalog file path
    catalog_energy: float = 1.0
    search_t_max: float = 5.5
    search_seeds: int = 800
    orbit_count: int | None = None    # None: shortest prefix covering t_H
    oracle_omega: float | None = None  # None: trace-optimal at trace_cutoff
    oracle_quanta: int = 152
    oracle_growth: float = 1.2
    trace_cutoff: int = 40
    dt: float = DEFAULT_DT
    dt_check: bool = True
    ehrenfest_time: float | None = None
    threshold: float | None = None
    lorentz_width: float = 0.4
    reconstruction_count: int | None = None
    compare: bool = True
    plots: bool = True
    output: str = "scarbasis-out"

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.hbar, self.coupling, self.quartic)

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.grid_points, self.grid_half_extent, self.hbar)

    @property
    def job(self) -> WindowJob:
        return WindowJob.centered(self.center, self.half_width, self.params, self.threshold)

    def validate(self):
        self.params  # raises on bad model values
        self.grid
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        hi = self.job.enlarged[1]
        if not self.grid.covers(hi, self.params):
            raise ValueError(f"grid half extent {self.grid_half_extent} too small for E={hi:.4g}")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def content_key(*parts) -> str:
    blob = json.dumps([__version__] + list(parts), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_table(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


@dataclass
class RunState:
    catalog: list = None
    orbits: list = None
    levels: list = None
    tubes: dict = field(default_factory=dict)
    scars: list = None
    basis: object = None
    result: object = None
    oracle: OracleResult = None
    errors: list = None
    dt_used: float = None


class Pipeline:
    def __init__(self, config: PipelineConfig, threads: int = 1):
        self.config = config.validate()
        self.threads = max(1, int(threads))
        self.out = Path(config.output)
        self.cache = self.out / "cache"
        self.state = RunState()
        self.computed = []  # names of cache misses, for diagnostics

    # -- helpers ---------------------------------------------------------
    def _model_key(self):
        c = self.config
        return [c.hbar, c.coupling, c.quartic]

    def _catalog_key(self):
        c = self.config
        if c.catalog == "search":
            src = ["search", c.catalog_energy, c.search_t_max, c.search_seeds]
        else:
            path = BUILTIN_CATALOG if c.catalog == "builtin" else Path(c.catalog)
            src = [hashlib.sha256(path.read_bytes()).hexdigest()]
        return content_key("catalog", self._model_key(), src)

    def _grid_key(self):
        c = self.config
        return [c.grid_points, c.grid_half_extent]

    def _map(self, fn, items):
        if self.threads == 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(self.threads) as ex:
            return list(ex.map(fn, items))

    # -- stages ----------------------------------------------------------
    def stage_orbits(self):
        c = self.config
        if c.catalog == "search":
            path = self.cache / f"catalog-{self._catalog_key()}.json"
            if path.exists():
                catalog = load_catalog(path)
            else:
                self.computed.append("catalog")
                catalog = search_catalog(c.catalog_energy, c.params, t_max=c.search_t_max,
                                         n_seeds=c.search_seeds)
                self.cache.mkdir(parents=True, exist_ok=True)
                save_catalog(path, catalog)
        else:
            catalog = load_catalog(BUILTIN_CATALOG if c.catalog == "builtin" else c.catalog)
        try:
            chosen = select_orbit_set(catalog, c.center, c.params, c.orbit_count)
        except InsufficientCatalogError as err:
            raise StageError("orbits", str(err)) from err
        self.state.catalog, self.state.orbits = catalog, chosen
        write_table(self.out / "orbits.tsv",
                    ["id", "symmetry_class", "period", "action", "maslov", "stability", "bounces"],
                    [(o.id, o.symmetry_class, o.period, o.action, o.maslov_index, o.stability,
                      o.bounces) for o in chosen])
        return chosen

    def stage_quantize(self):
        lo, hi = self.config.job.enlarged
        levels = []
        for o in self.state.orbits:
            levels += bs_levels(o, (lo, hi), self.config.params)
        levels.sort(key=lambda l: l.energy)
        self.state.levels = levels
        write_table(self.out / "levels.tsv", ["orbit_id", "n", "energy"],
                    [(l.orbit_id, l.n, l.energy) for l in levels])
        return levels

    def _level_key(self, kind, level, extra=()):
        return content_key(kind, self._catalog_key(), self._grid_key(), self._model_key(),
                           self.config.orbit_count, level.orbit_id, level.n, list(extra))

    def _orbit(self, orbit_id):
        return next(o for o in self.state.orbits if o.id == orbit_id)

    def _tube(self, level) -> TubeFunction | None:
        key = self._level_key("tube", level)
        base = self.cache / "tubes" / key
        if base.with_suffix(".json").exists():
            meta = json.loads(base.with_suffix(".json").read_text())
            if meta.get("rejected"):
                return None
            psi, hdr = read_wavefunction(base.with_suffix(".bin"))
            return TubeFunction(level, meta["alpha"], psi, hdr["mean_energy"], hdr["dispersion"],
                                meta.get("warning", ""))
        self.computed.append(f"tube {level.label}")
        base.parent.mkdir(parents=True, exist_ok=True)
        try:
            tube = optimize_tube(self._orbit(level.orbit_id), level, self.config.grid,
                                 self.config.params)
        except RejectedLevelError as err:
            log.info("%s", err)
            base.with_suffix(".json").write_text(json.dumps({"rejected": True}))
            return None
        write_wavefunction(base.with_suffix(".bin"), tube.grid, level.orbit_id, level.n,
                           tube.mean_energy, tube.dispersion)
        base.with_suffix(".json").write_text(json.dumps({"alpha": tube.alpha, "warning": tube.warning}))
        return tube

    def stage_tubes(self):
        with scipy.fft.set_workers(1 if self.threads > 1 else -1):
            tubes = self._map(self._tube, self.state.levels)
        self.state.tubes = {l: t for l, t in zip(self.state.levels, tubes) if t is not None}
        write_table(self.out / "tubes.tsv",
                    ["orbit_id", "n", "bs_energy", "alpha", "mean_energy", "dispersion", "warning"],
                    [(l.orbit_id, l.n, l.energy, t.alpha, t.mean_energy, t.dispersion, t.warning)
                     for l, t in self.state.tubes.items()])
        return self.state.tubes

    def ehrenfest_time(self):
        c = self.config
        return c.ehrenfest_time if c.ehrenfest_time is not None else scales(c.center, c.params).ehrenfest

    def _scar(self, item) -> ScarFunction:
        level, tube = item
        t_e = self.ehrenfest_time()
        key = self._level_key("scar", level, [t_e, self.state.dt_used])
        path = self.cache / "scars" / f"{key}.bin"
        if path.exists():
            psi, hdr = read_wavefunction(path)
            meta = json.loads(path.with_suffix(".json").read_text())
            return ScarFunction(level, psi, hdr["mean_energy"], hdr["dispersion"], t_e,
                                meta["tube_dispersion"], meta.get("warning", ""))
        self.computed.append(f"scar {level.label}")
        path.parent.mkdir(parents=True, exist_ok=True)
        scar = build_scar(tube, t_e, self.state.dt_used, self.config.params)
        write_wavefunction(path, scar.grid, level.orbit_id, level.n, scar.mean_energy, scar.dispersion)
        path.with_suffix(".json").write_text(json.dumps(
            {"tube_dispersion": scar.tube_dispersion, "warning": scar.warning}))
        return scar

    def stage_scars(self):
        c = self.config
        items = list(self.state.tubes.items())
        if not items:
            raise StageError("scars", "no tube functions to propagate")
        dt = c.dt
        if c.dt_check:
            key = content_key("dt", self._level_key("dtcheck", items[0][0]), c.dt)
            marker = self.cache / "dt" / f"{key}.json"
            if marker.exists():
                dt = json.loads(marker.read_text())["dt"]
            else:
                self.computed.append("dt check")
                dt = converged_time_step(items[0][1].grid, 1.0, c.dt, c.params)
                marker.parent.mkdir(parents=True, exist_ok=True)
                marker.write_text(json.dumps({"dt": dt}))
        self.state.dt_used = dt
        with scipy.fft.set_workers(1 if self.threads > 1 else -1):
            scars = self._map(self._scar, items)
        self.state.scars = scars
        write_table(self.out / "scars.tsv",
                    ["orbit_id", "n", "bs_energy", "tube_dispersion", "mean_energy", "dispersion",
                     "ehrenfest_time", "dt", "warning"],
                    [(s.level.orbit_id, s.level.n, s.level.energy, s.tube_dispersion, s.mean_energy,
                      s.dispersion, s.ehrenfest_time_used, dt, s.warning) for s in scars])
        return scars

    def stage_select(self):
        basis = gram_schmidt_selective(self.state.scars, self.config.job, self.config.params)
        self.state.basis = basis
        write_table(self.out / "selection.tsv", ["step", "label", "dispersion"],
                    [(t.step, t.label, t.dispersion) for t in basis.trace])
        return basis

    def stage_solve(self):
        res = solve_window(self.state.basis, self.config.job, self.config.params)
        self.state.result = res
        write_table(self.out / "eigenvalues.tsv", ["index", "energy", "residual"],
                    [(i, e, r) for i, (e, r) in enumerate(zip(res.energies, res.residuals))])
        states_dir = self.out / "states"
        states_dir.mkdir(parents=True, exist_ok=True)
        for i, psi in enumerate(res.grid_states):
            write_wavefunction(states_dir / f"state_{i:03d}.bin", psi, 0, i, res.energies[i],
                               float("nan"))
        return res

    def oracle(self) -> OracleResult:
        if self.state.oracle is not None:
            return self.state.oracle
        c = self.config
        omega = c.oracle_omega
        if omega is None:
            key = content_key("omega", self._model_key(), c.trace_cutoff)
            p = self.cache / "oracle" / f"omega-{key}.json"
            if p.exists():
                omega = json.loads(p.read_text())["omega"]
            else:
                omega = trace_optimal_omega(c.trace_cutoff, c.params, c.hbar)
                p.parent.mkdir(parents=True, exist_ok=True)
                p.write_text(json.dumps({"omega": omega}))
        spec = OracleBasisSpec(omega=omega, max_total_quanta=c.oracle_quanta, hbar=c.hbar,
                               size_limit=10 ** 9)
        key = content_key("oracle", self._model_key(), omega, c.oracle_quanta, c.oracle_growth)
        path = self.cache / "oracle" / f"oracle-{key}.npz"
        if path.exists():
            d = np.load(path)
            res = OracleResult(spec, d["energies"], d["states"], float(d["converged_below"]), c.params)
        else:
            self.computed.append("oracle")
            res = solve_oracle(spec, c.params, growth=c.oracle_growth)
            path.parent.mkdir(parents=True, exist_ok=True)
            np.savez(path, energies=res.energies, states=res.states,
                     converged_below=res.converged_below)
        write_table(self.out / "oracle_energies.tsv", ["index", "energy", "converged"],
                    [(i, e, int(e < res.converged_below)) for i, e in enumerate(res.energies)])
        self.state.oracle = res
        return res

    def stage_compare(self):
        ref = self.oracle()
        hi = self.config.job.enlarged[1]
        if hi > ref.converged_below:
            raise StageError("compare", f"oracle converged only below E={ref.converged_below:.4g}, "
                                        f"window reaches {hi:.4g}")
        errs = error_metrics(self.state.result, ref, self.config.params)
        self.state.errors = errs
        lo, hi = self.config.job.enlarged
        n_oracle = int(np.sum((ref.energies >= lo) & (ref.energies <= hi)))
        write_table(self.out / "comparison.tsv",
                    ["index", "energy", "oracle_index", "oracle_energy", "energy_error", "state_error"],
                    [(i, e.energy, e.oracle_index, e.oracle_energy, e.energy_error, e.state_error)
                     for i, e in enumerate(errs)])
        summary = {
            "window": list(self.config.job.window),
            "enlarged_window": [lo, hi],
            "bs_levels": len(self.state.levels),
            "candidates": len(self.state.scars),
            "selected": len(self.state.basis),
            "oracle_states_enlarged": n_oracle,
            "basis_ratio": len(self.state.basis) / n_oracle if n_oracle else float("nan"),
            "window_states": len(errs),
            "oracle_window_states": int(np.sum((ref.energies >= self.config.job.window[0])
                                               & (ref.energies <= self.config.job.window[1]))),
            "mean_energy_error": float(np.mean([e.energy_error for e in errs])) if errs else float("nan"),
            "mean_state_error": float(np.mean([e.state_error for e in errs])) if errs else float("nan"),
            "oracle_converged_below": ref.converged_below,
            "oracle_omega": ref.spec.omega,
            "oracle_size": ref.spec.size,
            "dt": self.state.dt_used,
        }
        (self.out / "summary.json").write_text(json.dumps(summary, indent=1))
        return errs

    def stage_report(self):
        """Intensity spectra, reconstructions and density grids."""
        c = self.config
        ref = self.oracle()
        rep = self.out / "report"
        rep.mkdir(parents=True, exist_ok=True)
        sc = scales(c.center, c.params)
        k_max = c.reconstruction_count or math.ceil(sc.heisenberg / sc.ehrenfest)
        spectra = {}
        rows = []
        for s in self.state.scars:
            sp = intensity_spectrum(s.grid, ref, c.lorentz_width)
            spectra[s.label] = sp
            tag = f"{s.level.orbit_id}_{s.level.n}"
            write_table(rep / f"intensity_lines_{tag}.tsv", ["energy", "intensity"],
                        zip(sp.line_energies, sp.line_intensities))
            write_table(rep / f"intensity_curve_{tag}.tsv", ["energy", "intensity", "log10_intensity"],
                        [(e, v, math.log10(v) if v > 0 else float("-inf"))
                         for e, v in zip(sp.energies, sp.curve)])
            lo_s, hi_s = decay_slopes(sp, s.level.energy)
            rows.append((s.level.orbit_id, s.level.n, s.level.energy, spectral_centroid(sp),
                         sp.line_energies[sp.line_intensities.argmax()], lo_s, hi_s))
        write_table(rep / "spectral_localization.tsv",
                    ["orbit_id", "n", "bs_energy", "centroid", "peak_energy", "slope_below", "slope_above"],
                    rows)
        recon = {}
        res = self.state.result
        for i, psi in enumerate(res.grid_states):
            entries = reconstruction_report(psi, self.state.scars, k_max)
            recon[i] = entries
            write_table(rep / f"reconstruction_{i:03d}.tsv", ["rank", "label", "overlap2", "cumulative"],
                        [(k + 1, e.label, e.overlap2, e.cumulative) for k, e in enumerate(entries)])
            np.save(rep / f"density_{i:03d}.npy", psi.normalized().density())
        if c.plots:
            from . import plotting
            plotting.render_report(self, spectra, recon, rep)
        return recon

    # -- driver ----------------------------------------------------------
    def run(self, until: str = "report"):
        if until == "all":
            until = "report"
        if until not in STAGES:
            raise ValueError(f"unknown stage {until!r}")
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "config.json").write_text(json.dumps(self.config.to_dict(), indent=1))
        for name in STAGES[:STAGES.index(until) + 1]:
            if name in ("compare", "report") and not self.config.compare:
                log.info("skipping %s (comparison disabled)", name)
                continue
            log.info("stage %s", name)
            try:
                getattr(self, f"stage_{name}")()
            except StageError:
                raise
            except Exception as err:
                raise StageError(name, f"{type(err).__name__}: {err}") from err
        return self.state


def run_pipeline(config: PipelineConfig, until: str = "report", threads: int = 1) -> RunState:
    return Pipeline(config, threads).run(until)


DESK_CONFIG = PipelineConfig()
FULL_CONFIG = PipelineConfig(center=106.5, half_width=1.0, grid_points=512, grid_half_extent=22.0,
                              orbit_count=17, oracle_quanta=280, output="scarbasis-full")
