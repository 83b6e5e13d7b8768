"""Sweep experiments: angle robustness for pattern / polarization modes and
the antenna-count comparison against a fixed-mode baseline."""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from . import __version__
from .arrays import default_codebook, load_codebook
from .beamforming import PowerModel, SolverError, power_consumption
from .optimizer import ArchSpec, Objective, OptimizeOptions, joint_optimize
from .scenario import Scenario, ScenarioConfig, build_scenario

KNOWN_ARCHITECTURES = ("pattern_ra", "polar_ra", "ra", "da", "oa",
                       "fixed_polar", "conventional")

CSV_HEADER = "sweep,seed,arch,objective,value,evals,pre_factor_value,power_w"


@dataclass(frozen=True)
class SweepSpec:
    """One sweep experiment: what varies, over which grid, and which
    architectures compete on identical channels."""

    sweep_kind: str                       # "angle" | "antennas"
    grid: tuple
    seeds_per_point: int = 50
    objective_kind: str = "radar_scnr"
    architectures: tuple = ("pattern_ra", "da", "oa")
    pinned_radius: float = 45.0           # meters, angle sweeps only
    nuisance: str = "per_seed"            # "per_seed" | "fixed" (drawn once from master seed)
    force_aligned: bool = False           # insert the clutter angle into the grid
    mode_scope: str = None                # None -> scenario config's scope
    precoding: ArchSpec = ArchSpec()
    solver_tol: float = None
    solver_iters: int = None

    def __post_init__(self):
        if self.sweep_kind not in ("angle", "antennas"):
            raise ValueError(f"unknown sweep kind {self.sweep_kind!r}")
        grid = tuple(self.grid)
        object.__setattr__(self, "grid", grid)
        if len(grid) < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid must be non-empty and strictly increasing")
        if self.seeds_per_point < 1:
            raise ValueError("seeds_per_point must be >= 1")
        object.__setattr__(self, "architectures", tuple(self.architectures))
        unknown = set(self.architectures) - set(KNOWN_ARCHITECTURES)
        if unknown:
            raise ValueError(f"unknown architectures {sorted(unknown)}")
        if self.nuisance not in ("per_seed", "fixed"):
            raise ValueError(f"unknown nuisance policy {self.nuisance!r}")


class SweepRow(NamedTuple):
    sweep: float
    seed: int
    arch: str
    objective: str
    value: float
    evals: int
    pre_factor_value: float
    power_w: float


@dataclass
class SweepResult:
    """Raw per-cell rows plus the spec/config that produced them."""

    spec: SweepSpec
    config: ScenarioConfig
    rows: list
    grid: tuple     # actual grid used (may include a forced aligned point)

    def values(self, arch: str, sweep_value) -> np.ndarray:
        return np.array([r.value for r in self.rows
                         if r.arch == arch and r.sweep == sweep_value])

    def aggregates(self) -> dict:
        """Median and quartiles keyed by (sweep value, arch)."""
        out = {}
        for sweep_value in self.grid:
            for arch in self.spec.architectures:
                vals = self.values(arch, sweep_value)
                if vals.size:
                    out[(sweep_value, arch)] = {
                        "median": float(np.median(vals)),
                        "q25": float(np.percentile(vals, 25)),
                        "q75": float(np.percentile(vals, 75)),
                    }
        return out

    def median_curve(self, arch: str) -> np.ndarray:
        return np.array([np.median(self.values(arch, v)) for v in self.grid])


def default_pattern_angle_spec(n_points: int = 25, objective: str = "radar_scnr") -> SweepSpec:
    grid = tuple(np.linspace(-60.0, 60.0, n_points).tolist())
    return SweepSpec(sweep_kind="angle", grid=grid, objective_kind=objective,
                     architectures=("pattern_ra", "da", "oa"))


def default_polar_angle_spec(n_points: int = 13, objective: str = "radar_scnr") -> SweepSpec:
    grid = tuple(np.linspace(-60.0, 60.0, n_points).tolist())
    return SweepSpec(sweep_kind="angle", grid=grid, objective_kind=objective,
                     architectures=("polar_ra", "fixed_polar"),
                     nuisance="fixed", force_aligned=True, mode_scope="per_element")


def default_antenna_spec(objective: str = "radar_scnr") -> SweepSpec:
    return SweepSpec(sweep_kind="antennas", grid=(2, 4, 8, 16, 32),
                     objective_kind=objective, architectures=("ra", "conventional"))


# ---------------------------------------------------------------------------
# Architecture -> search-space plans
# ---------------------------------------------------------------------------

def _omni_index(codebook) -> int:
    for i, p in enumerate(codebook.patterns):
        if p.kind == "omni":
            return i
    raise ValueError("codebook has no omni pattern")


def _da_index(codebook) -> int:
    """The fixed directional baseline: boresight nearest broadside."""
    directional = [(abs(p.boresight), i) for i, p in enumerate(codebook.patterns)
                   if p.kind == "directional"]
    if not directional:
        raise ValueError("codebook has no directional pattern")
    return min(directional)[1]


def arch_options(arch: str, codebook, scope: str) -> OptimizeOptions:
    """Map an architecture label to its mode search space.

    Fixed baselines are encoded as one-point spaces so every architecture
    flows through the same evaluation path.
    """
    omni, h_pol = _omni_index(codebook), 0
    if arch == "pattern_ra":
        return OptimizeOptions(scope=scope, families=("pattern",), fixed_polar=h_pol,
                               fixed_pattern=omni)
    if arch == "polar_ra":
        return OptimizeOptions(scope=scope, families=("polar",), fixed_pattern=omni,
                               fixed_polar=h_pol)
    if arch == "ra":
        return OptimizeOptions(scope=scope, families=("pattern", "polar"),
                               fixed_pattern=omni, fixed_polar=h_pol)
    if arch == "da":
        fixed = (_da_index(codebook),)
        return OptimizeOptions(scope="array_uniform", families=("pattern",),
                               pattern_choices=fixed, fixed_polar=h_pol,
                               strategy="exhaustive")
    if arch in ("oa", "fixed_polar", "conventional"):
        return OptimizeOptions(scope="array_uniform", families=("pattern",),
                               pattern_choices=(omni,), fixed_polar=h_pol,
                               strategy="exhaustive")
    raise ValueError(f"unknown architecture {arch!r}")


@lru_cache(maxsize=8)
def _get_codebook(path):
    return load_codebook(path) if path else default_codebook()


@lru_cache(maxsize=8)
def _master_scenario(config: ScenarioConfig) -> Scenario:
    return build_scenario(config, codebook=_get_codebook(config.codebook_path))


def _cell_seed(master_seed: int, grid_idx: int, seed_idx: int) -> int:
    ss = np.random.SeedSequence([int(master_seed), int(grid_idx), int(seed_idx)])
    return int(ss.generate_state(1, np.uint64)[0])


def _objective(spec: SweepSpec) -> Objective:
    kwargs = {}
    if spec.solver_tol is not None:
        kwargs["tol"] = spec.solver_tol
    if spec.solver_iters is not None:
        kwargs["max_iters"] = spec.solver_iters
    return Objective(kind=spec.objective_kind, **kwargs)


def _row_power(spec: SweepSpec, num_elements: int, stack) -> float:
    model = PowerModel()
    if spec.precoding.kind == "fully_digital":
        return power_consumption(model, "fully_digital", num_elements)
    return power_consumption(model, "tri_hybrid", num_elements,
                             spec.precoding.num_rf_chains, stack.mask)


def _run_architectures(scenario: Scenario, spec: SweepSpec, sweep_value, seed_idx: int) -> list:
    objective = _objective(spec)
    scope = spec.mode_scope or scenario.config.mode_scope
    rows = []
    for arch in spec.architectures:
        options = arch_options(arch, scenario.codebook, scope)
        report, stack = joint_optimize(objective, scenario, arch=spec.precoding,
                                       options=options)
        rows.append(SweepRow(sweep=sweep_value, seed=seed_idx, arch=arch,
                             objective=spec.objective_kind,
                             value=report.post_factor_value,
                             evals=report.evaluations,
                             pre_factor_value=report.best_value,
                             power_w=_row_power(spec, scenario.geometry.num_elements, stack)))
    return rows


def _angle_cell(args) -> list:
    config, spec, grid_idx, angle_deg, seed_idx = args
    codebook = _get_codebook(config.codebook_path)
    cell_cfg = dataclasses.replace(config, seed=_cell_seed(config.seed, grid_idx, seed_idx))
    scenario = build_scenario(cell_cfg, codebook=codebook)
    if spec.nuisance == "fixed":
        scenario = scenario.with_positions_from(_master_scenario(config))
    theta = float(np.deg2rad(angle_deg))
    if spec.objective_kind == "radar_scnr":
        scenario = scenario.pin_target(theta, r=spec.pinned_radius)
    else:
        users = list(scenario.users)
        users[0] = dataclasses.replace(users[0].repinned(theta), r=spec.pinned_radius)
        scenario = dataclasses.replace(scenario, users=tuple(users))
    try:
        return _run_architectures(scenario, spec, angle_deg, seed_idx)
    except SolverError as exc:
        raise SolverError(f"grid angle {angle_deg} deg, seed {seed_idx}: {exc}") from exc


def _antenna_cell(args) -> list:
    config, spec, grid_idx, num_elements, seed_idx = args
    codebook = _get_codebook(config.codebook_path)
    cell_cfg = dataclasses.replace(config, num_elements=int(num_elements),
                                   seed=_cell_seed(config.seed, grid_idx, seed_idx))
    scenario = build_scenario(cell_cfg, codebook=codebook)
    try:
        return _run_architectures(scenario, spec, int(num_elements), seed_idx)
    except SolverError as exc:
        raise SolverError(f"grid N={num_elements}, seed {seed_idx}: {exc}") from exc


def _map_cells(worker, tasks, n_jobs: int) -> list:
    if n_jobs == 1:
        results = [worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(worker, tasks, chunksize=4))
    return [row for cell in results for row in cell]


def sweep_angle(config: ScenarioConfig, spec: SweepSpec, n_jobs: int = 1) -> SweepResult:
    """Pin the target (or probed user) at each grid angle at the fixed sweep
    radius and compare the configured architectures on identical channels."""
    if spec.sweep_kind != "angle":
        raise ValueError("spec.sweep_kind must be 'angle'")
    grid = list(spec.grid)
    if spec.force_aligned:
        master = _master_scenario(config)
        if master.clutter:
            aligned = float(np.rad2deg(master.clutter[0].theta))
            if aligned not in grid:
                grid = sorted(grid + [aligned])
    tasks = [(config, spec, gi, angle, si)
             for gi, angle in enumerate(grid)
             for si in range(spec.seeds_per_point)]
    rows = _map_cells(_angle_cell, tasks, n_jobs)
    return SweepResult(spec=spec, config=config, rows=rows, grid=tuple(grid))


def sweep_antennas(config: ScenarioConfig, spec: SweepSpec, n_jobs: int = 1) -> SweepResult:
    """Scale the array over the N grid and compare the reconfigurable pipeline
    against the fixed-mode baseline, seed by seed."""
    if spec.sweep_kind != "antennas":
        raise ValueError("spec.sweep_kind must be 'antennas'")
    tasks = [(config, spec, gi, n, si)
             for gi, n in enumerate(spec.grid)
             for si in range(spec.seeds_per_point)]
    rows = _map_cells(_antenna_cell, tasks, n_jobs)
    return SweepResult(spec=spec, config=config, rows=rows, grid=tuple(spec.grid))


def run_sweep(config: ScenarioConfig, spec: SweepSpec, n_jobs: int = 1) -> SweepResult:
    if spec.sweep_kind == "angle":
        return sweep_angle(config, spec, n_jobs=n_jobs)
    return sweep_antennas(config, spec, n_jobs=n_jobs)


# ---------------------------------------------------------------------------
# Antenna-count matching report
# ---------------------------------------------------------------------------

def antenna_matching_report(result: SweepResult, ra_arch: str = "ra",
                            conv_arch: str = "conventional",
                            rel_tol: float = 0.05) -> dict:
    """Per grid point, the largest conventional array whose median metric the
    reconfigurable array matches within ``rel_tol``, and the headline ratios."""
    grid = list(result.grid)
    med_ra = {n: float(np.median(result.values(ra_arch, n))) for n in grid}
    med_conv = {n: float(np.median(result.values(conv_arch, n))) for n in grid}
    matched = {}
    for n_ra in grid:
        ok = [nc for nc in grid if med_ra[n_ra] >= (1.0 - rel_tol) * med_conv[nc]]
        matched[n_ra] = max(ok) if ok else None
    ratios = {n: (n / matched[n]) if matched[n] else None for n in grid}
    usable = [r for r in ratios.values() if r is not None]
    match_4x = [n for n in grid if 4 * n in grid and matched[n] is not None
                and matched[n] >= 4 * n]
    return {
        "matched_conventional_n": {str(n): matched[n] for n in grid},
        "antenna_ratio": {str(n): ratios[n] for n in grid},
        "best_ratio": min(usable) if usable else None,
        "smallest_n_matching_4x": min(match_4x) if match_4x else None,
        "ratio_le_half": bool(usable and min(usable) <= 0.5),
        "ratio_le_quarter": bool(usable and min(usable) <= 0.25),
    }


# ---------------------------------------------------------------------------
# CSV + metadata output
# ---------------------------------------------------------------------------

def write_csv(result: SweepResult, path) -> None:
    """Deterministic plain CSV, one row per (sweep value, seed, architecture)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in result.rows:
            fh.write(f"{r.sweep!r},{r.seed},{r.arch},{r.objective},{r.value!r},"
                     f"{r.evals},{r.pre_factor_value!r},{r.power_w!r}\n")


def write_metadata(result: SweepResult, csv_path, extra: dict = None) -> str:
    """Sidecar JSON with the full effective configuration and aggregates;
    sufficient to reproduce the CSV exactly."""
    meta = {
        "version": __version__,
        "config": _config_dict(result.config),
        "spec": _spec_dict(result.spec),
        "grid": list(result.grid),
        "rows": len(result.rows),
        "aggregates": {f"{sweep}|{arch}": agg
                       for (sweep, arch), agg in sorted(result.aggregates().items(),
                                                        key=lambda kv: (kv[0][1], kv[0][0]))},
    }
    if result.spec.sweep_kind == "antennas" and {"ra", "conventional"} <= set(
            result.spec.architectures):
        meta["antenna_report"] = antenna_matching_report(result)
    if extra:
        meta.update(extra)
    meta_path = f"{csv_path}.meta.json"
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return meta_path


def _config_dict(config: ScenarioConfig) -> dict:
    out = dataclasses.asdict(config)
    out["angle_range"] = list(config.angle_range)
    out["radius_range"] = list(config.radius_range)
    return out


def _spec_dict(spec: SweepSpec) -> dict:
    out = dataclasses.asdict(spec)
    out["grid"] = list(spec.grid)
    out["architectures"] = list(spec.architectures)
    return out
