"""Run configuration: JSON schema, flag overrides, and invariant validation."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass

import numpy as np

from .optimizer import ArchSpec, Objective, OptimizeOptions, OBJECTIVE_KINDS
from .scenario import ScenarioConfig
from .sweeps import (
    SweepSpec,
    default_antenna_spec,
    default_pattern_angle_spec,
    default_polar_angle_spec,
)


class ConfigError(Exception):
    """Invalid configuration; carries one diagnostic per failing field."""

    def __init__(self, diagnostics):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


def default_config() -> dict:
    """The shipped defaults; every file/flag setting overlays this."""
    return {
        "scenario": {
            "n_elements": 8,
            "spacing_wl": 0.5,
            "n_users": 2,
            "n_clutter": 2,
            "n_paths": 5,
            "angle_range_deg": [-60.0, 60.0],
            "radius_range_m": [30.0, 60.0],
            "path_loss": {"c0_db": 30.0, "d0_m": 1.0, "exponent": 2.2},
            "power_w": 1.0,
            "noise_w": 1e-11,
            "target_reflectivity_db": 0.0,
            "clutter_reflectivity_db": 10.0,
            "cross_polar_var": 0.3,
            "path_decay_db": 3.0,
            "angle_spread_deg": 10.0,
            "angle_spread_max_deg": 30.0,
            "mode_scope": "array_uniform",
            "seed": 0,
            "codebook": None,
        },
        "objective": {"kind": "radar_scnr", "max_iters": 300, "tol": 1e-10},
        "arch": {"kind": "fully_digital", "n_rf": 2, "connectivity": "fully"},
        "search": {"scope": None, "families": ["pattern", "polar"],
                   "strategy": "auto", "max_cycles": 8, "warm_start": True},
        "sweep": None,
        "output": None,
        "parallel": None,   # None -> all available cores
    }


def default_sweep_section(kind: str, family: str = "pattern") -> dict:
    return {
        "kind": kind,
        "family": family,
        "grid": None,
        "n_points": 25 if family == "pattern" else 13,
        "seeds_per_point": 50,
        "architectures": None,
        "pinned_radius_m": 45.0,
        "nuisance": None,
        "force_aligned": None,
    }


def load_config_file(path) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: "
                          f"{exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def merge_config(base: dict, overlay: dict) -> dict:
    """Recursive dict overlay; ``overlay`` wins on every set key."""
    out = copy.deepcopy(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge_config(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def effective_config(file_data: dict = None, overrides: dict = None) -> dict:
    """defaults <- config file <- CLI flags, in increasing precedence."""
    data = default_config()
    for overlay in (file_data, overrides):
        if overlay:
            if "sweep" in overlay and overlay["sweep"] is not None and data.get("sweep") is None:
                data["sweep"] = default_sweep_section(
                    overlay["sweep"].get("kind", "angle"),
                    overlay["sweep"].get("family", "pattern"))
            data = merge_config(data, overlay)
    return data


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

_TOP_KEYS = {"scenario", "objective", "arch", "search", "sweep", "output", "parallel"}


def validate_config(data: dict) -> list:
    """Check every invariant of the referenced types; returns diagnostics,
    each naming the failing field."""
    diags = []
    for key in data:
        if key not in _TOP_KEYS:
            diags.append(f"{key}: unknown section")

    sc = data.get("scenario", {})
    rr = sc.get("radius_range_m", [30.0, 60.0])
    if not (isinstance(rr, (list, tuple)) and len(rr) == 2):
        diags.append("scenario.radius_range_m: must be a [min, max] pair")
    elif rr[0] > rr[1]:
        diags.append(f"scenario.radius_range_m: lower bound {rr[0]} exceeds upper bound {rr[1]}")
    ar = sc.get("angle_range_deg", [-60.0, 60.0])
    if not (isinstance(ar, (list, tuple)) and len(ar) == 2):
        diags.append("scenario.angle_range_deg: must be a [min, max] pair")
    elif ar[0] > ar[1]:
        diags.append(f"scenario.angle_range_deg: lower bound {ar[0]} exceeds upper bound {ar[1]}")
    try:
        scenario_config(data)
    except ConfigError as exc:
        diags.extend(d for d in exc.diagnostics if d not in diags)
    except ValueError as exc:
        diags.append(f"scenario: {exc}")

    obj = data.get("objective", {})
    if obj.get("kind", "radar_scnr") not in OBJECTIVE_KINDS:
        diags.append(f"objective.kind: must be one of {list(OBJECTIVE_KINDS)}")
    if obj.get("tol", 1e-10) <= 0:
        diags.append("objective.tol: must be > 0")
    if obj.get("max_iters", 300) < 1:
        diags.append("objective.max_iters: must be >= 1")

    arch = data.get("arch", {})
    kind = arch.get("kind", "fully_digital")
    if kind not in ("fully_digital", "tri_hybrid"):
        diags.append("arch.kind: must be fully_digital or tri_hybrid")
    conn = arch.get("connectivity", "fully")
    if conn not in ("fully", "sub", "dynamic"):
        diags.append("arch.connectivity: must be fully, sub, or dynamic")
    n_rf = arch.get("n_rf", 2)
    n_elem = sc.get("n_elements", 8)
    if not isinstance(n_rf, int) or n_rf < 1:
        diags.append("arch.n_rf: must be a positive integer")
    elif isinstance(n_elem, int) and n_rf > n_elem:
        diags.append(f"arch.n_rf: {n_rf} exceeds n_elements {n_elem}")
    elif conn == "sub" and isinstance(n_elem, int) and n_elem % n_rf != 0:
        diags.append(f"arch.connectivity: sub-connected requires n_elements divisible by "
                     f"n_rf ({n_elem} % {n_rf} != 0)")

    search = data.get("search", {})
    scope = search.get("scope")
    if scope not in (None, "per_element", "array_uniform"):
        diags.append("search.scope: must be per_element or array_uniform")
    if search.get("strategy", "auto") not in ("auto", "exhaustive", "coordinate"):
        diags.append("search.strategy: must be auto, exhaustive, or coordinate")
    if search.get("max_cycles", 8) < 1:
        diags.append("search.max_cycles: must be >= 1")
    bad = set(search.get("families", ["pattern", "polar"])) - {"pattern", "polar"}
    if bad:
        diags.append(f"search.families: unknown families {sorted(bad)}")

    sweep = data.get("sweep")
    if sweep is not None:
        if sweep.get("kind") not in ("angle", "antennas"):
            diags.append("sweep.kind: must be angle or antennas")
        if sweep.get("family", "pattern") not in ("pattern", "polar"):
            diags.append("sweep.family: must be pattern or polar")
        grid = sweep.get("grid")
        if grid is not None and any(b <= a for a, b in zip(grid, grid[1:])):
            diags.append("sweep.grid: values must be strictly increasing")
        if sweep.get("seeds_per_point", 50) < 1:
            diags.append("sweep.seeds_per_point: must be >= 1")
        if sweep.get("n_points", 25) < 1:
            diags.append("sweep.n_points: must be >= 1")

    parallel = data.get("parallel")
    if parallel is not None and (not isinstance(parallel, int) or parallel < 1):
        diags.append("parallel: must be an integer >= 1")

    output = data.get("output")
    if output is not None:
        out_dir = os.path.dirname(os.path.abspath(output)) or "."
        if not os.path.isdir(out_dir):
            diags.append(f"output: directory does not exist: {out_dir}")
        elif not os.access(out_dir, os.W_OK):
            diags.append(f"output: directory not writable: {out_dir}")

    codebook = sc.get("codebook")
    if codebook is not None and not os.path.exists(codebook):
        diags.append(f"scenario.codebook: file not found: {codebook}")
    return diags


# ---------------------------------------------------------------------------
# Object construction
# ---------------------------------------------------------------------------

def scenario_config(data: dict) -> ScenarioConfig:
    sc = data.get("scenario", {})
    pl = sc.get("path_loss", {})
    try:
        return ScenarioConfig(
            num_elements=sc.get("n_elements", 8),
            spacing=sc.get("spacing_wl", 0.5),
            num_users=sc.get("n_users", 2),
            num_clutter=sc.get("n_clutter", 2),
            num_paths=sc.get("n_paths", 5),
            angle_range=tuple(np.deg2rad(sc.get("angle_range_deg", [-60.0, 60.0])).tolist()),
            radius_range=tuple(sc.get("radius_range_m", [30.0, 60.0])),
            c0_db=pl.get("c0_db", 30.0),
            d0=pl.get("d0_m", 1.0),
            path_exponent=pl.get("exponent", 2.2),
            power=sc.get("power_w", 1.0),
            noise_power=sc.get("noise_w", 1e-11),
            target_reflectivity=10.0 ** (sc.get("target_reflectivity_db", 0.0) / 10.0),
            clutter_reflectivity=10.0 ** (sc.get("clutter_reflectivity_db", 10.0) / 10.0),
            cross_polar_var=sc.get("cross_polar_var", 0.3),
            path_decay_db=sc.get("path_decay_db", 3.0),
            angle_spread_scale=float(np.deg2rad(sc.get("angle_spread_deg", 10.0))),
            angle_spread_max=float(np.deg2rad(sc.get("angle_spread_max_deg", 30.0))),
            mode_scope=sc.get("mode_scope", "array_uniform"),
            seed=sc.get("seed", 0),
            codebook_path=sc.get("codebook"),
        )
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from exc


def objective_from(data: dict) -> Objective:
    obj = data.get("objective", {})
    try:
        return Objective(kind=obj.get("kind", "radar_scnr"),
                         max_iters=obj.get("max_iters", 300),
                         tol=obj.get("tol", 1e-10))
    except ValueError as exc:
        raise ConfigError(f"objective: {exc}") from exc


def arch_from(data: dict) -> ArchSpec:
    arch = data.get("arch", {})
    try:
        return ArchSpec(kind=arch.get("kind", "fully_digital"),
                        num_rf_chains=arch.get("n_rf", 2),
                        connectivity=arch.get("connectivity", "fully"))
    except ValueError as exc:
        raise ConfigError(f"arch: {exc}") from exc


def search_options(data: dict, scenario_cfg: ScenarioConfig) -> OptimizeOptions:
    search = data.get("search", {})
    try:
        return OptimizeOptions(
            scope=search.get("scope") or scenario_cfg.mode_scope,
            families=tuple(search.get("families", ["pattern", "polar"])),
            strategy=search.get("strategy", "auto"),
            max_cycles=search.get("max_cycles", 8),
            warm_start=search.get("warm_start", True),
        )
    except ValueError as exc:
        raise ConfigError(f"search: {exc}") from exc


def sweep_spec(data: dict) -> SweepSpec:
    sweep = data["sweep"]
    objective = data.get("objective", {}).get("kind", "radar_scnr")
    kind = sweep.get("kind", "angle")
    family = sweep.get("family", "pattern")
    if kind == "antennas":
        base = default_antenna_spec(objective)
    elif family == "polar":
        base = default_polar_angle_spec(sweep.get("n_points", 13), objective)
    else:
        base = default_pattern_angle_spec(sweep.get("n_points", 25), objective)
    kwargs = {}
    if sweep.get("grid") is not None:
        kwargs["grid"] = tuple(sweep["grid"])
    if sweep.get("architectures") is not None:
        kwargs["architectures"] = tuple(sweep["architectures"])
    if sweep.get("seeds_per_point") is not None:
        kwargs["seeds_per_point"] = sweep["seeds_per_point"]
    if sweep.get("pinned_radius_m") is not None:
        kwargs["pinned_radius"] = sweep["pinned_radius_m"]
    if sweep.get("nuisance") is not None:
        kwargs["nuisance"] = sweep["nuisance"]
    if sweep.get("force_aligned") is not None:
        kwargs["force_aligned"] = sweep["force_aligned"]
    if data.get("search", {}).get("scope") is not None:
        kwargs["mode_scope"] = data["search"]["scope"]
    obj = data.get("objective", {})
    if obj.get("tol") is not None:
        kwargs["solver_tol"] = obj["tol"]
    if obj.get("max_iters") is not None:
        kwargs["solver_iters"] = obj["max_iters"]
    import dataclasses as _dc
    try:
        return _dc.replace(base, precoding=arch_from(data), **kwargs)
    except ValueError as exc:
        raise ConfigError(f"sweep: {exc}") from exc


@dataclass(frozen=True)
class RunConfig:
    """Everything one `rasim run` needs, built from the merged config dict."""

    data: dict
    scenario: ScenarioConfig
    objective: Objective
    arch: ArchSpec
    search: OptimizeOptions
    sweep: SweepSpec
    output: str
    parallel: int


def build_run_config(data: dict) -> RunConfig:
    diags = validate_config(data)
    if diags:
        raise ConfigError(diags)
    scenario_cfg = scenario_config(data)
    return RunConfig(
        data=data,
        scenario=scenario_cfg,
        objective=objective_from(data),
        arch=arch_from(data),
        search=search_options(data, scenario_cfg),
        sweep=sweep_spec(data) if data.get("sweep") is not None else None,
        output=data.get("output"),
        parallel=data.get("parallel"),
    )
