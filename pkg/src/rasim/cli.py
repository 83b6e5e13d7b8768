"""Command-line entry point: config validation, single solves, sweeps, and
codebook inspection.

Exit codes: 0 success, 1 config error, 2 solver failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .arrays import NORMALIZATION_TOL, default_codebook, load_codebook, save_codebook
from .beamforming import PowerModel, SolverError, power_consumption
from .config import (
    ConfigError,
    build_run_config,
    effective_config,
    load_config_file,
    validate_config,
)
from .optimizer import joint_optimize
from .scenario import build_scenario
from .sweeps import run_sweep, write_csv, write_metadata


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rasim",
        description="Reconfigurable-antenna array link simulator and mode optimizer.")
    parser.add_argument("--version", action="version", version=f"rasim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="check a config file against every invariant")
    p_val.add_argument("--config", help="config JSON path (defaults are validated if omitted)")

    p_run = sub.add_parser("run", help="run the configured single solve or sweep")
    p_run.add_argument("--config", help="config JSON path")
    p_run.add_argument("--sweep", choices=["angle", "antennas"],
                       help="run a sweep instead of a single solve")
    p_run.add_argument("--family", choices=["pattern", "polar"],
                       help="which mode family the angle sweep varies (default pattern)")
    p_run.add_argument("--objective", choices=["comm_sum_rate", "radar_scnr"],
                       help="objective to maximize")
    p_run.add_argument("--seed", type=int, help="master random seed")
    p_run.add_argument("--arch", choices=["fully_digital", "tri_hybrid"],
                       help="precoding architecture")
    p_run.add_argument("--nrf", type=int, help="number of RF chains (tri-hybrid)")
    p_run.add_argument("--connectivity", choices=["fully", "sub", "dynamic"],
                       help="phase-shifter connectivity (tri-hybrid)")
    p_run.add_argument("--scope", choices=["per_element", "array_uniform"],
                       help="mode-selection scope")
    p_run.add_argument("--seeds-per-point", type=int, help="Monte Carlo seeds per grid point")
    p_run.add_argument("--grid-points", type=int, help="number of sweep grid points")
    p_run.add_argument("--parallel", type=int, help="worker processes (default: all cores)")
    p_run.add_argument("--output", "-o", help="output path (CSV for sweeps, JSON report "
                                              "for single solves)")

    p_cb = sub.add_parser("codebook", help="dump or check the EM mode codebook")
    p_cb.add_argument("action", choices=["dump", "check"])
    p_cb.add_argument("--file", help="codebook JSON to check (default: built-in codebook)")
    p_cb.add_argument("--output", "-o", help="dump destination (default: codebook.json)")
    return parser


def _run_overrides(args) -> dict:
    over = {}
    if args.seed is not None:
        over.setdefault("scenario", {})["seed"] = args.seed
    if args.objective:
        over.setdefault("objective", {})["kind"] = args.objective
    if args.arch:
        over.setdefault("arch", {})["kind"] = args.arch
    if args.nrf is not None:
        over.setdefault("arch", {})["n_rf"] = args.nrf
    if args.connectivity:
        over.setdefault("arch", {})["connectivity"] = args.connectivity
    if args.scope:
        over.setdefault("search", {})["scope"] = args.scope
    if args.sweep:
        over.setdefault("sweep", {})["kind"] = args.sweep
    if args.family:
        over.setdefault("sweep", {})["family"] = args.family
    if args.seeds_per_point is not None:
        over.setdefault("sweep", {})["seeds_per_point"] = args.seeds_per_point
    if args.grid_points is not None:
        over.setdefault("sweep", {})["n_points"] = args.grid_points
    if args.parallel is not None:
        over["parallel"] = args.parallel
    if args.output:
        over["output"] = args.output
    return over


def _write_meta(path, data: dict, extra: dict = None) -> None:
    meta = {"version": __version__, "config": data}
    if extra:
        meta.update(extra)
    with open(f"{path}.meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def cmd_validate(args) -> int:
    data = effective_config(load_config_file(args.config) if args.config else None)
    diags = validate_config(data)
    if diags:
        for d in diags:
            print(f"invalid: {d}", file=sys.stderr)
        return 1
    print(f"config OK ({args.config or 'built-in defaults'}), 0 diagnostics")
    return 0


def cmd_run(args) -> int:
    file_data = load_config_file(args.config) if args.config else None
    over = _run_overrides(args)
    if args.family and not (args.sweep or (file_data or {}).get("sweep")):
        raise ConfigError("sweep.family: --family requires --sweep (or a sweep section)")
    data = effective_config(file_data, over)
    run_cfg = build_run_config(data)
    parallel = run_cfg.parallel or max(1, os.cpu_count() or 1)

    if run_cfg.sweep is not None:
        out = run_cfg.output or f"sweep_{run_cfg.sweep.sweep_kind}.csv"
        start = time.perf_counter()
        result = run_sweep(run_cfg.scenario, run_cfg.sweep, n_jobs=parallel)
        elapsed = time.perf_counter() - start
        write_csv(result, out)
        write_metadata(result, out, extra={"effective_config": data})
        print(f"sweep {run_cfg.sweep.sweep_kind}: {len(result.rows)} rows "
              f"({len(result.grid)} grid points x {run_cfg.sweep.seeds_per_point} seeds x "
              f"{len(run_cfg.sweep.architectures)} architectures)")
        print(f"objective: {run_cfg.sweep.objective_kind}")
        print(f"wrote {out} (+ {out}.meta.json) in {elapsed:.1f} s")
        return 0

    codebook = (load_codebook(run_cfg.scenario.codebook_path)
                if run_cfg.scenario.codebook_path else default_codebook())
    scenario = build_scenario(run_cfg.scenario, codebook=codebook)
    start = time.perf_counter()
    report, stack = joint_optimize(run_cfg.objective, scenario, arch=run_cfg.arch,
                                   options=run_cfg.search)
    elapsed = time.perf_counter() - start
    model = PowerModel()
    if run_cfg.arch.kind == "tri_hybrid":
        power_w = power_consumption(model, "tri_hybrid", scenario.geometry.num_elements,
                                    run_cfg.arch.num_rf_chains, stack.mask)
    else:
        power_w = power_consumption(model, "fully_digital", scenario.geometry.num_elements)

    print(f"objective: {run_cfg.objective.kind}   architecture: {run_cfg.arch.kind}")
    print(f"best value (pre-factorization): {report.best_value:.6g}")
    if run_cfg.arch.kind == "tri_hybrid":
        print(f"through-stack value (post-factorization): {report.post_factor_value:.6g}")
    print(f"modes: pattern={list(report.best_modes.pattern_idx)} "
          f"polar={list(report.best_modes.polar_idx)}")
    print(f"evaluations: {report.evaluations}   runtime: {elapsed:.2f} s")
    print(f"front-end power: {power_w:.2f} W")

    out = run_cfg.output or "run_report.json"
    report.save(out)
    _write_meta(out, data)
    print(f"wrote {out} (+ {out}.meta.json)")
    return 0


def cmd_codebook(args) -> int:
    if args.action == "dump":
        out = args.output or "codebook.json"
        save_codebook(default_codebook(), out)
        cb = default_codebook()
        print(f"wrote {out}: {len(cb.patterns)} patterns, "
              f"{len(cb.polarizations)} polarization states")
        return 0
    codebook = load_codebook(args.file) if args.file else default_codebook()
    failures = []
    for i, pattern in enumerate(codebook.patterns):
        err = pattern.normalization_error()
        if abs(err) > NORMALIZATION_TOL:
            failures.append((i, err))
    if failures:
        for i, err in failures:
            print(f"pattern {i}: radiated-power integral off by {err:.3e} "
                  f"(tolerance {NORMALIZATION_TOL})", file=sys.stderr)
        return 1
    print(f"all {len(codebook.patterns)} patterns normalized within {NORMALIZATION_TOL}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "run":
            return cmd_run(args)
        return cmd_codebook(args)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"invalid: {d}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
