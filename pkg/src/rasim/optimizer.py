"""Discrete EM-mode search coupled with the continuous beamformers:
exhaustive oracle, per-element coordinate ascent, and the joint driver."""

from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .arrays import ModeAssignment, ModeCodebook, uniform_assignment
from .beamforming import (
    BeamformingStack,
    connectivity_mask,
    ConnectivityMask,
    hybrid_factorize,
    mvdr_receive_filter,
    scnr,
    scnr_transmit_beamformer,
    sum_rate,
    wmmse_precoder,
)

EXHAUSTIVE_GUARD = 100_000

OBJECTIVE_KINDS = ("comm_sum_rate", "radar_scnr")


@dataclass(frozen=True)
class Objective:
    """What to maximize, plus the continuous-solver parameters.

    ``power`` / ``noise_power`` default to the scenario's values when None.
    """

    kind: str
    power: float = None
    noise_power: float = None
    max_iters: int = 300
    tol: float = 1e-10

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ValueError(f"unknown objective {self.kind!r}")
        if self.tol <= 0 or self.max_iters <= 0:
            raise ValueError("solver tolerances must be > 0")

    def resolve(self, scenario) -> tuple:
        power = self.power if self.power is not None else scenario.power
        noise = self.noise_power if self.noise_power is not None else scenario.noise_power
        return power, noise


@dataclass(frozen=True)
class ArchSpec:
    """Precoding architecture for the continuous layer."""

    kind: str = "fully_digital"     # "fully_digital" | "tri_hybrid"
    num_rf_chains: int = 2
    connectivity: str = "fully"     # "fully" | "sub" | "dynamic"

    def __post_init__(self):
        if self.kind not in ("fully_digital", "tri_hybrid"):
            raise ValueError(f"unknown architecture {self.kind!r}")
        if self.connectivity not in ("fully", "sub", "dynamic"):
            raise ValueError(f"unknown connectivity {self.connectivity!r}")
        if self.num_rf_chains < 1:
            raise ValueError("num_rf_chains must be >= 1")


@dataclass(frozen=True)
class OptimizeOptions:
    """Search-space and strategy knobs for the discrete mode optimization."""

    scope: str = "array_uniform"          # "per_element" | "array_uniform"
    families: tuple = ("pattern", "polar")
    pattern_choices: tuple = None         # None -> every codebook pattern
    polar_choices: tuple = None
    fixed_pattern: int = 0                # used when a family is not searched
    fixed_polar: int = 0
    init: ModeAssignment = None
    max_cycles: int = 8
    warm_start: bool = True
    strategy: str = "auto"                # "auto" | "exhaustive" | "coordinate"
    exhaustive_threshold: int = 64        # "auto" switches to coordinate above this
    uniform_init_screen: bool = True      # seed coordinate ascent from the best uniform mode
    enumeration: str = "lex"              # "lex" | "reverse"

    def __post_init__(self):
        if self.scope not in ("per_element", "array_uniform"):
            raise ValueError(f"unknown scope {self.scope!r}")
        unknown = set(self.families) - {"pattern", "polar"}
        if unknown:
            raise ValueError(f"unknown mode families {sorted(unknown)}")
        if self.strategy not in ("auto", "exhaustive", "coordinate"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.enumeration not in ("lex", "reverse"):
            raise ValueError(f"unknown enumeration order {self.enumeration!r}")


@dataclass
class SolveReport:
    """Outcome of one discrete mode search."""

    best_modes: ModeAssignment
    best_value: float
    evaluations: int
    trace: tuple                     # ((cycle, value), ...) non-decreasing
    wall_time: float
    post_factor_value: float = None  # set by joint_optimize for tri-hybrid runs
    solution: object = field(default=None, repr=False)  # beamformer(s) at best_modes

    def to_dict(self) -> dict:
        return {
            "best_modes": {
                "pattern_idx": list(self.best_modes.pattern_idx),
                "polar_idx": list(self.best_modes.polar_idx),
                "scope": self.best_modes.scope,
            },
            "best_value": self.best_value,
            "evaluations": self.evaluations,
            "trace": [[c, v] for c, v in self.trace],
            "wall_time": self.wall_time,
            "post_factor_value": self.post_factor_value,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


def evaluate(objective: Objective, scenario, modes: ModeAssignment, warm=None):
    """Synthesize channels for ``modes``, run the matching continuous solver,
    and return (achieved objective, beamformer solution).

    Deterministic given (scenario, modes, warm): the same call always yields
    the bit-identical value.
    """
    from .scenario import synthesize_channels

    modes.validate(scenario.codebook)
    if modes.num_elements != scenario.geometry.num_elements:
        raise ValueError("assignment length does not match the array")
    power, noise = objective.resolve(scenario)
    if objective.kind == "comm_sum_rate":
        channels = synthesize_channels(scenario, modes, include_sensing=False)
        precoder, trace = wmmse_precoder(channels.h_comm, power, noise,
                                         max_iters=objective.max_iters,
                                         tol=objective.tol, init=warm)
        return trace[-1], precoder
    channels = synthesize_channels(scenario, modes, include_comm=False)
    sigma_c2 = [c.reflectivity for c in scenario.clutter]
    f, w, trace = scnr_transmit_beamformer(
        channels.h_target, channels.h_clutter, scenario.target.reflectivity,
        sigma_c2, noise, power, max_iters=objective.max_iters,
        tol=objective.tol, init_f=warm)
    return trace[-1], (f, w)


# ---------------------------------------------------------------------------
# Search-space enumeration
# ---------------------------------------------------------------------------

def _mode_pairs(codebook: ModeCodebook, options: OptimizeOptions, base: ModeAssignment,
                element: int) -> list:
    """Candidate (pattern, polar) pairs for one element, lowest indices first."""
    if "pattern" in options.families:
        patterns = options.pattern_choices or range(codebook.num_patterns)
    else:
        patterns = (base.pattern_idx[element],)
    if "polar" in options.families:
        polars = options.polar_choices or range(codebook.num_polarizations)
    else:
        polars = (base.polar_idx[element],)
    return [(int(p), int(q)) for p in patterns for q in polars]


def _base_assignment(scenario, options: OptimizeOptions) -> ModeAssignment:
    if options.init is not None:
        return options.init
    return uniform_assignment(scenario.geometry.num_elements, options.fixed_pattern,
                              options.fixed_polar, scope=options.scope)


def search_space_size(scenario, options: OptimizeOptions) -> int:
    base = _base_assignment(scenario, options)
    pairs = _mode_pairs(scenario.codebook, options, base, 0)
    if options.scope == "array_uniform":
        return len(pairs)
    return len(pairs) ** scenario.geometry.num_elements


def _enumerate_assignments(scenario, options: OptimizeOptions):
    base = _base_assignment(scenario, options)
    n = scenario.geometry.num_elements
    pairs = _mode_pairs(scenario.codebook, options, base, 0)
    if options.enumeration == "reverse":
        pairs = list(reversed(pairs))
    if options.scope == "array_uniform":
        for pat, pol in pairs:
            yield uniform_assignment(n, pat, pol, scope="array_uniform")
    else:
        for combo in itertools.product(pairs, repeat=n):
            yield ModeAssignment(tuple(p for p, _ in combo), tuple(q for _, q in combo),
                                 scope="per_element")


def exhaustive_mode_search(objective: Objective, scenario, codebook: ModeCodebook = None,
                           scope: str = None, options: OptimizeOptions = None) -> SolveReport:
    """Exact argmax over the enumerated mode space (guarded to <= 1e5 points)."""
    options = options or OptimizeOptions()
    if scope is not None:
        options = replace(options, scope=scope)
    size = search_space_size(scenario, options)
    if size > EXHAUSTIVE_GUARD:
        raise ValueError(f"exhaustive search space has {size} points "
                         f"(guard is {EXHAUSTIVE_GUARD})")
    start = time.perf_counter()
    best_modes, best_value, best_solution = None, -np.inf, None
    evaluations = 0
    for modes in _enumerate_assignments(scenario, options):
        value, solution = evaluate(objective, scenario, modes)
        evaluations += 1
        if value > best_value:
            best_modes, best_value, best_solution = modes, value, solution
    return SolveReport(best_modes=best_modes, best_value=best_value,
                       evaluations=evaluations, trace=((0, best_value),),
                       wall_time=time.perf_counter() - start, solution=best_solution)


def coordinate_ascent_modes(objective: Objective, scenario, codebook: ModeCodebook = None,
                            init: ModeAssignment = None, max_cycles: int = None,
                            options: OptimizeOptions = None) -> SolveReport:
    """Greedy per-element improvement over the codebook, cycling in ascending
    element order until a full cycle yields no improvement.

    Candidate neighbors may be screened with warm-started solves; an accepted
    move is always confirmed at the cold (pure-function) value, so the trace
    and the returned best value are comparable with exhaustive search.
    """
    options = options or OptimizeOptions(scope="per_element")
    if init is not None:
        options = replace(options, init=init)
    if max_cycles is not None:
        options = replace(options, max_cycles=max_cycles)
    codebook = codebook or scenario.codebook
    start = time.perf_counter()

    incumbent = _base_assignment(scenario, options)
    incumbent.validate(codebook)
    inc_value, inc_solution = evaluate(objective, scenario, incumbent)
    evaluations = 1
    trace = [(0, inc_value)]

    elements = [0] if options.scope == "array_uniform" else list(range(incumbent.num_elements))
    for cycle in range(1, options.max_cycles + 1):
        improved = False
        for element in elements:
            current = (incumbent.pattern_idx[element], incumbent.polar_idx[element])
            best_cand, best_val, best_sol = None, -np.inf, None
            for pair in _mode_pairs(codebook, options, incumbent, element):
                if pair == current:
                    continue
                cand = _apply_pair(incumbent, element, pair, options.scope)
                warm = inc_solution if options.warm_start else None
                value, solution = evaluate(objective, scenario, cand,
                                           warm=_warm_vector(objective, warm))
                evaluations += 1
                if value > best_val:
                    best_cand, best_val, best_sol = cand, value, solution
            if best_cand is None or best_val <= inc_value:
                continue
            if options.warm_start:
                value, solution = evaluate(objective, scenario, best_cand)
                evaluations += 1
                if value <= inc_value:
                    continue
                best_val, best_sol = value, solution
            incumbent, inc_value, inc_solution = best_cand, best_val, best_sol
            improved = True
        trace.append((cycle, inc_value))
        if not improved:
            break
    return SolveReport(best_modes=incumbent, best_value=inc_value,
                       evaluations=evaluations, trace=tuple(trace),
                       wall_time=time.perf_counter() - start, solution=inc_solution)


def _apply_pair(assignment: ModeAssignment, element: int, pair, scope: str) -> ModeAssignment:
    if scope == "array_uniform":
        return uniform_assignment(assignment.num_elements, pair[0], pair[1],
                                  scope="array_uniform")
    return assignment.replace_element(element, pattern_idx=pair[0], polar_idx=pair[1])


def _warm_vector(objective: Objective, solution):
    """Extract the warm-startable part of a stored solution."""
    if solution is None:
        return None
    if objective.kind == "radar_scnr":
        return solution[0]
    return solution


def joint_optimize(objective: Objective, scenario, arch: ArchSpec = None,
                   options: OptimizeOptions = None):
    """Outer discrete mode search plus, for tri-hybrid architectures, the
    factorization of the converged digital beamformer through the analog
    layer. Returns (SolveReport, BeamformingStack); the report carries the
    pre-factorization value as ``best_value`` and the through-stack value as
    ``post_factor_value``.
    """
    arch = arch or ArchSpec()
    options = options or OptimizeOptions()
    size = search_space_size(scenario, options)
    use_exhaustive = options.strategy == "exhaustive" or (
        options.strategy == "auto" and size <= min(options.exhaustive_threshold,
                                                   EXHAUSTIVE_GUARD))
    if use_exhaustive:
        report = exhaustive_mode_search(objective, scenario, options=options)
    else:
        extra_evals = 0
        if options.init is None and options.uniform_init_screen and options.scope == "per_element":
            screen = replace(options, scope="array_uniform", init=None)
            best = exhaustive_mode_search(objective, scenario, options=screen)
            extra_evals = best.evaluations
            init = ModeAssignment(best.best_modes.pattern_idx, best.best_modes.polar_idx,
                                  scope="per_element")
            options = replace(options, init=init)
        report = coordinate_ascent_modes(objective, scenario, options=options)
        report.evaluations += extra_evals

    power, noise = objective.resolve(scenario)
    if arch.kind == "fully_digital":
        if objective.kind == "comm_sum_rate":
            f_bb = report.solution
        else:
            f_bb = report.solution[0].reshape(-1, 1)
        stack = BeamformingStack(modes=report.best_modes, f_bb=f_bb, power_budget=power)
        report.post_factor_value = report.best_value
        return report, stack

    geom_n = scenario.geometry.num_elements
    mask = connectivity_mask(arch.connectivity, geom_n, arch.num_rf_chains)
    if objective.kind == "comm_sum_rate":
        f_target = report.solution
    else:
        f_target = report.solution[0].reshape(-1, 1)
    f_rf, f_bb, _ = hybrid_factorize(f_target, mask, power)
    eff_mask = _effective_mask(mask, f_rf)
    stack = BeamformingStack(modes=report.best_modes, f_bb=f_bb, power_budget=power,
                             f_rf=f_rf, mask=eff_mask)
    report.post_factor_value = _through_stack_value(objective, scenario, report.best_modes,
                                                    stack, power, noise)
    return report, stack


def _effective_mask(mask: ConnectivityMask, f_rf: np.ndarray) -> ConnectivityMask:
    """Dynamic factorization may have re-wired elements; derive the final mask."""
    if mask.kind != "dynamic":
        return mask
    return ConnectivityMask("dynamic", (np.abs(f_rf) > 0.5).astype(float))


def _through_stack_value(objective: Objective, scenario, modes: ModeAssignment,
                         stack: BeamformingStack, power: float, noise: float) -> float:
    from .scenario import synthesize_channels

    eff = stack.effective_precoder()
    if objective.kind == "comm_sum_rate":
        channels = synthesize_channels(scenario, modes, include_sensing=False)
        return sum_rate(channels.h_comm, eff, noise)
    channels = synthesize_channels(scenario, modes, include_comm=False)
    sigma_c2 = [c.reflectivity for c in scenario.clutter]
    f = eff[:, 0]
    if np.linalg.norm(f) == 0:
        return 0.0
    w = mvdr_receive_filter(channels.h_target, channels.h_clutter, sigma_c2, f, noise)
    if np.linalg.norm(w) == 0:
        return 0.0
    return scnr(channels.h_target, channels.h_clutter, scenario.target.reflectivity,
                sigma_c2, f, w, noise)
