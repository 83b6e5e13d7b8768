"""Seeded scenario generation: user/target/clutter placement over the annular
service region, multipath draws, and ChannelSet synthesis."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .arrays import ArrayGeometry, ModeAssignment, ModeCodebook, default_codebook
from .channel import (
    ChannelSet,
    CommUser,
    PathComponent,
    PathLossParams,
    SensingEntity,
    comm_channel,
    depolarization_profile,
    sample_depolarization,
    sensing_channel,
)


@dataclass(frozen=True)
class ScenarioConfig:
    """Geometry, population counts, propagation constants, and the seed."""

    num_elements: int = 8
    spacing: float = 0.5
    num_users: int = 2
    num_clutter: int = 2
    num_paths: int = 5
    angle_range: tuple = (-np.pi / 3, np.pi / 3)   # radians
    radius_range: tuple = (30.0, 60.0)             # meters
    c0_db: float = 30.0
    d0: float = 1.0
    path_exponent: float = 2.2
    power: float = 1.0
    noise_power: float = 1e-11
    target_reflectivity: float = 1.0
    clutter_reflectivity: float = 10.0
    cross_polar_var: float = 0.3
    path_decay_db: float = 3.0                     # power drop per extra path
    angle_spread_scale: float = np.deg2rad(10.0)   # Laplacian scale of path offsets
    angle_spread_max: float = np.deg2rad(30.0)     # truncation bound
    mode_scope: str = "array_uniform"
    seed: int = 0
    codebook_path: str = None

    def __post_init__(self):
        if min(self.num_users, self.num_clutter) < 0 or self.num_paths < 1:
            raise ValueError("counts must be >= 0 (and at least one path)")
        lo, hi = self.angle_range
        if not -np.pi / 2 <= lo <= hi <= np.pi / 2:
            raise ValueError("angle_range must be ordered within [-pi/2, pi/2]")
        r0, r1 = self.radius_range
        if not 0 < r0 <= r1:
            raise ValueError("radius_range must be ordered and positive")
        if self.power <= 0 or self.noise_power <= 0:
            raise ValueError("power and noise_power must be > 0")
        if self.target_reflectivity <= 0 or self.clutter_reflectivity <= 0:
            raise ValueError("reflectivities must be > 0")
        if self.cross_polar_var < 0:
            raise ValueError("cross_polar_var must be >= 0")
        if self.mode_scope not in ("per_element", "array_uniform"):
            raise ValueError(f"unknown mode_scope {self.mode_scope!r}")

    @property
    def path_loss_params(self) -> PathLossParams:
        return PathLossParams(c0_db=self.c0_db, d0=self.d0, exponent=self.path_exponent)

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(num_elements=self.num_elements, spacing=self.spacing)


@dataclass(frozen=True, eq=False)
class Scenario:
    """One drawn realization: placements, multipath, and depolarization."""

    config: ScenarioConfig
    geometry: ArrayGeometry
    codebook: ModeCodebook
    users: tuple
    target: SensingEntity
    clutter: tuple
    path_params: PathLossParams
    power: float
    noise_power: float
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "clutter", tuple(self.clutter))

    def pin_target(self, theta: float, r: float = None) -> "Scenario":
        return dataclasses.replace(self, target=self.target.repinned(theta=theta, r=r))

    def pin_user(self, k: int, theta: float) -> "Scenario":
        users = list(self.users)
        users[k] = users[k].repinned(theta)
        return dataclasses.replace(self, users=tuple(users))

    def with_positions_from(self, other: "Scenario") -> "Scenario":
        """Adopt the user/clutter placements of ``other``, keeping this
        scenario's random gains and depolarization draws."""
        users = tuple(u.repinned(o.theta) for u, o in zip(self.users, other.users))
        users = tuple(dataclasses.replace(u, r=o.r) for u, o in zip(users, other.users))
        clutter = tuple(c.repinned(theta=o.theta, r=o.r)
                        for c, o in zip(self.clutter, other.clutter))
        return dataclasses.replace(self, users=users, clutter=clutter)


def sample_positions(config: ScenarioConfig, rng: np.random.Generator, count: int) -> list:
    """(r, theta) pairs uniform over the annular sector: angles uniform on
    angle_range, ranges with density proportional to r (area-uniform)."""
    theta = rng.uniform(config.angle_range[0], config.angle_range[1], count)
    r0sq, r1sq = config.radius_range[0] ** 2, config.radius_range[1] ** 2
    r = np.sqrt(rng.uniform(0.0, 1.0, count) * (r1sq - r0sq) + r0sq)
    return list(zip(r.tolist(), theta.tolist()))


def _truncated_laplace(rng: np.random.Generator, scale: float, bound: float,
                       size: int) -> np.ndarray:
    """Inverse-CDF sampling of a zero-mean Laplacian truncated to [-bound, bound]."""
    lo = 0.5 * np.exp(-bound / scale)
    p = rng.uniform(lo, 1.0 - lo, size)
    return np.where(p < 0.5, scale * np.log(2.0 * p), -scale * np.log(2.0 * (1.0 - p)))


def _draw_paths(config: ScenarioConfig, rng: np.random.Generator, theta_los: float) -> tuple:
    """LoS path plus L-1 offset paths; powers decay 3 dB per index and sum to 1."""
    n_paths = config.num_paths
    offsets = np.zeros(n_paths)
    if n_paths > 1:
        offsets[1:] = _truncated_laplace(rng, config.angle_spread_scale,
                                         config.angle_spread_max, n_paths - 1)
    powers = 10.0 ** (-config.path_decay_db * np.arange(n_paths) / 10.0)
    powers /= powers.sum()
    gains = np.sqrt(powers / 2.0) * (rng.standard_normal(n_paths)
                                     + 1j * rng.standard_normal(n_paths))
    profile = depolarization_profile(config.cross_polar_var)
    paths = []
    for l in range(n_paths):
        angle = float(np.clip(theta_los + offsets[l], -np.pi / 2, np.pi / 2))
        paths.append(PathComponent(gain=complex(gains[l]), angle=angle,
                                   depol=sample_depolarization(rng, profile)))
    return tuple(paths)


def build_scenario(config: ScenarioConfig, codebook: ModeCodebook = None) -> Scenario:
    """Draw a full scenario from ``config.seed``: users with multipath, one
    target, and the clutter scatterers. Bit-reproducible for a fixed seed."""
    codebook = codebook or default_codebook()
    rng = np.random.default_rng(config.seed)
    profile = depolarization_profile(config.cross_polar_var)

    users = []
    positions = sample_positions(config, rng, config.num_users)
    for r, theta in positions:
        users.append(CommUser(r=r, theta=theta, paths=_draw_paths(config, rng, theta),
                              rx_polar=codebook.polarizations[0]))

    (target_r, target_theta), = sample_positions(config, rng, 1)
    target = SensingEntity(role="target", r=target_r, theta=target_theta,
                           reflectivity=config.target_reflectivity,
                           scattering=sample_depolarization(rng, profile))

    clutter = []
    for r, theta in sample_positions(config, rng, config.num_clutter):
        clutter.append(SensingEntity(role="clutter", r=r, theta=theta,
                                     reflectivity=config.clutter_reflectivity,
                                     scattering=sample_depolarization(rng, profile)))

    return Scenario(config=config, geometry=config.geometry, codebook=codebook,
                    users=tuple(users), target=target, clutter=tuple(clutter),
                    path_params=config.path_loss_params, power=config.power,
                    noise_power=config.noise_power, seed=config.seed)


def synthesize_channels(scenario: Scenario, modes_tx: ModeAssignment,
                        modes_rx: ModeAssignment = None, include_comm: bool = True,
                        include_sensing: bool = True) -> ChannelSet:
    """Pure function of (scenario, mode assignment) producing the ChannelSet.

    The monostatic array applies the same EM modes on transmit and receive
    unless ``modes_rx`` overrides them.
    """
    modes_rx = modes_rx or modes_tx
    geom, codebook, params = scenario.geometry, scenario.codebook, scenario.path_params
    n = geom.num_elements
    h_comm = np.zeros((len(scenario.users), n), dtype=complex)
    if include_comm and scenario.users:
        h_comm = comm_channel(geom, codebook, modes_tx, scenario.users, params)
    h_target = np.zeros((n, n), dtype=complex)
    h_clutter = []
    if include_sensing:
        h_target = sensing_channel(geom, codebook, modes_tx, modes_rx,
                                   scenario.target, params)
        h_clutter = [sensing_channel(geom, codebook, modes_tx, modes_rx, c, params)
                     for c in scenario.clutter]
    return ChannelSet(h_comm=h_comm, h_target=h_target, h_clutter=tuple(h_clutter),
                      noise_power=scenario.noise_power)


# ---------------------------------------------------------------------------
# Scenario serialization (positions in meters/degrees, reflectivities in dB)
# ---------------------------------------------------------------------------

def scenario_to_dict(scenario: Scenario) -> dict:
    cfg = scenario.config
    return {
        "seed": scenario.seed,
        "num_elements": cfg.num_elements,
        "power_w": scenario.power,
        "noise_w": scenario.noise_power,
        "target_reflectivity_db": 10.0 * np.log10(cfg.target_reflectivity),
        "clutter_reflectivity_db": 10.0 * np.log10(cfg.clutter_reflectivity),
        "users": [{"r_m": u.r, "theta_deg": float(np.rad2deg(u.theta))}
                  for u in scenario.users],
        "target": {"r_m": scenario.target.r,
                   "theta_deg": float(np.rad2deg(scenario.target.theta))},
        "clutter": [{"r_m": c.r, "theta_deg": float(np.rad2deg(c.theta))}
                    for c in scenario.clutter],
    }


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=1)
        fh.write("\n")


def load_scenario(path, config: ScenarioConfig, codebook: ModeCodebook = None) -> Scenario:
    """Rebuild a scenario from its stored seed, then re-pin the stored
    positions (which override whatever the seed drew)."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    config = dataclasses.replace(config, seed=int(data["seed"]))
    scenario = build_scenario(config, codebook=codebook)
    for k, entry in enumerate(data["users"]):
        scenario = scenario.pin_user(k, float(np.deg2rad(entry["theta_deg"])))
        users = list(scenario.users)
        users[k] = dataclasses.replace(users[k], r=float(entry["r_m"]))
        scenario = dataclasses.replace(scenario, users=tuple(users))
    scenario = scenario.pin_target(float(np.deg2rad(data["target"]["theta_deg"])),
                                   r=float(data["target"]["r_m"]))
    clutter = tuple(c.repinned(theta=float(np.deg2rad(e["theta_deg"])), r=float(e["r_m"]))
                    for c, e in zip(scenario.clutter, data["clutter"]))
    return dataclasses.replace(scenario, clutter=clutter)
