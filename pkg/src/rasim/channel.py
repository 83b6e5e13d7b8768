"""Channel synthesis: geometric multipath for the communication link and
LoS round-trip channels with depolarization for the sensing link."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arrays import (
    ArrayGeometry,
    ModeAssignment,
    ModeCodebook,
    PolarizationState,
    pattern_gain,
    steering_vector,
)


@dataclass(frozen=True)
class PathLossParams:
    """Distance-dependent attenuation alpha = 10^(-c0_db/10) * (r/d0)^(-exponent)."""

    c0_db: float = 30.0
    d0: float = 1.0        # reference distance, meters
    exponent: float = 2.2

    def __post_init__(self):
        if self.d0 <= 0:
            raise ValueError("d0 must be > 0")
        if self.exponent <= 0:
            raise ValueError("exponent must be > 0")


@dataclass(frozen=True, eq=False)
class PathComponent:
    """One multipath component: complex gain, azimuth, 2x2 depolarization."""

    gain: complex
    angle: float
    depol: np.ndarray

    def __post_init__(self):
        depol = np.asarray(self.depol, dtype=complex)
        if depol.shape != (2, 2):
            raise ValueError("depol must be 2x2")
        depol.setflags(write=False)
        object.__setattr__(self, "depol", depol)


@dataclass(frozen=True, eq=False)
class CommUser:
    """Downlink user: position, multipath components, receive polarization."""

    r: float
    theta: float
    paths: tuple
    rx_polar: PolarizationState

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        if self.r <= 0:
            raise ValueError("user range must be > 0")

    def repinned(self, theta: float) -> "CommUser":
        """Move the user to a new azimuth, keeping its per-path angle offsets."""
        shift = theta - self.theta
        paths = tuple(PathComponent(p.gain, p.angle + shift, p.depol) for p in self.paths)
        return CommUser(r=self.r, theta=theta, paths=paths, rx_polar=self.rx_polar)


@dataclass(frozen=True, eq=False)
class SensingEntity:
    """Radar target or clutter scatterer: position, reflectivity, depolarization."""

    role: str              # "target" | "clutter"
    r: float
    theta: float
    reflectivity: float    # sigma^2, power
    scattering: np.ndarray

    def __post_init__(self):
        if self.role not in ("target", "clutter"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.reflectivity <= 0:
            raise ValueError("reflectivity must be > 0")
        if self.r <= 0:
            raise ValueError("range must be > 0")
        scattering = np.asarray(self.scattering, dtype=complex)
        if scattering.shape != (2, 2):
            raise ValueError("scattering matrix must be 2x2")
        scattering.setflags(write=False)
        object.__setattr__(self, "scattering", scattering)

    def repinned(self, theta: float = None, r: float = None) -> "SensingEntity":
        return SensingEntity(role=self.role, r=self.r if r is None else r,
                             theta=self.theta if theta is None else theta,
                             reflectivity=self.reflectivity, scattering=self.scattering)


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Channels synthesized for one scenario and mode assignment."""

    h_comm: np.ndarray          # K x N
    h_target: np.ndarray        # N x N round trip
    h_clutter: tuple            # C matrices, each N x N
    noise_power: float

    def __post_init__(self):
        if self.noise_power <= 0:
            raise ValueError("noise power must be > 0")
        object.__setattr__(self, "h_clutter", tuple(self.h_clutter))
        for m in (self.h_comm, self.h_target, *self.h_clutter):
            if not np.all(np.isfinite(m)):
                raise ValueError("channel matrices must be finite")


def path_loss(params: PathLossParams, r: float) -> float:
    """Amplitude attenuation at range ``r`` meters."""
    if r <= 0:
        raise ValueError(f"range must be > 0, got {r}")
    return 10.0 ** (-params.c0_db / 10.0) * (r / params.d0) ** (-params.exponent)


def depolarization_profile(cross_polar_var: float = 0.3) -> np.ndarray:
    """Per-entry variances: co-polar terms 1, cross-polar terms ``cross_polar_var``."""
    return np.array([[1.0, cross_polar_var], [cross_polar_var, 1.0]])


def sample_depolarization(rng: np.random.Generator, variance_profile: np.ndarray) -> np.ndarray:
    """Draw a 2x2 matrix of independent circularly-symmetric complex Gaussians
    with the given per-entry variances."""
    profile = np.asarray(variance_profile, dtype=float)
    if profile.shape != (2, 2):
        raise ValueError("variance profile must be 2x2")
    if np.any(profile < 0):
        raise ValueError("variances must be >= 0")
    re = rng.standard_normal((2, 2))
    im = rng.standard_normal((2, 2))
    return np.sqrt(profile / 2.0) * (re + 1j * im)


def _element_jones(codebook: ModeCodebook, polar_idx) -> np.ndarray:
    """2 x N matrix whose columns are the per-element Jones vectors."""
    return np.stack([codebook.polarizations[i].jones for i in polar_idx], axis=1)


def _element_gains(codebook: ModeCodebook, pattern_idx, theta: float) -> np.ndarray:
    """Per-element amplitude gains toward ``theta`` (one lookup per distinct pattern)."""
    gains = {i: pattern_gain(codebook.patterns[i], theta) for i in set(pattern_idx)}
    return np.array([gains[i] for i in pattern_idx])


def comm_channel(geom: ArrayGeometry, codebook: ModeCodebook, assign_tx: ModeAssignment,
                 users, params: PathLossParams) -> np.ndarray:
    """K x N downlink channel: per user, the path-loss-scaled sum over multipath
    components of (polarization coupling) x (per-element pattern gain) x
    (steering phase)."""
    if not users:
        raise ValueError("users must be non-empty")
    assign_tx.validate(codebook)
    if assign_tx.num_elements != geom.num_elements:
        raise ValueError("assignment length does not match array size")
    jones_tx = _element_jones(codebook, assign_tx.polar_idx)
    rows = []
    for user in users:
        row = np.zeros(geom.num_elements, dtype=complex)
        rx = user.rx_polar.jones.conj()
        for p in user.paths:
            coupling = (rx @ p.depol) @ jones_tx
            gains = _element_gains(codebook, assign_tx.pattern_idx, p.angle)
            row += p.gain * coupling * gains * steering_vector(geom, p.angle)
        rows.append(path_loss(params, user.r) * row)
    return np.stack(rows, axis=0)


def sensing_channel(geom: ArrayGeometry, codebook: ModeCodebook, assign_tx: ModeAssignment,
                    assign_rx: ModeAssignment, entity: SensingEntity,
                    params: PathLossParams) -> np.ndarray:
    """N x N monostatic round-trip channel off one scatterer.

    Entry (m, n) couples transmit element n into receive element m through the
    entity's depolarization matrix, with round-trip amplitude alpha^2 and
    accumulated steering phase exp(j*2*pi*spacing*(m+n)*sin(theta)).
    """
    for assign in (assign_tx, assign_rx):
        assign.validate(codebook)
        if assign.num_elements != geom.num_elements:
            raise ValueError("assignment length does not match array size")
    alpha = path_loss(params, entity.r)
    a = steering_vector(geom, entity.theta)
    g_tx = _element_gains(codebook, assign_tx.pattern_idx, entity.theta)
    g_rx = _element_gains(codebook, assign_rx.pattern_idx, entity.theta)
    jones_tx = _element_jones(codebook, assign_tx.polar_idx)
    jones_rx = _element_jones(codebook, assign_rx.polar_idx)
    coupling = jones_rx.conj().T @ entity.scattering @ jones_tx
    return alpha**2 * coupling * np.outer(g_rx * a, g_tx * a)


# ---------------------------------------------------------------------------
# Matrix dump format: plain decimal text, row-major re/im pairs
# ---------------------------------------------------------------------------

def save_matrix_text(path, matrix: np.ndarray) -> None:
    """Write a complex matrix as decimal text: a "rows cols" header line, then
    one line per row of space-separated "re im" pairs (full float precision)."""
    m = np.atleast_2d(np.asarray(matrix, dtype=complex))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{m.shape[0]} {m.shape[1]}\n")
        for row in m:
            fh.write(" ".join(f"{float(v.real)!r} {float(v.imag)!r}" for v in row) + "\n")


def load_matrix_text(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        rows, cols = (int(t) for t in fh.readline().split())
        out = np.empty((rows, cols), dtype=complex)
        for i in range(rows):
            vals = [float(t) for t in fh.readline().split()]
            if len(vals) != 2 * cols:
                raise ValueError(f"row {i} has {len(vals)} values, expected {2 * cols}")
            out[i] = np.asarray(vals[0::2]) + 1j * np.asarray(vals[1::2])
    return out


def export_channel_set(channels: ChannelSet, prefix) -> list:
    """Dump every matrix of a ChannelSet next to ``prefix``; returns the paths."""
    paths = []
    for name, m in [("comm", channels.h_comm), ("target", channels.h_target)] + [
            (f"clutter{i}", c) for i, c in enumerate(channels.h_clutter)]:
        p = f"{prefix}_{name}.txt"
        save_matrix_text(p, m)
        paths.append(p)
    return paths
