"""Array geometry, discrete radiation-pattern / polarization codebooks, and the
per-element complex response that all channel synthesis is built on."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

# Azimuth sample grid shared by every tabulated pattern: [-180, 180] degrees
# at 0.5 degree steps, both endpoints included.
AZIMUTH_GRID = np.linspace(-np.pi, np.pi, 721)
AZIMUTH_GRID.setflags(write=False)

# Gain floor outside a directional pattern's support (-80 dB) so no channel
# entry is ever exactly zero.
PATTERN_FLOOR = 1e-4

NORMALIZATION_TOL = 1e-6


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array along x, spacing in wavelengths."""

    num_elements: int
    spacing: float = 0.5

    def __post_init__(self):
        if self.num_elements < 1:
            raise ValueError(f"num_elements must be >= 1, got {self.num_elements}")
        if self.spacing <= 0:
            raise ValueError(f"spacing must be > 0, got {self.spacing}")


@dataclass(frozen=True, eq=False)
class RadiationPattern:
    """Amplitude gain g(theta) tabulated on AZIMUTH_GRID.

    ``norm_const`` is the peak amplitude of a directional pattern (the value
    at boresight); omni patterns have g == 1 everywhere.
    """

    kind: str                 # "omni" | "directional"
    boresight: float = 0.0    # radians
    exponent: float = 0.0     # cosine power q
    norm_const: float = 1.0
    samples: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("omni", "directional"):
            raise ValueError(f"unknown pattern kind {self.kind!r}")
        if self.exponent < 0:
            raise ValueError("exponent must be >= 0")
        if self.samples is None:
            if self.kind != "omni":
                raise ValueError("directional pattern requires samples")
            object.__setattr__(self, "samples", np.ones_like(AZIMUTH_GRID))
        samples = np.asarray(self.samples, dtype=float)
        if samples.shape != AZIMUTH_GRID.shape:
            raise ValueError("samples must be tabulated on AZIMUTH_GRID")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def normalization_error(self) -> float:
        """Deviation of (1/2pi) * trapz(|g|^2) from 1 on the sample grid."""
        energy = np.trapezoid(self.samples**2, AZIMUTH_GRID) / (2.0 * np.pi)
        return float(energy - 1.0)

    def is_normalized(self, tol: float = NORMALIZATION_TOL) -> bool:
        return abs(self.normalization_error()) <= tol


@dataclass(frozen=True, eq=False)
class PolarizationState:
    """Unit Jones vector on the horizontal/vertical basis."""

    jones: np.ndarray

    def __post_init__(self):
        jones = np.asarray(self.jones, dtype=complex)
        if jones.shape != (2,):
            raise ValueError("jones must be a complex 2-vector")
        if abs(np.linalg.norm(jones) - 1.0) > 1e-12:
            raise ValueError("jones vector must have unit norm")
        jones.setflags(write=False)
        object.__setattr__(self, "jones", jones)


@dataclass(frozen=True, eq=False)
class ModeCodebook:
    """Ordered pattern and polarization mode lists; indices are stable ids."""

    patterns: tuple
    polarizations: tuple

    def __post_init__(self):
        object.__setattr__(self, "patterns", tuple(self.patterns))
        object.__setattr__(self, "polarizations", tuple(self.polarizations))
        if not self.patterns or not self.polarizations:
            raise ValueError("codebook needs at least one pattern and one polarization")

    @property
    def num_patterns(self) -> int:
        return len(self.patterns)

    @property
    def num_polarizations(self) -> int:
        return len(self.polarizations)


@dataclass(frozen=True, eq=False)
class ModeAssignment:
    """Per-element pattern / polarization indices into a codebook."""

    pattern_idx: tuple
    polar_idx: tuple
    scope: str = "per_element"   # "per_element" | "array_uniform"

    def __post_init__(self):
        object.__setattr__(self, "pattern_idx", tuple(int(i) for i in self.pattern_idx))
        object.__setattr__(self, "polar_idx", tuple(int(i) for i in self.polar_idx))
        if len(self.pattern_idx) != len(self.polar_idx):
            raise ValueError("pattern_idx and polar_idx must have equal length")
        if self.scope not in ("per_element", "array_uniform"):
            raise ValueError(f"unknown scope {self.scope!r}")
        if self.scope == "array_uniform":
            if len(set(self.pattern_idx)) > 1 or len(set(self.polar_idx)) > 1:
                raise ValueError("array_uniform assignment must be constant across elements")

    @property
    def num_elements(self) -> int:
        return len(self.pattern_idx)

    def validate(self, codebook: ModeCodebook) -> None:
        if self.pattern_idx and not all(0 <= i < codebook.num_patterns for i in self.pattern_idx):
            raise ValueError("pattern index out of codebook bounds")
        if self.polar_idx and not all(0 <= i < codebook.num_polarizations for i in self.polar_idx):
            raise ValueError("polarization index out of codebook bounds")

    def replace_element(self, n: int, pattern_idx: int = None,
                        polar_idx: int = None) -> "ModeAssignment":
        pat = list(self.pattern_idx)
        pol = list(self.polar_idx)
        if pattern_idx is not None:
            pat[n] = pattern_idx
        if polar_idx is not None:
            pol[n] = polar_idx
        return ModeAssignment(tuple(pat), tuple(pol), scope=self.scope)


def uniform_assignment(num_elements: int, pattern_idx: int, polar_idx: int,
                       scope: str = "array_uniform") -> ModeAssignment:
    """All elements set to the same (pattern, polarization) pair."""
    return ModeAssignment((pattern_idx,) * num_elements, (polar_idx,) * num_elements,
                          scope=scope)


def steering_vector(geom: ArrayGeometry, theta: float) -> np.ndarray:
    """ULA response a(theta), element n = exp(j*2*pi*spacing*n*sin(theta)).

    theta is the azimuth in radians, restricted to [-pi/2, pi/2].
    """
    if not -np.pi / 2 <= theta <= np.pi / 2:
        raise ValueError(f"theta must lie in [-pi/2, pi/2], got {theta}")
    n = np.arange(geom.num_elements)
    return np.exp(2j * np.pi * geom.spacing * n * np.sin(theta))


def pattern_gain(pattern: RadiationPattern, theta: float) -> float:
    """Linear amplitude gain of ``pattern`` toward azimuth ``theta``.

    Omni patterns return exactly 1; directional gains are interpolated
    linearly between the tabulated samples. Unnormalized patterns are
    rejected.
    """
    if pattern.kind == "omni":
        return 1.0
    if not pattern.is_normalized():
        raise ValueError(
            f"pattern is not normalized (energy error {pattern.normalization_error():.3e})")
    return float(np.interp(theta, AZIMUTH_GRID, pattern.samples))


def polarization_coupling(rx: PolarizationState, scattering: np.ndarray,
                          tx: PolarizationState) -> complex:
    """rx^H * S * tx for a 2x2 depolarization matrix S."""
    scattering = np.asarray(scattering, dtype=complex)
    if scattering.shape != (2, 2):
        raise ValueError("scattering matrix must be 2x2")
    return complex(rx.jones.conj() @ scattering @ tx.jones)


def element_response(geom: ArrayGeometry, codebook: ModeCodebook,
                     assignment: ModeAssignment, n: int, theta: float) -> complex:
    """Complex response of element ``n`` toward ``theta``: pattern gain times
    the element's steering phase."""
    if not 0 <= n < geom.num_elements:
        raise IndexError(f"element index {n} out of range for N={geom.num_elements}")
    assignment.validate(codebook)
    gain = pattern_gain(codebook.patterns[assignment.pattern_idx[n]], theta)
    return gain * complex(steering_vector(geom, theta)[n])


# ---------------------------------------------------------------------------
# Default codebook construction
# ---------------------------------------------------------------------------

# Boresights of the six searchable directional patterns, spanning the
# [-60, 60] degree service sector with overlapping beams.
DEFAULT_BORESIGHTS_DEG = (-50.0, -30.0, -10.0, 10.0, 30.0, 50.0)
# Boresight of the extra pattern used by the fixed directional-antenna (DA)
# baseline; appended after the six above.
DA_BORESIGHT_DEG = 0.0
DEFAULT_EXPONENT = 4.0
DEFAULT_BEAMWIDTH_DEG = 40.0


def omni_pattern() -> RadiationPattern:
    return RadiationPattern(kind="omni", boresight=0.0, exponent=0.0, norm_const=1.0)


def cosine_power_pattern(boresight_deg: float, exponent: float = DEFAULT_EXPONENT,
                         beamwidth_deg: float = DEFAULT_BEAMWIDTH_DEG,
                         floor: float = PATTERN_FLOOR) -> RadiationPattern:
    """Directional pattern c*cos(s*(theta-phi))^q truncated to its main lobe.

    The angular stretch s is set so the -3 dB power beamwidth equals
    ``beamwidth_deg``; c normalizes radiated power to 1 on the sample grid
    (trapezoidal rule). Outside the +-pi/(2s) support the gain is ``floor``.
    """
    q = float(exponent)
    phi = np.deg2rad(boresight_deg)
    # cos(s*psi)^q drops to 2^(-1/2) in amplitude at psi = beamwidth/2.
    stretch = np.arccos(0.5 ** (1.0 / (2.0 * q))) / np.deg2rad(beamwidth_deg / 2.0)
    psi = stretch * (AZIMUTH_GRID - phi)
    base = np.where(np.abs(psi) <= np.pi / 2.0,
                    np.cos(np.clip(psi, -np.pi / 2, np.pi / 2)) ** q, 0.0)
    energy = np.trapezoid(base**2, AZIMUTH_GRID) / (2.0 * np.pi)
    norm_const = 1.0 / np.sqrt(energy)
    # The floor applies to the final gain; its energy contribution (~1e-8)
    # stays far inside the 1e-6 normalization tolerance.
    samples = np.maximum(base * norm_const, floor)
    return RadiationPattern(kind="directional", boresight=phi, exponent=q,
                            norm_const=float(samples.max()), samples=samples)


def default_polarizations() -> tuple:
    """H, V, slant +45, and right-hand circular."""
    return (
        PolarizationState(np.array([1.0, 0.0], dtype=complex)),
        PolarizationState(np.array([0.0, 1.0], dtype=complex)),
        PolarizationState(np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)),
        PolarizationState(np.array([1.0, -1.0j]) / np.sqrt(2.0)),
    )


def default_codebook() -> ModeCodebook:
    """Seven discrete patterns (omni + six directional) plus the DA-baseline
    pattern at index 7, and four polarization states."""
    patterns = [omni_pattern()]
    patterns += [cosine_power_pattern(b) for b in DEFAULT_BORESIGHTS_DEG]
    patterns.append(cosine_power_pattern(DA_BORESIGHT_DEG))
    return ModeCodebook(patterns=tuple(patterns), polarizations=default_polarizations())


# Stable indices into the default codebook.
OMNI_IDX = 0
DA_PATTERN_IDX = 7
H_POL_IDX = 0


# ---------------------------------------------------------------------------
# Codebook serialization (JSON; floats round-trip bit-exactly)
# ---------------------------------------------------------------------------

def codebook_to_dict(codebook: ModeCodebook) -> dict:
    return {
        "patterns": [
            {
                "kind": p.kind,
                "boresight_deg": float(np.rad2deg(p.boresight)),
                "exponent": p.exponent,
                "samples": [float(x) for x in p.samples],
            }
            for p in codebook.patterns
        ],
        "polarizations": [
            {"re": [float(x) for x in p.jones.real],
             "im": [float(x) for x in p.jones.imag]}
            for p in codebook.polarizations
        ],
    }


def codebook_from_dict(data: dict) -> ModeCodebook:
    patterns = []
    for entry in data["patterns"]:
        samples = np.asarray(entry["samples"], dtype=float)
        patterns.append(RadiationPattern(
            kind=entry["kind"],
            boresight=float(np.deg2rad(entry["boresight_deg"])),
            exponent=float(entry["exponent"]),
            norm_const=float(samples.max()),
            samples=samples,
        ))
    polarizations = []
    for entry in data["polarizations"]:
        jones = np.asarray(entry["re"], dtype=float) + 1j * np.asarray(entry["im"], dtype=float)
        polarizations.append(PolarizationState(jones))
    return ModeCodebook(patterns=tuple(patterns), polarizations=tuple(polarizations))


def save_codebook(codebook: ModeCodebook, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(codebook_to_dict(codebook), fh, indent=1)
        fh.write("\n")


def load_codebook(path) -> ModeCodebook:
    with open(path, "r", encoding="utf-8") as fh:
        return codebook_from_dict(json.load(fh))
