"""Digital beamformers for the two objectives, the analog phase-shifter layer
with its three connectivity variants, and the power-consumption model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arrays import ModeAssignment

POWER_TOL = 1e-9


class SolverError(RuntimeError):
    """An iterative solver failed to produce a usable solution."""


@dataclass(frozen=True, eq=False)
class ConnectivityMask:
    """Binary N x N_RF structure linking phase shifters to RF chains."""

    kind: str            # "fully" | "sub" | "dynamic"
    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=float)
        if mask.ndim != 2:
            raise ValueError("mask must be an N x N_RF matrix")
        if not np.all((mask == 0) | (mask == 1)):
            raise ValueError("mask entries must be 0 or 1")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        if self.kind == "fully":
            if not np.all(mask == 1):
                raise ValueError("fully-connected mask must be all ones")
        elif self.kind in ("sub", "dynamic"):
            if not np.all(mask.sum(axis=1) == 1):
                raise ValueError(f"{self.kind}-connected mask needs exactly one chain per element")
        else:
            raise ValueError(f"unknown connectivity kind {self.kind!r}")

    @property
    def num_connections(self) -> int:
        return int(self.mask.sum())


def connectivity_mask(kind: str, num_elements: int, num_rf_chains: int) -> ConnectivityMask:
    """Build the fully-, sub-, or dynamic-connected mask.

    Sub-connected requires N divisible by N_RF (consecutive blocks); dynamic
    starts from the same block layout, rounded when N is not divisible, and is
    re-optimized later by ``hybrid_factorize``.
    """
    if not 1 <= num_rf_chains <= num_elements:
        raise ValueError("need 1 <= N_RF <= N")
    if kind == "fully":
        return ConnectivityMask("fully", np.ones((num_elements, num_rf_chains)))
    if kind == "sub":
        if num_elements % num_rf_chains != 0:
            raise ValueError(
                f"sub-connected requires N divisible by N_RF, got N={num_elements}, "
                f"N_RF={num_rf_chains}")
        chain = np.repeat(np.arange(num_rf_chains), num_elements // num_rf_chains)
    elif kind == "dynamic":
        base, rem = divmod(num_elements, num_rf_chains)
        sizes = [base + 1 if r < rem else base for r in range(num_rf_chains)]
        chain = np.repeat(np.arange(num_rf_chains), sizes)
    else:
        raise ValueError(f"unknown connectivity kind {kind!r}")
    mask = np.zeros((num_elements, num_rf_chains))
    mask[np.arange(num_elements), chain] = 1.0
    return ConnectivityMask(kind, mask)


@dataclass(frozen=True, eq=False)
class PowerModel:
    """Hardware power constants in watts; defaults are config values."""

    rf_chain: float = 0.25
    phase_shifter: float = 0.03
    ra_switch: float = 0.005
    static: float = 0.5

    def __post_init__(self):
        if min(self.rf_chain, self.phase_shifter, self.ra_switch, self.static) < 0:
            raise ValueError("power constants must be >= 0")


def power_consumption(model: PowerModel, arch: str, num_elements: int,
                      num_rf_chains: int = None, mask: ConnectivityMask = None) -> float:
    """Total consumed power for a fully-digital or tri-hybrid front end."""
    if arch == "fully_digital":
        return model.static + num_elements * (model.rf_chain + model.ra_switch)
    if arch == "tri_hybrid":
        if num_rf_chains is None or mask is None:
            raise ValueError("tri_hybrid needs num_rf_chains and mask")
        return (model.static + num_rf_chains * model.rf_chain
                + mask.num_connections * model.phase_shifter
                + num_elements * model.ra_switch)
    raise ValueError(f"unknown architecture {arch!r}")


@dataclass(frozen=True, eq=False)
class BeamformingStack:
    """Mode assignment + analog phase shifters + baseband precoder.

    ``f_rf`` and ``mask`` are None for a fully-digital stack, in which case
    ``f_bb`` is the N x K precoder itself.
    """

    modes: ModeAssignment
    f_bb: np.ndarray
    power_budget: float
    f_rf: np.ndarray = None
    mask: ConnectivityMask = None

    def __post_init__(self):
        f_bb = np.atleast_2d(np.asarray(self.f_bb, dtype=complex))
        object.__setattr__(self, "f_bb", f_bb)
        if self.f_rf is not None:
            if self.mask is None:
                raise ValueError("analog stage requires its connectivity mask")
            f_rf = np.asarray(self.f_rf, dtype=complex)
            object.__setattr__(self, "f_rf", f_rf)
            m = self.mask.mask
            if f_rf.shape != m.shape:
                raise ValueError("f_rf shape must match the mask")
            if np.any(np.abs(f_rf[m == 0]) > 0):
                raise ValueError("f_rf must be zero where the mask is zero")
            on = np.abs(f_rf[m == 1])
            if on.size and np.max(np.abs(on - 1.0)) > 1e-9:
                raise ValueError("f_rf entries must be unit modulus where the mask is one")
        used = np.linalg.norm(self.effective_precoder()) ** 2
        if used > self.power_budget + POWER_TOL:
            raise ValueError(f"precoder power {used} exceeds budget {self.power_budget}")

    def effective_precoder(self) -> np.ndarray:
        if self.f_rf is None:
            return self.f_bb
        return self.f_rf @ self.f_bb


# ---------------------------------------------------------------------------
# Communication: sum rate and WMMSE
# ---------------------------------------------------------------------------

def sum_rate(h: np.ndarray, precoder: np.ndarray, noise_power: float) -> float:
    """Multi-user sum rate in bits/s/Hz.

    ``h`` is K x N with row k the conjugated user channel (so row @ column is
    the received amplitude); ``precoder`` is N x K with one column per user.
    """
    if noise_power <= 0:
        raise ValueError("noise power must be > 0")
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    f = np.atleast_2d(np.asarray(precoder, dtype=complex))
    if h.shape[1] != f.shape[0] or h.shape[0] != f.shape[1]:
        raise ValueError(f"dimension mismatch: H is {h.shape}, F is {f.shape}")
    g = h @ f
    signal = np.abs(np.diag(g)) ** 2
    interference = np.sum(np.abs(g) ** 2, axis=1) - signal
    return float(np.sum(np.log2(1.0 + signal / (interference + noise_power))))


def _power_given_mu(mu, eigvals, b_proj_sq):
    return float((b_proj_sq / (eigvals[:, None] + mu) ** 2).sum())


def wmmse_precoder(h: np.ndarray, power: float, noise_power: float,
                   max_iters: int = 300, tol: float = 1e-10,
                   init: np.ndarray = None):
    """Iterative weighted-MMSE sum-rate precoder for the downlink.

    Alternates MMSE receive scalars, MSE weights, and the regularized
    transmit update whose Lagrange multiplier is bisected to meet the power
    budget. Returns (precoder, rate_trace); the trace is non-decreasing and
    the returned precoder uses the full budget.

    Parameters
    ----------
    h : (K, N) complex ndarray
        User channels, one row per user.
    power : float
        Total transmit power budget.
    noise_power : float
        Receiver noise power.
    max_iters, tol :
        Stop when the rate improves by less than ``tol`` (absolute) or after
        ``max_iters`` iterations.
    init : (N, K) complex ndarray, optional
        Warm-start precoder; scaled to the power budget before use.
    """
    if power <= 0:
        raise ValueError("power must be > 0")
    if noise_power <= 0:
        raise ValueError("noise power must be > 0")
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    if not np.all(np.isfinite(h)):
        raise ValueError("channel must be finite")
    n_users, n_elem = h.shape

    f = None
    if init is not None:
        init = np.atleast_2d(np.asarray(init, dtype=complex))
        nrm = np.linalg.norm(init)
        if init.shape == (n_elem, n_users) and nrm > 0:
            f = init * (np.sqrt(power) / nrm)
    if f is None:
        f = h.conj().T
        nrm = np.linalg.norm(f)
        if nrm > 0:
            f = f * (np.sqrt(power) / nrm)
    if np.linalg.norm(f) == 0:
        # Degenerate all-zero channel: any full-power precoder achieves rate 0.
        f = np.zeros((n_elem, n_users), dtype=complex)
        f[0, :] = np.sqrt(power / n_users)
        return f, [0.0]

    trace = [sum_rate(h, f, noise_power)]
    for _ in range(max_iters):
        g = h @ f
        denom = np.sum(np.abs(g) ** 2, axis=1) + noise_power
        sig = np.diag(g)
        u = sig / denom
        mse = 1.0 - np.abs(sig) ** 2 / denom
        weights = 1.0 / np.maximum(mse, 1e-300)

        d = weights * np.abs(u) ** 2
        a = (h.conj().T * d) @ h
        b = h.conj().T * (weights * u)
        eigvals, eigvecs = np.linalg.eigh(a)
        eigvals = np.maximum(eigvals, 0.0)
        b_proj = eigvecs.conj().T @ b
        b_proj_sq = np.abs(b_proj) ** 2

        # Null-space components of b are numerical noise; drop them so the
        # mu -> 0 limit stays finite.
        cutoff = eigvals.max() * 1e-14
        b_proj_sq = np.where(eigvals[:, None] <= cutoff, 0.0, b_proj_sq)
        live = eigvals > cutoff
        if np.any(live) and _power_given_mu(0.0, eigvals[live], b_proj_sq[live]) <= power:
            mu = 0.0
        else:
            lo, hi = 0.0, 1.0
            while _power_given_mu(hi, eigvals, b_proj_sq) > power:
                hi *= 2.0
                if hi > 1e30:
                    raise SolverError("power bisection failed to bracket")
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if _power_given_mu(mid, eigvals, b_proj_sq) > power:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= 1e-13 * max(hi, 1e-12):
                    break
            mu = hi
        scale = np.where(eigvals[:, None] + mu > 0, 1.0 / (eigvals[:, None] + mu), 0.0)
        scale = np.where(eigvals[:, None] <= cutoff, 0.0, scale)
        f_new = eigvecs @ (scale * b_proj)

        rate = sum_rate(h, f_new, noise_power)
        if rate < trace[-1]:  # float-level regression; keep the better point
            break
        f = f_new
        trace.append(rate)
        if abs(rate - trace[-2]) < tol:
            break

    used = np.linalg.norm(f)
    if used > 0:
        f = f * (np.sqrt(power) / used)
        trace.append(sum_rate(h, f, noise_power))
    return f, trace


# ---------------------------------------------------------------------------
# Sensing: SCNR, MVDR receive filter, alternating transmit design
# ---------------------------------------------------------------------------

def scnr(h_target: np.ndarray, h_clutter, sigma_t2: float, sigma_c2,
         f: np.ndarray, w: np.ndarray, noise_power: float) -> float:
    """Radar signal-to-clutter-plus-noise ratio for transmit beam ``f`` and
    receive filter ``w``; invariant to rescaling of ``w``."""
    if noise_power <= 0:
        raise ValueError("noise power must be > 0")
    w = np.asarray(w, dtype=complex)
    wn2 = float(np.linalg.norm(w) ** 2)
    if wn2 == 0:
        raise ValueError("receive filter w must be nonzero")
    num = sigma_t2 * np.abs(w.conj() @ (h_target @ f)) ** 2
    den = noise_power * wn2
    for sc2, hc in zip(sigma_c2, h_clutter):
        den += sc2 * np.abs(w.conj() @ (hc @ f)) ** 2
    return float(num / den)


def mvdr_receive_filter(h_target: np.ndarray, h_clutter, sigma_c2,
                        f: np.ndarray, noise_power: float) -> np.ndarray:
    """SCNR-optimal receive filter w = Q^-1 (H_t f) with Q the clutter-plus-
    noise covariance induced by ``f``."""
    if noise_power <= 0:
        raise ValueError("noise power must be > 0")
    u = h_target @ f
    n = u.shape[0]
    q = noise_power * np.eye(n, dtype=complex)
    for sc2, hc in zip(sigma_c2, h_clutter):
        cf = hc @ f
        q += sc2 * np.outer(cf, cf.conj())
    # Q is positive definite for any noise_power > 0; the fallback only fires
    # when the noise floor underflows the clutter terms numerically.
    w = _solve_hermitian(q, u)
    if not np.all(np.isfinite(w)):
        raise SolverError("MVDR covariance solve produced non-finite filter")
    return w


def _solve_hermitian(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(a, b, rcond=None)[0]


def _fix_phase(v: np.ndarray) -> np.ndarray:
    """Rotate so the first significantly nonzero component is real positive."""
    mags = np.abs(v)
    if mags.max() == 0:
        return v
    idx = int(np.argmax(mags > 1e-12 * mags.max()))
    ph = v[idx] / abs(v[idx])
    return v * ph.conj()


def scnr_transmit_beamformer(h_target: np.ndarray, h_clutter, sigma_t2: float,
                             sigma_c2, noise_power: float, power: float,
                             max_iters: int = 300, tol: float = 1e-10,
                             init_f: np.ndarray = None):
    """Alternating SCNR maximization over the transmit beam and receive filter.

    Each round first sets the MVDR receive filter for the current beam, then
    replaces the beam with the full-power maximizer of the resulting
    generalized Rayleigh quotient (closed form, since the numerator is
    rank one). Returns (f, w, scnr_trace); the trace is non-decreasing and
    iteration stops once the relative improvement drops below ``tol``.
    """
    if power <= 0:
        raise ValueError("power must be > 0")
    h_target = np.asarray(h_target, dtype=complex)
    if not np.all(np.isfinite(h_target)):
        raise ValueError("target channel must be finite")
    h_clutter = [np.asarray(m, dtype=complex) for m in h_clutter]
    sigma_c2 = list(sigma_c2)
    n = h_target.shape[1]

    f = None
    if init_f is not None:
        init_f = np.asarray(init_f, dtype=complex)
        if init_f.shape == (n,) and np.linalg.norm(init_f) > 0:
            f = _fix_phase(init_f) * (np.sqrt(power) / np.linalg.norm(init_f))
    if f is None:
        if np.linalg.norm(h_target) == 0:
            f = np.zeros(n, dtype=complex)
            f[0] = np.sqrt(power)
            w = np.zeros(h_target.shape[0], dtype=complex)
            w[0] = 1.0
            return f, w, [0.0]
        _, _, vh = np.linalg.svd(h_target)
        f = _fix_phase(vh[0].conj()) * np.sqrt(power)

    trace = []
    w = None
    for _ in range(max_iters):
        w = mvdr_receive_filter(h_target, h_clutter, sigma_c2, f, noise_power)
        if np.linalg.norm(w) == 0:
            trace.append(0.0)
            break
        v = h_target.conj().T @ w
        b = (noise_power * float(np.linalg.norm(w) ** 2) / power) * np.eye(n, dtype=complex)
        for sc2, hc in zip(sigma_c2, h_clutter):
            cw = hc.conj().T @ w
            b += sc2 * np.outer(cw, cw.conj())
        f_dir = _solve_hermitian(b, v)
        if not np.all(np.isfinite(f_dir)):
            raise SolverError("transmit eigen step produced a non-finite beam")
        nrm = np.linalg.norm(f_dir)
        if nrm == 0:
            trace.append(0.0)
            break
        f = _fix_phase(f_dir) * (np.sqrt(power) / nrm)
        value = scnr(h_target, h_clutter, sigma_t2, sigma_c2, f, w, noise_power)
        trace.append(value)
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) <= tol * max(abs(trace[-1]), 1e-300):
            break

    w = mvdr_receive_filter(h_target, h_clutter, sigma_c2, f, noise_power)
    if np.linalg.norm(w) == 0:
        w = np.zeros(h_target.shape[0], dtype=complex)
        w[0] = 1.0
        trace.append(0.0)
    else:
        trace.append(scnr(h_target, h_clutter, sigma_t2, sigma_c2, f, w, noise_power))
    return f, w, trace


# ---------------------------------------------------------------------------
# Analog/baseband factorization
# ---------------------------------------------------------------------------

def _init_analog(mask: ConnectivityMask) -> np.ndarray:
    """Deterministic unit-modulus start: DFT phases restricted to the mask."""
    n, n_rf = mask.mask.shape
    grid = np.outer(np.arange(n), np.arange(n_rf))
    return np.exp(2j * np.pi * grid / n) * mask.mask


def _project_phases(f_rf: np.ndarray, f_bb: np.ndarray, f_target: np.ndarray,
                    m: np.ndarray) -> np.ndarray:
    """Chain-by-chain unit-modulus phase update.

    Each masked column is set to the entrywise phase of (residual target)
    @ row(F_BB)^H, the exact minimizer of the approximation error over that
    column with the others held fixed, so the residual never increases. For a
    single RF chain this is the phase of F_target @ F_BB^H itself.
    """
    f_rf = f_rf.copy()
    for r in range(f_rf.shape[1]):
        row = f_bb[r]
        if not np.any(np.abs(row)):
            continue
        partial = f_target - f_rf @ f_bb + np.outer(f_rf[:, r], row)
        proj = partial @ row.conj()
        mag = np.abs(proj)
        col = np.where(mag > 0, proj / np.where(mag > 0, mag, 1.0), f_rf[:, r])
        col = np.where((m[:, r] == 1) & (np.abs(col) == 0), 1.0, col)
        f_rf[:, r] = col * m[:, r]
    return f_rf


def hybrid_factorize(f_target: np.ndarray, mask: ConnectivityMask, power: float,
                     max_iters: int = 80, tol: float = 1e-12,
                     reassign_period: int = 8):
    """Approximate a digital precoder by masked unit-modulus phases times a
    baseband matrix.

    Alternates an exact least-squares baseband update with a per-chain
    unit-modulus phase projection of the target onto the mask; dynamic
    connectivity additionally reassigns each element to its best RF chain
    every ``reassign_period`` iterations. The residual checkpoint sequence is
    non-increasing (a step that would increase it is rolled back and the
    iteration stops). Returns (f_rf, f_bb, residual) with the product rescaled
    to the power budget; the residual is the pre-rescale approximation error.
    """
    if power <= 0:
        raise ValueError("power must be > 0")
    f_target = np.atleast_2d(np.asarray(f_target, dtype=complex))
    n, n_rf = mask.mask.shape
    if f_target.shape[0] != n:
        raise ValueError("target row count must match the mask")

    m = mask.mask.copy()
    f_rf = _init_analog(mask)
    if np.linalg.norm(f_target) == 0:
        return f_rf, np.zeros((n_rf, f_target.shape[1]), dtype=complex), 0.0

    best_rf, best_bb, best_resid = None, None, np.inf
    dynamic = mask.kind == "dynamic"
    just_reassigned = False
    for it in range(max_iters):
        f_bb = np.linalg.lstsq(f_rf, f_target, rcond=None)[0]
        resid = float(np.linalg.norm(f_target - f_rf @ f_bb))
        if resid > best_resid + 1e-12:
            break
        converged = np.isfinite(best_resid) and best_resid - resid <= tol * max(resid, 1.0)
        best_rf, best_bb, best_resid = f_rf, f_bb, min(resid, best_resid)
        if converged and not (dynamic and not just_reassigned):
            break

        if dynamic and (converged or (it + 1) % reassign_period == 0):
            # Per element, pick the chain whose baseband row best explains the
            # target row under an optimal unit-modulus phase.
            overlap = np.abs(f_target @ f_bb.conj().T)            # N x N_RF
            cost = (np.linalg.norm(f_bb, axis=1) ** 2)[None, :] - 2.0 * overlap
            chain = np.argmin(cost, axis=1)
            m = np.zeros_like(m)
            m[np.arange(n), chain] = 1.0
            f_rf = np.exp(1j * np.angle(np.where(m == 1, f_target @ f_bb.conj().T, 1.0))) * m
            just_reassigned = True
        else:
            just_reassigned = False
            f_rf = _project_phases(f_rf, f_bb, f_target, m)

    f_rf, f_bb = best_rf, best_bb
    used = np.linalg.norm(f_rf @ f_bb)
    if used > 0:
        f_bb = f_bb * (np.sqrt(power) / used)
    return f_rf, f_bb, best_resid
