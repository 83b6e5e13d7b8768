import numpy as np
import pytest

from rasim.arrays import ArrayGeometry, default_codebook, steering_vector, uniform_assignment
from rasim.beamforming import (
    BeamformingStack,
    ConnectivityMask,
    PowerModel,
    connectivity_mask,
    hybrid_factorize,
    mvdr_receive_filter,
    power_consumption,
    scnr,
    scnr_transmit_beamformer,
    sum_rate,
    wmmse_precoder,
)
from rasim.channel import PathLossParams, SensingEntity, sensing_channel


def _random_channel(rng, k, n, scale=1.0):
    return scale * (rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n)))


# ---------------------------------------------------------------------------
# sum_rate
# ---------------------------------------------------------------------------

def test_sum_rate_scalar_unit_case():
    assert sum_rate(np.array([[1.0 + 0j]]), np.array([[1.0 + 0j]]), 1.0) == pytest.approx(1.0)


def test_sum_rate_orthogonal_users_add():
    h = np.array([[1.0, 0.0], [0.0, 1.0]], dtype=complex)
    f = np.array([[2.0, 0.0], [0.0, 3.0]], dtype=complex)
    expected = np.log2(1 + 4.0 / 0.5) + np.log2(1 + 9.0 / 0.5)
    assert sum_rate(h, f, 0.5) == pytest.approx(expected, rel=1e-12)


def test_sum_rate_matches_sinr_oracle():
    rng = np.random.default_rng(11)
    h = _random_channel(rng, 3, 6)
    f = _random_channel(rng, 6, 3)
    noise = 0.37
    oracle = 0.0
    for k in range(3):
        sig = abs(h[k] @ f[:, k]) ** 2
        interf = sum(abs(h[k] @ f[:, j]) ** 2 for j in range(3) if j != k)
        oracle += np.log2(1 + sig / (interf + noise))
    assert sum_rate(h, f, noise) == pytest.approx(oracle, rel=1e-12)


def test_sum_rate_rejects_bad_noise():
    with pytest.raises(ValueError):
        sum_rate(np.eye(2, dtype=complex), np.eye(2, dtype=complex), 0.0)


# ---------------------------------------------------------------------------
# WMMSE
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_wmmse_single_user_reaches_capacity(seed):
    rng = np.random.default_rng(seed)
    h = _random_channel(rng, 1, 8, scale=3e-7)
    power, noise = 1.0, 1e-11
    f, trace = wmmse_precoder(h, power, noise)
    capacity = np.log2(1 + power * np.linalg.norm(h) ** 2 / noise)
    assert trace[-1] == pytest.approx(capacity, rel=1e-6)
    # maximum-ratio transmission: precoder aligned with h^H
    direction = f[:, 0] / np.linalg.norm(f)
    alignment = abs(h[0] @ direction) / np.linalg.norm(h)
    assert alignment == pytest.approx(1.0, rel=1e-9)


def test_wmmse_two_orthogonal_users_split_power():
    h = np.zeros((2, 4), dtype=complex)
    h[0, 0] = 1.0
    h[1, 1] = 1.0
    power, noise = 2.0, 0.1
    f, trace = wmmse_precoder(h, power, noise)
    expected = 2 * np.log2(1 + (power / 2) / noise)
    assert trace[-1] == pytest.approx(expected, rel=1e-8)


def test_wmmse_zero_channel():
    f, trace = wmmse_precoder(np.zeros((2, 4), dtype=complex), 1.0, 1e-3)
    assert trace[-1] == 0.0
    assert np.linalg.norm(f) ** 2 == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_wmmse_trace_monotone_and_power_feasible(seed):
    rng = np.random.default_rng(100 + seed)
    k = int(rng.integers(1, 4))
    h = _random_channel(rng, k, 8, scale=10.0 ** rng.uniform(-7, 0))
    power = float(rng.uniform(0.5, 2.0))
    noise = 10.0 ** rng.uniform(-11, -1)
    f, trace = wmmse_precoder(h, power, noise)
    diffs = np.diff(trace)
    assert np.all(diffs >= -1e-9)
    assert np.linalg.norm(f) ** 2 == pytest.approx(power, abs=1e-9)


def test_wmmse_rejects_non_finite_channel():
    h = np.array([[np.inf + 0j, 1.0]])
    with pytest.raises(ValueError):
        wmmse_precoder(h, 1.0, 1.0)


# ---------------------------------------------------------------------------
# SCNR
# ---------------------------------------------------------------------------

def test_scnr_rank_one_hand_value():
    # no clutter, H_t = a a^T, w = a, f = sqrt(P) conj(a)/||a||:
    # SCNR = sigma_t^2 P N^2 / noise
    n, power, noise, sigma_t2 = 8, 2.0, 0.01, 1.5
    a = steering_vector(ArrayGeometry(n), 0.37)
    h_t = np.outer(a, a)
    f = np.sqrt(power) * a.conj() / np.linalg.norm(a)
    value = scnr(h_t, [], sigma_t2, [], f, a, noise)
    assert value == pytest.approx(sigma_t2 * power * n**2 / noise, rel=1e-12)


def test_scnr_scale_invariant_in_w():
    rng = np.random.default_rng(2)
    h_t = _random_channel(rng, 4, 4)
    h_c = [_random_channel(rng, 4, 4)]
    f = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    w = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    v1 = scnr(h_t, h_c, 1.0, [2.0], f, w, 0.1)
    v2 = scnr(h_t, h_c, 1.0, [2.0], f, 10.0 * w, 0.1)
    assert v2 == pytest.approx(v1, rel=1e-12)


def test_scnr_zero_when_f_in_null_space():
    a = steering_vector(ArrayGeometry(4), 0.2)
    h_t = np.outer(a, a)  # right singular space is span(conj(a))
    f = np.zeros(4, dtype=complex)
    f[0], f[1] = a[1], -a[0]  # a^T f = 0, so f is orthogonal to every right singular vector
    assert abs(np.dot(a, f)) < 1e-12
    value = scnr(h_t, [], 1.0, [], f, a, 1.0)
    assert value == pytest.approx(0.0, abs=1e-25)


def test_scnr_rejects_zero_w():
    with pytest.raises(ValueError):
        scnr(np.eye(2, dtype=complex), [], 1.0, [], np.ones(2), np.zeros(2), 1.0)


# ---------------------------------------------------------------------------
# MVDR receive filter
# ---------------------------------------------------------------------------

def test_mvdr_without_clutter_is_matched_filter():
    rng = np.random.default_rng(3)
    h_t = _random_channel(rng, 5, 5)
    f = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    noise = 0.3
    w = mvdr_receive_filter(h_t, [], [], f, noise)
    np.testing.assert_allclose(w, (h_t @ f) / noise, rtol=1e-12)


def test_mvdr_aligned_clutter_matches_sherman_morrison():
    # One clutter whose receive signature is proportional to the target's:
    # SCNR collapses to sigma_t^2 ||u||^2 / (sigma_c^2 c^2 ||u||^2 + noise).
    rng = np.random.default_rng(4)
    n, noise, sigma_t2, sigma_c2, c = 6, 0.05, 1.3, 4.0, 0.7
    h_t = _random_channel(rng, n, n)
    f = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    h_c = c * h_t  # H_c f parallel to H_t f
    u = h_t @ f
    w = mvdr_receive_filter(h_t, [h_c], [sigma_c2], f, noise)
    achieved = scnr(h_t, [h_c], sigma_t2, [sigma_c2], f, w, noise)
    u2 = np.linalg.norm(u) ** 2
    hand = sigma_t2 * u2 / (sigma_c2 * c**2 * u2 + noise)
    assert achieved == pytest.approx(hand, rel=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_mvdr_beats_random_filters(seed):
    rng = np.random.default_rng(40 + seed)
    n = 6
    h_t = _random_channel(rng, n, n)
    h_c = [_random_channel(rng, n, n) for _ in range(2)]
    sigma_c2 = [3.0, 5.0]
    f = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    noise = 0.02
    w = mvdr_receive_filter(h_t, h_c, sigma_c2, f, noise)
    best = scnr(h_t, h_c, 1.0, sigma_c2, f, w, noise)
    for _ in range(200):
        cand = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        assert scnr(h_t, h_c, 1.0, sigma_c2, f, cand / np.linalg.norm(cand), noise) \
            <= best * (1 + 1e-12)


# ---------------------------------------------------------------------------
# Alternating SCNR transmit design
# ---------------------------------------------------------------------------

def test_alternating_rank_one_closed_form():
    rng = np.random.default_rng(5)
    n, power, noise, sigma_t2 = 6, 1.7, 0.01, 0.8
    a = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    h_t = np.outer(a, b)
    f, w, trace = scnr_transmit_beamformer(h_t, [], sigma_t2, [], noise, power)
    expected = sigma_t2 * power * np.linalg.norm(a) ** 2 * np.linalg.norm(b) ** 2 / noise
    assert trace[-1] == pytest.approx(expected, rel=1e-10)
    alignment = abs(np.vdot(f, b.conj())) / (np.linalg.norm(f) * np.linalg.norm(b))
    assert alignment == pytest.approx(1.0, rel=1e-9)


def test_alternating_orthogonal_clutter_reaches_clutter_free_value():
    geom = ArrayGeometry(4)
    codebook = default_codebook()
    modes = uniform_assignment(4, 0, 0)
    params = PathLossParams()
    # sin separation of 2/N makes the steering vectors exactly orthogonal
    theta_t, theta_c = 0.0, float(np.arcsin(0.5))
    target = SensingEntity(role="target", r=45.0, theta=theta_t, reflectivity=1.0,
                           scattering=np.eye(2))
    clutter = SensingEntity(role="clutter", r=45.0, theta=theta_c, reflectivity=10.0,
                            scattering=np.eye(2))
    h_t = sensing_channel(geom, codebook, modes, modes, target, params)
    h_c = sensing_channel(geom, codebook, modes, modes, clutter, params)
    noise, power = 1e-25, 1.0
    _, _, trace_free = scnr_transmit_beamformer(h_t, [], 1.0, [], noise, power)
    _, _, trace = scnr_transmit_beamformer(h_t, [h_c], 1.0, [10.0], noise, power)
    assert trace[-1] == pytest.approx(trace_free[-1], rel=1e-6)


def test_alternating_beats_dense_grid_on_sphere():
    # N=2 exhaustive oracle: 10^4 transmit beams on the power sphere.
    rng = np.random.default_rng(6)
    n, power, noise = 2, 1.0, 0.05
    h_t = _random_channel(rng, n, n)
    h_c = [_random_channel(rng, n, n)]
    sigma_c2 = [5.0]
    f_opt, w_opt, trace = scnr_transmit_beamformer(h_t, h_c, 1.0, sigma_c2, noise, power)
    best_grid = 0.0
    for phi in np.linspace(0, np.pi / 2, 100):
        for psi in np.linspace(0, 2 * np.pi, 100, endpoint=False):
            f = np.sqrt(power) * np.array([np.cos(phi), np.sin(phi) * np.exp(1j * psi)])
            w = mvdr_receive_filter(h_t, h_c, sigma_c2, f, noise)
            best_grid = max(best_grid, scnr(h_t, h_c, 1.0, sigma_c2, f, w, noise))
    assert trace[-1] >= best_grid * 10 ** (-0.001)  # within 0.01 dB


@pytest.mark.parametrize("seed", range(20))
def test_alternating_trace_monotone(seed):
    # Channel scale spans realistic path-loss magnitudes; noise is drawn
    # relative to the channel power so the metric stays numerically resolvable.
    rng = np.random.default_rng(60 + seed)
    n = 6
    scale = 10.0 ** rng.uniform(-13, 0)
    h_t = _random_channel(rng, n, n, scale=scale)
    h_c = [_random_channel(rng, n, n, scale=scale) for _ in range(2)]
    noise = scale**2 * 10.0 ** rng.uniform(-8, -1)
    f, w, trace = scnr_transmit_beamformer(h_t, h_c, 1.0, [10.0, 10.0], noise, 1.0)
    diffs = np.diff(trace)
    floor = -1e-9 * np.maximum(1.0, np.abs(np.asarray(trace[1:])))
    assert np.all(diffs >= floor)
    assert np.linalg.norm(f) ** 2 == pytest.approx(1.0, rel=1e-12)


def test_alternating_zero_target_channel():
    f, w, trace = scnr_transmit_beamformer(np.zeros((4, 4), complex), [], 1.0, [], 0.1, 1.0)
    assert trace[-1] == 0.0
    assert np.linalg.norm(f) ** 2 == pytest.approx(1.0, rel=1e-12)


# ---------------------------------------------------------------------------
# Connectivity masks
# ---------------------------------------------------------------------------

def test_fully_mask_all_ones():
    m = connectivity_mask("fully", 4, 2)
    assert np.array_equal(m.mask, np.ones((4, 2)))


def test_sub_mask_block_diagonal():
    m = connectivity_mask("sub", 4, 2)
    assert np.array_equal(m.mask, [[1, 0], [1, 0], [0, 1], [0, 1]])


def test_dynamic_mask_without_divisibility():
    m = connectivity_mask("dynamic", 3, 2)
    assert np.array_equal(m.mask.sum(axis=1), np.ones(3))
    assert np.array_equal(m.mask, [[1, 0], [1, 0], [0, 1]])


def test_sub_mask_requires_divisibility():
    with pytest.raises(ValueError, match="divisible"):
        connectivity_mask("sub", 8, 3)


def test_mask_bounds():
    with pytest.raises(ValueError):
        connectivity_mask("fully", 4, 5)


# ---------------------------------------------------------------------------
# Hybrid factorization
# ---------------------------------------------------------------------------

def test_factorize_exact_when_nrf_equals_n():
    rng = np.random.default_rng(7)
    f_t = _random_channel(rng, 6, 2)
    mask = connectivity_mask("fully", 6, 6)
    f_rf, f_bb, resid = hybrid_factorize(f_t, mask, power=float(np.linalg.norm(f_t) ** 2))
    assert resid < 1e-9
    np.testing.assert_allclose(f_rf @ f_bb, f_t, atol=1e-9)


def test_factorize_rank_one_phase_projection_formula():
    rng = np.random.default_rng(8)
    t = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    mask = connectivity_mask("fully", 8, 1)
    f_rf, f_bb, resid = hybrid_factorize(t.reshape(-1, 1), mask, power=1.0)
    mags = np.abs(t)
    hand = np.linalg.norm(mags - mags.mean())
    assert resid == pytest.approx(hand, rel=1e-10)
    # analog phases follow the target entries up to one global rotation
    rel = f_rf[:, 0] * np.exp(-1j * np.angle(t))
    np.testing.assert_allclose(rel, rel[0], rtol=1e-9)


@pytest.mark.parametrize("seed", range(25))
def test_factorize_constraint_set_nesting(seed):
    rng = np.random.default_rng(200 + seed)
    f_t = _random_channel(rng, 8, 2)
    power = float(np.linalg.norm(f_t) ** 2)
    resil = {}
    for kind in ("fully", "dynamic", "sub"):
        mask = connectivity_mask(kind, 8, 4)
        _, _, resil[kind] = hybrid_factorize(f_t, mask, power)
    assert resil["fully"] <= resil["dynamic"] + 1e-9
    assert resil["dynamic"] <= resil["sub"] + 1e-9


def test_factorize_zero_target():
    mask = connectivity_mask("sub", 4, 2)
    f_rf, f_bb, resid = hybrid_factorize(np.zeros((4, 1), complex), mask, power=1.0)
    assert resid == 0.0
    assert np.all(f_bb == 0)


@pytest.mark.parametrize("kind,nrf", [("fully", 2), ("sub", 2), ("dynamic", 3)])
def test_factorize_respects_mask_and_power(kind, nrf):
    rng = np.random.default_rng(9)
    f_t = _random_channel(rng, 6, 2)
    mask = connectivity_mask(kind, 6, nrf)
    f_rf, f_bb, _ = hybrid_factorize(f_t, mask, power=3.0)
    on = np.abs(f_rf) > 0
    if kind != "dynamic":
        assert np.array_equal(on.astype(float), mask.mask)
    else:
        assert np.array_equal(on.sum(axis=1), np.ones(6))
    assert np.allclose(np.abs(f_rf[on]), 1.0, atol=1e-12)
    assert np.linalg.norm(f_rf @ f_bb) ** 2 == pytest.approx(3.0, abs=1e-9)


# ---------------------------------------------------------------------------
# Power model and stacks
# ---------------------------------------------------------------------------

def test_power_fully_digital_default():
    assert power_consumption(PowerModel(), "fully_digital", 8) == pytest.approx(2.54)


def test_power_tri_hybrid_default():
    mask = connectivity_mask("fully", 8, 2)
    assert power_consumption(PowerModel(), "tri_hybrid", 8, 2, mask) == pytest.approx(1.52)


def test_power_sub_saves_phase_shifters():
    full = power_consumption(PowerModel(), "tri_hybrid", 8, 2, connectivity_mask("fully", 8, 2))
    sub = power_consumption(PowerModel(), "tri_hybrid", 8, 2, connectivity_mask("sub", 8, 2))
    assert full - sub == pytest.approx(0.24)


def test_stack_power_budget_enforced():
    modes = uniform_assignment(4, 0, 0)
    f_bb = np.ones((4, 1), dtype=complex)
    with pytest.raises(ValueError, match="power"):
        BeamformingStack(modes=modes, f_bb=f_bb, power_budget=1.0)


def test_stack_mask_respected():
    modes = uniform_assignment(4, 0, 0)
    mask = connectivity_mask("sub", 4, 2)
    bad_rf = np.ones((4, 2), dtype=complex)  # nonzero off the mask
    with pytest.raises(ValueError, match="mask"):
        BeamformingStack(modes=modes, f_bb=np.zeros((2, 1), complex), power_budget=1.0,
                         f_rf=bad_rf, mask=mask)
