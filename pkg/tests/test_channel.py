import dataclasses

import numpy as np
import pytest

from rasim.arrays import (
    ArrayGeometry,
    PolarizationState,
    default_codebook,
    pattern_gain,
    steering_vector,
    uniform_assignment,
)
from rasim.channel import (
    ChannelSet,
    CommUser,
    PathComponent,
    PathLossParams,
    SensingEntity,
    comm_channel,
    depolarization_profile,
    load_matrix_text,
    path_loss,
    sample_depolarization,
    save_matrix_text,
    sensing_channel,
)
from rasim.scenario import ScenarioConfig, build_scenario, synthesize_channels

CODEBOOK = default_codebook()
H = CODEBOOK.polarizations[0]
V = CODEBOOK.polarizations[1]


# ---------------------------------------------------------------------------
# Path loss
# ---------------------------------------------------------------------------

def test_path_loss_at_reference_distance():
    assert path_loss(PathLossParams(), 1.0) == pytest.approx(1e-3, rel=1e-15)


def test_path_loss_at_10m():
    # 10^-3 * 10^-2.2, frozen from a 40-digit evaluation
    assert path_loss(PathLossParams(), 10.0) == pytest.approx(6.3095734448019325e-6, rel=1e-12)


def test_path_loss_at_inner_radius():
    # 10^-3 * 30^-2.2, frozen from a 40-digit evaluation
    assert path_loss(PathLossParams(), 30.0) == pytest.approx(5.62772982346798e-7, rel=1e-12)


def test_path_loss_monotone_decreasing():
    params = PathLossParams()
    r = np.linspace(0.5, 120.0, 200)
    vals = np.array([path_loss(params, x) for x in r])
    assert np.all(np.diff(vals) < 0)


def test_path_loss_rejects_nonpositive_range():
    with pytest.raises(ValueError):
        path_loss(PathLossParams(), 0.0)


def test_path_loss_params_invariants():
    with pytest.raises(ValueError):
        PathLossParams(d0=0.0)
    with pytest.raises(ValueError):
        PathLossParams(exponent=-1.0)


# ---------------------------------------------------------------------------
# Depolarization sampling
# ---------------------------------------------------------------------------

def test_zero_variance_profile_gives_zero_matrix():
    m = sample_depolarization(np.random.default_rng(0), np.zeros((2, 2)))
    assert np.all(m == 0)


def test_depolarization_second_moments():
    rng = np.random.default_rng(42)
    profile = depolarization_profile(0.3)
    draws = np.stack([sample_depolarization(rng, profile) for _ in range(100_000)])
    second_moment = np.mean(np.abs(draws) ** 2, axis=0)
    np.testing.assert_allclose(second_moment, profile, rtol=0.03)
    # zero mean, both quadratures
    np.testing.assert_allclose(np.mean(draws, axis=0), 0.0, atol=0.02)


def test_depolarization_seed_determinism():
    a = sample_depolarization(np.random.default_rng(7), depolarization_profile())
    b = sample_depolarization(np.random.default_rng(7), depolarization_profile())
    assert np.array_equal(a, b)


def test_depolarization_rejects_negative_variance():
    with pytest.raises(ValueError):
        sample_depolarization(np.random.default_rng(0), np.array([[1.0, -0.1], [0.1, 1.0]]))


# ---------------------------------------------------------------------------
# Communication channel
# ---------------------------------------------------------------------------

def _los_user(r, theta, gain=1.0 + 0.0j, depol=None, rx=H):
    depol = np.eye(2) if depol is None else depol
    return CommUser(r=r, theta=theta,
                    paths=(PathComponent(gain=gain, angle=theta, depol=depol),),
                    rx_polar=rx)


def test_comm_single_los_path_is_scaled_steering_row():
    geom = ArrayGeometry(8)
    params = PathLossParams()
    beta = 0.8 - 0.3j
    user = _los_user(40.0, 0.35, gain=beta)
    h = comm_channel(geom, CODEBOOK, uniform_assignment(8, 0, 0), [user], params)
    expected = path_loss(params, 40.0) * beta * steering_vector(geom, 0.35)
    np.testing.assert_allclose(h[0], expected, rtol=1e-14)


def test_comm_orthogonal_polarizations_zero_row():
    geom = ArrayGeometry(4)
    user = _los_user(40.0, 0.2, rx=V)  # identity depol, tx all H
    h = comm_channel(geom, CODEBOOK, uniform_assignment(4, 0, 0), [user], PathLossParams())
    np.testing.assert_allclose(h[0], 0.0, atol=1e-20)


def test_comm_channel_matches_direct_sum_oracle():
    # Independent re-implementation: plain per-entry loops over paths.
    rng = np.random.default_rng(5)
    geom = ArrayGeometry(6)
    params = PathLossParams()
    assign = uniform_assignment(6, 3, 2, scope="per_element").replace_element(
        1, pattern_idx=0, polar_idx=0).replace_element(4, pattern_idx=5, polar_idx=3)
    users = []
    for _ in range(3):
        theta = rng.uniform(-1.0, 1.0)
        paths = []
        for _ in range(4):
            ang = float(np.clip(theta + rng.normal(0, 0.2), -np.pi / 2, np.pi / 2))
            paths.append(PathComponent(
                gain=complex(rng.standard_normal() + 1j * rng.standard_normal()),
                angle=ang,
                depol=rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))))
        users.append(CommUser(r=rng.uniform(30, 60), theta=theta, paths=tuple(paths),
                              rx_polar=CODEBOOK.polarizations[rng.integers(0, 4)]))

    h = comm_channel(geom, CODEBOOK, assign, users, params)

    oracle = np.zeros_like(h)
    for k, user in enumerate(users):
        alpha = path_loss(params, user.r)
        for n in range(6):
            pat = CODEBOOK.patterns[assign.pattern_idx[n]]
            pol = CODEBOOK.polarizations[assign.polar_idx[n]]
            acc = 0.0 + 0.0j
            for p in user.paths:
                coupling = user.rx_polar.jones.conj() @ p.depol @ pol.jones
                phase = np.exp(2j * np.pi * geom.spacing * n * np.sin(p.angle))
                acc += p.gain * coupling * pattern_gain(pat, p.angle) * phase
            oracle[k, n] = alpha * acc
    np.testing.assert_allclose(h, oracle, rtol=1e-12, atol=1e-12 * np.abs(oracle).max())


def test_comm_doubling_range_scales_rows_by_pathloss_ratio():
    geom = ArrayGeometry(4)
    params = PathLossParams()
    near = _los_user(25.0, 0.3)
    far = dataclasses.replace(near, r=50.0)
    h_near = comm_channel(geom, CODEBOOK, uniform_assignment(4, 0, 0), [near], params)
    h_far = comm_channel(geom, CODEBOOK, uniform_assignment(4, 0, 0), [far], params)
    np.testing.assert_allclose(h_far, 2.0 ** -params.exponent * h_near, rtol=1e-12)


def test_comm_requires_users():
    with pytest.raises(ValueError):
        comm_channel(ArrayGeometry(4), CODEBOOK, uniform_assignment(4, 0, 0), [],
                     PathLossParams())


# ---------------------------------------------------------------------------
# Sensing channel
# ---------------------------------------------------------------------------

def _entity(theta, r=45.0, scattering=None, role="target"):
    scattering = np.eye(2) if scattering is None else scattering
    return SensingEntity(role=role, r=r, theta=theta, reflectivity=1.0,
                         scattering=scattering)


def test_sensing_omni_identity_is_rank_one_outer_product():
    geom = ArrayGeometry(8)
    params = PathLossParams()
    modes = uniform_assignment(8, 0, 0)
    ent = _entity(0.4)
    h = sensing_channel(geom, CODEBOOK, modes, modes, ent, params)
    a = steering_vector(geom, 0.4)
    alpha = path_loss(params, 45.0)
    np.testing.assert_allclose(h, alpha**2 * np.outer(a, a), rtol=1e-13)
    s = np.linalg.svd(h, compute_uv=False)
    assert s[1] < 1e-12 * s[0]


def test_sensing_broadside_entries_all_equal_alpha_squared():
    geom = ArrayGeometry(4)
    params = PathLossParams()
    modes = uniform_assignment(4, 0, 0)
    h = sensing_channel(geom, CODEBOOK, modes, modes, _entity(0.0), params)
    np.testing.assert_allclose(h, path_loss(params, 45.0) ** 2, rtol=1e-14)


def test_sensing_per_element_polar_matches_diagonal_oracle():
    # Rank-one scattering factorizes the coupling, so the channel is
    # D_rx a a^T D_tx with diagonal per-element coupling factors.
    rng = np.random.default_rng(3)
    geom = ArrayGeometry(5)
    params = PathLossParams()
    s_left = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    s_right = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    scattering = np.outer(s_left, s_right)
    polar_idx = tuple(int(i) for i in rng.integers(0, 4, 5))
    modes = uniform_assignment(5, 0, 0, scope="per_element")
    modes = dataclasses.replace(modes, polar_idx=polar_idx)
    ent = _entity(0.25, scattering=scattering)
    h = sensing_channel(geom, CODEBOOK, modes, modes, ent, params)

    a = steering_vector(geom, 0.25)
    jones = np.stack([CODEBOOK.polarizations[i].jones for i in polar_idx], axis=1)
    d_rx = np.diag(jones.conj().T @ s_left)
    d_tx = np.diag(jones.T @ s_right)
    alpha = path_loss(params, ent.r)
    oracle = alpha**2 * d_rx @ np.outer(a, a) @ d_tx
    np.testing.assert_allclose(h, oracle, rtol=1e-12)


def test_sensing_symmetric_scattering_gives_symmetric_channel():
    # Reciprocity of structure; with the conjugated receive coupling this
    # holds for the linear (real-Jones) polarization states.
    rng = np.random.default_rng(9)
    geom = ArrayGeometry(6)
    s = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    s = s + s.T  # complex symmetric
    polar_idx = tuple(int(i) for i in rng.integers(0, 3, 6))  # H, V, slant
    modes = dataclasses.replace(uniform_assignment(6, 2, 0, scope="per_element"),
                                polar_idx=polar_idx)
    h = sensing_channel(geom, CODEBOOK, modes, modes, _entity(0.3, scattering=s),
                        PathLossParams())
    np.testing.assert_allclose(h, h.T, rtol=1e-12)


def test_polarization_nulling_zeroes_target_channel():
    geom = ArrayGeometry(4)
    s = np.outer(np.array([1.0, 1.0j]), np.array([0.5, -0.5]))  # rank one
    tx = CODEBOOK.polarizations[0]
    s_tx = s @ tx.jones
    rx_jones = np.array([-np.conj(s_tx[1]), np.conj(s_tx[0])])
    rx_jones = rx_jones / np.linalg.norm(rx_jones)
    assert abs(rx_jones.conj() @ s_tx) < 1e-15
    rx = PolarizationState(rx_jones)
    codebook = dataclasses.replace(
        CODEBOOK, polarizations=tuple(CODEBOOK.polarizations) + (rx,))
    modes_tx = uniform_assignment(4, 0, 0)
    modes_rx = uniform_assignment(4, 0, 4)
    h = sensing_channel(geom, codebook, modes_tx, modes_rx, _entity(0.2, scattering=s),
                        PathLossParams())
    np.testing.assert_allclose(h, 0.0, atol=1e-25)


def test_sensing_entity_invariants():
    with pytest.raises(ValueError):
        SensingEntity(role="target", r=45.0, theta=0.0, reflectivity=0.0,
                      scattering=np.eye(2))
    with pytest.raises(ValueError):
        SensingEntity(role="ghost", r=45.0, theta=0.0, reflectivity=1.0,
                      scattering=np.eye(2))


# ---------------------------------------------------------------------------
# ChannelSet and scenario-level determinism
# ---------------------------------------------------------------------------

def test_channel_set_rejects_non_finite():
    bad = np.full((2, 2), np.nan, dtype=complex)
    with pytest.raises(ValueError):
        ChannelSet(h_comm=bad, h_target=np.zeros((2, 2), complex), h_clutter=(),
                   noise_power=1.0)


def test_scenario_channels_bit_identical_across_builds():
    cfg = ScenarioConfig(seed=123)
    modes = uniform_assignment(8, 4, 2)
    first = synthesize_channels(build_scenario(cfg), modes)
    second = synthesize_channels(build_scenario(cfg), modes)
    assert np.array_equal(first.h_comm, second.h_comm)
    assert np.array_equal(first.h_target, second.h_target)
    for a, b in zip(first.h_clutter, second.h_clutter):
        assert np.array_equal(a, b)


def test_matrix_dump_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    m = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
    path = tmp_path / "m.txt"
    save_matrix_text(path, m)
    back = load_matrix_text(path)
    assert np.array_equal(m, back)
