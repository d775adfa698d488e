import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddlqg.lti_sim import (
    LtiSystem,
    NoiseSpec,
    TrajectoryData,
    check_rank_condition,
    collect_offline_data,
    generate_noise,
    hankel,
    is_persistently_exciting,
    min_samples_for_rank,
    numerical_rank,
    simulate_openloop,
)


def test_dimension_validation():
    with pytest.raises(ValueError):
        LtiSystem(np.eye(2), np.ones((3, 1)), np.ones((1, 2)))
    with pytest.raises(ValueError):
        LtiSystem(np.eye(2), np.ones((2, 1)), np.ones((1, 3)))


def test_reactor_is_controllable_and_observable(reactor):
    assert (reactor.n_x, reactor.n_u, reactor.n_y) == (4, 2, 2)
    assert reactor.is_controllable() and reactor.is_observable()


def test_uncontrollable_pair_detected():
    sys = LtiSystem(np.diag([0.5, 0.7]), np.array([[1.0], [0.0]]), np.eye(2))
    assert not sys.is_controllable()


def test_shift_system_copies_inputs():
    n = 3
    sys = LtiSystem(np.zeros((n, n)), np.eye(n), np.eye(n))
    e1 = np.eye(n)[0]
    d = simulate_openloop(sys, np.zeros(n), np.tile(e1, (5, 1)))
    assert np.array_equal(d.X1, np.tile(e1[:, None], (1, 5)))
    assert np.array_equal(d.X0[:, 1:], np.tile(e1[:, None], (1, 4)))
    assert np.array_equal(d.X0[:, 0], np.zeros(n))


def test_scalar_geometric_decay(scalar):
    d = simulate_openloop(scalar, [1.0], np.zeros((6, 1)))
    assert np.allclose(d.X0[0], 0.5 ** np.arange(6), rtol=0, atol=1e-15)


def test_input_dimension_mismatch(reactor):
    with pytest.raises(ValueError):
        simulate_openloop(reactor, np.zeros(4), np.zeros((5, 3)))
    with pytest.raises(ValueError):
        simulate_openloop(reactor, np.zeros(3), np.zeros((5, 2)))


def test_reactor_noise_free_data_reconstructs(reactor, reactor_data):
    ex, ey = reactor_data.reconstruction_error(reactor)
    assert ex <= 1e-12 and ey <= 1e-12
    assert np.all(reactor_data.W0 == 0) and np.all(reactor_data.V0 == 0)
    assert reactor_data.T == 15


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), T=st.integers(1, 30),
       wbar=st.floats(0, 0.5), vbar=st.floats(0, 0.5))
def test_reconstruction_identity_holds(seed, T, wbar, vbar):
    from ddlqg.systems import batch_reactor

    sys = batch_reactor()
    d = collect_offline_data(sys, T, NoiseSpec.uniform(wbar, vbar), seed=seed)
    ex, ey = d.reconstruction_error(sys)
    assert ex <= 1e-12 and ey <= 1e-12


def test_determinism(reactor):
    a = collect_offline_data(reactor, 20, NoiseSpec.uniform(0.1, 0.1), seed=7)
    b = collect_offline_data(reactor, 20, NoiseSpec.uniform(0.1, 0.1), seed=7)
    for name in ("X0", "X1", "U0", "Y0", "W0", "V0"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = collect_offline_data(reactor, 20, NoiseSpec.uniform(0.1, 0.1), seed=8)
    assert not np.array_equal(a.X0, c.X0)


def test_trajectory_column_mismatch():
    with pytest.raises(ValueError):
        TrajectoryData(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((1, 4)), np.zeros((1, 3)))


# -- hankel -----------------------------------------------------------------

def test_hankel_scalar():
    assert np.array_equal(hankel([1, 2, 3, 4], 2), [[1, 2, 3], [2, 3, 4]])


def test_hankel_depth_one_is_signal():
    s = np.arange(10.0).reshape(5, 2)
    assert np.array_equal(hankel(s, 1), s.T)


def test_hankel_brute_force(rng):
    s = rng.standard_normal((10, 2))
    H = hankel(s, 3)
    assert H.shape == (6, 8)
    for i in range(3):
        for j in range(8):
            assert np.array_equal(H[2 * i:2 * i + 2, j], s[i + j])


def test_hankel_depth_too_large():
    with pytest.raises(ValueError):
        hankel([1, 2, 3], 4)
    with pytest.raises(ValueError):
        hankel([1, 2, 3], 0)


@settings(max_examples=40, deadline=None)
@given(N=st.integers(1, 20), n=st.integers(1, 3), data=st.data())
def test_hankel_shape(N, n, data):
    L = data.draw(st.integers(1, N))
    H = hankel(np.zeros((N, n)), L)
    assert H.shape == (n * L, N - L + 1)


# -- persistency of excitation ----------------------------------------------

def test_constant_sequence_not_pe():
    assert not is_persistently_exciting(np.ones(20), 2)


def test_random_scalar_sequence_pe(rng):
    assert is_persistently_exciting(rng.uniform(-1, 1, 20), 3)


def test_short_sequence_not_pe(rng):
    # depth-3 Hankel of a scalar needs at least 3 columns, i.e. length 5
    assert not is_persistently_exciting(rng.uniform(-1, 1, 4), 3)
    assert is_persistently_exciting(rng.uniform(-1, 1, 5), 3)


def test_reactor_input_is_pe_of_order_n_plus_one(reactor_data):
    assert is_persistently_exciting(reactor_data.U0.T, reactor_data.n_x + 1)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), N=st.integers(2, 25), n=st.integers(1, 2),
       kind=st.sampled_from(["random", "lowrank"]))
def test_pe_monotone_in_depth(seed, N, n, kind):
    g = np.random.default_rng(seed)
    s = g.uniform(-1, 1, (N, n))
    if kind == "lowrank":
        s = np.outer(np.sin(np.arange(N)), np.ones(n))
    for L in range(1, N + 1):
        if is_persistently_exciting(s, L):
            assert all(is_persistently_exciting(s, k) for k in range(1, L + 1))


# -- rank condition ---------------------------------------------------------

def test_rank_condition_noise_free(reactor_data):
    assert check_rank_condition(reactor_data)


def test_rank_condition_zero_inputs(reactor):
    d = simulate_openloop(reactor, np.ones(4), np.zeros((15, 2)))
    assert not check_rank_condition(d)


def test_rank_condition_too_few_samples(reactor):
    d = collect_offline_data(reactor, 5, seed=0)
    assert not check_rank_condition(d)


def test_min_samples_for_rank():
    assert min_samples_for_rank(4, 2) == 14


def test_numerical_rank_tolerance():
    M = np.diag([1.0, 1e-20])
    assert numerical_rank(M) == 1
    assert numerical_rank(np.zeros((3, 3))) == 0


# -- noise ------------------------------------------------------------------

def test_zero_noise():
    W, V = generate_noise(NoiseSpec.zero(), 10, 3, 2)
    assert not W.any() and not V.any()
    assert W.shape == (3, 10) and V.shape == (2, 10)


def test_uniform_noise_bound():
    for seed in range(5):
        W, V = generate_noise(NoiseSpec.uniform(0.02, 0.02, seed=seed), 500, 4, 2)
        assert np.max(np.abs(W)) <= 0.02 and np.max(np.abs(V)) <= 0.02


def test_gaussian_noise_covariance():
    Nx = 0.02 * np.eye(3)
    Ny = np.array([[0.5, 0.1], [0.1, 0.3]])
    W, V = generate_noise(NoiseSpec.gaussian(Nx, Ny, seed=3), 100_000, 3, 2)
    assert np.allclose(np.cov(W), Nx, rtol=0, atol=0.05 * 0.02)
    assert np.allclose(np.cov(V), Ny, rtol=0, atol=0.05 * 0.3)


def test_noise_rejects_negative_bound():
    with pytest.raises(ValueError):
        NoiseSpec.uniform(-0.1, 0.1)
    with pytest.raises(ValueError):
        NoiseSpec.gaussian(-np.eye(2), np.eye(1))


def test_noise_needs_positive_horizon():
    with pytest.raises(ValueError):
        generate_noise(NoiseSpec.zero(), 0, 1, 1)


def test_noise_seed_determinism():
    a = generate_noise(NoiseSpec.uniform(1, 1, seed=4), 10, 2, 2)
    b = generate_noise(NoiseSpec.uniform(1, 1, seed=4), 10, 2, 2)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_ew_maps_low_rank_noise():
    Ew = np.eye(4)[:, :2]
    W, _ = generate_noise(NoiseSpec.uniform(0.02, 0.02, seed=1, Ew=Ew), 50, 4, 2)
    assert np.linalg.matrix_rank(W) == 2
    assert not W[2:].any()


def test_ball_bounds():
    wb, vb = NoiseSpec.uniform(0.02, 0.01).ball_bounds(4, 2)
    assert wb == pytest.approx(0.04) and vb == pytest.approx(0.01 * np.sqrt(2))


def test_from_dict_roundtrip():
    sys = LtiSystem.from_dict({"A": [[0.5]], "B": [[1]], "C": [[1]]})
    assert sys.A[0, 0] == 0.5
    spec = NoiseSpec.from_dict({"kind": "uniform", "wbar": 0.1, "vbar": 0.2}, seed=3)
    assert (spec.kind, spec.wbar, spec.vbar, spec.seed) == ("uniform", 0.1, 0.2, 3)
