import numpy as np
import pytest

from ddlqg.lmi import norm_minimizing_split, pseudo_inverse_split
from ddlqg.lqg import (
    DIVERGENCE_THRESHOLD,
    build_controller,
    composite_matrices,
    composite_stability,
    controller_step,
    design_noise_free,
    design_robust,
    eig_multiset_distance,
    estimation_metrics,
    model_based_controller,
    random_initial_state,
    simulate_closed_loop,
)
from ddlqg.lti_sim import NoiseSpec, TrajectoryData, collect_offline_data
from ddlqg.riccati import kalman_gain, lqr_gain, spectral_radius

I4, I2 = np.eye(4), np.eye(2)


@pytest.fixture(scope="module")
def oracle(reactor):
    K = lqr_gain(reactor.A, reactor.B, I4, I2)
    L = kalman_gain(reactor.A, reactor.C, 0.02 * I4, 0.02 * I2)[1]
    return K, L


@pytest.fixture(scope="module")
def nf_gains(reactor_data):
    return design_noise_free(reactor_data, I4, I2, 0.02 * I4, 0.02 * I2)


@pytest.fixture(scope="module")
def robust_gains(reactor_noisy_data):
    return design_robust(reactor_noisy_data, I4, I2, 0.02 * I4, 0.02 * I2, 0.2, 0.2)


def _model_recursion(sys, K, L, x0, W, V):
    """Plant plus the model-based observer/controller, written out by hand."""
    x, xh = np.array(x0, float), np.zeros(sys.n_x)
    us, xhs = [], [xh]
    for t in range(W.shape[1]):
        y = sys.C @ x + V[:, t]
        u = K @ xh
        xh = sys.A @ xh + sys.B @ u + L @ (y - sys.C @ xh)
        x = sys.A @ x + sys.B @ u + W[:, t]
        us.append(u)
        xhs.append(xh)
    return np.array(us).T, np.array(xhs).T


# -- realization ------------------------------------------------------------

def test_noise_free_realization_matches_model(reactor, reactor_data, nf_gains):
    K, L = nf_gains.K, nf_gains.L
    ctrl = build_controller(reactor_data, nf_gains.split, K, L)
    assert np.max(np.abs(ctrl.A_cl - (reactor.A + reactor.B @ K - L @ reactor.C))) <= 1e-8
    assert not ctrl.xhat.any()


def test_zero_gains_realization(reactor_data):
    split = pseudo_inverse_split(reactor_data)
    ctrl = build_controller(reactor_data, split, np.zeros((2, 4)), np.zeros((4, 2)))
    assert np.array_equal(ctrl.A_cl, reactor_data.X1 @ split.Phi1)


def test_noisy_realization_differs(reactor, reactor_noisy_data, robust_gains):
    ctrl = robust_gains.controller(reactor_noisy_data)
    K, L = robust_gains.K, robust_gains.L
    diff = np.linalg.norm(ctrl.A_cl - (reactor.A + reactor.B @ K - L @ reactor.C))
    assert 0 < diff < 1


def test_dimension_checks(reactor_data):
    split = pseudo_inverse_split(reactor_data)
    with pytest.raises(ValueError):
        build_controller(reactor_data, split, np.zeros((4, 2)), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        build_controller(reactor_data, split, np.zeros((2, 4)), np.zeros((2, 4)))


def test_step_from_zero_estimate(reactor_data, rng):
    split = pseudo_inverse_split(reactor_data)
    K, L = rng.standard_normal((2, 4)), rng.standard_normal((4, 2))
    ctrl = build_controller(reactor_data, split, K, L)
    y = rng.standard_normal(2)
    u, xn = controller_step(ctrl, y)
    assert not u.any()
    assert np.allclose(xn, L @ y)


def test_step_without_observer_gain(reactor_data, rng):
    split = pseudo_inverse_split(reactor_data)
    ctrl = build_controller(reactor_data, split, rng.standard_normal((2, 4)), np.zeros((4, 2)))
    ctrl.reset(np.ones(4))
    u, xn = controller_step(ctrl, rng.standard_normal(2))
    assert np.allclose(u, ctrl.K @ np.ones(4))
    assert np.allclose(xn, ctrl.A_cl @ np.ones(4))


def test_clone_is_independent(reactor_data, nf_gains):
    ctrl = nf_gains.controller(reactor_data)
    twin = ctrl.clone()
    controller_step(twin, np.ones(2))
    assert not ctrl.xhat.any() and twin.xhat.any()


# -- equivalence with the model-based recursion -----------------------------

def test_one_step_matches_model_recursion(reactor, reactor_data, oracle):
    K, L = oracle
    ctrl = build_controller(reactor_data, pseudo_inverse_split(reactor_data), K, L)
    ctrl.reset(np.array([0.3, -0.2, 0.1, 0.5]))
    y = np.array([0.7, -0.4])
    xh = ctrl.xhat.copy()
    u, xn = controller_step(ctrl, y)
    ref = reactor.A @ xh + reactor.B @ (K @ xh) + L @ (y - reactor.C @ xh)
    assert np.allclose(u, K @ xh, atol=1e-12)
    assert np.max(np.abs(xn - ref)) <= 1e-10


def test_trajectory_matches_model_recursion(reactor, reactor_data, oracle):
    # same gains, shared Gaussian noise stream: the data-based realization
    # reproduces (u, xhat) of the model-based controller over 100 steps
    K, L = oracle
    ctrl = build_controller(reactor_data, pseudo_inverse_split(reactor_data), K, L)
    x0 = random_initial_state(4, 0)
    noise = NoiseSpec.gaussian(0.02 * I4, 0.02 * I2, seed=9)
    tr = simulate_closed_loop(reactor, ctrl, x0, noise, 100)
    from ddlqg.lti_sim import generate_noise

    W, V = generate_noise(noise, 100, 4, 2)
    u_ref, xh_ref = _model_recursion(reactor, K, L, x0, W, V)
    assert np.max(np.abs(tr.u - u_ref)) <= 1e-6
    assert np.max(np.abs(tr.xhat - xh_ref)) <= 1e-6


def test_sdp_gain_trajectory_tracks_model(reactor, reactor_data, nf_gains, oracle):
    # with SDP-designed gains the deviation is governed by the solver's gain accuracy
    K, L = oracle
    gain_err = max(np.abs(nf_gains.K - K).max(), np.abs(nf_gains.L - L).max())
    assert gain_err <= 1e-3
    x0 = random_initial_state(4, 0)
    noise = NoiseSpec.gaussian(0.02 * I4, 0.02 * I2, seed=9)
    a = simulate_closed_loop(reactor, nf_gains.controller(reactor_data), x0, noise, 100)
    b = simulate_closed_loop(reactor, model_based_controller(reactor, K, L), x0, noise, 100)
    scale = 1 + np.abs(b.x).max()
    assert np.max(np.abs(a.u - b.u)) <= 100 * gain_err * scale
    assert np.max(np.abs(a.xhat - b.xhat)) <= 100 * gain_err * scale


# -- closed loop ------------------------------------------------------------

def test_noise_free_loop_converges(reactor, reactor_data, nf_gains):
    x0 = random_initial_state(4, 3)
    tr = simulate_closed_loop(reactor, nf_gains.controller(reactor_data), x0, NoiseSpec.zero(), 100,
                              data=reactor_data, split=nf_gains.split)
    assert tr.status == "ok" and tr.steps == 100
    assert tr.composite.rho_xi0 < 1
    en = tr.err_norm
    # the slowest observer mode has modulus about 0.916, so 0.92^100 bounds the decay
    rho_obs = spectral_radius(reactor.A - nf_gains.L @ reactor.C)
    assert en[-1] < 10 * rho_obs ** 100 * en[0]
    assert np.all(np.diff(en[30:]) <= 0)
    assert estimation_metrics(tr).decay_slope < 0


def test_robust_loop_bounded(reactor, reactor_noisy_data, robust_gains):
    x0 = random_initial_state(4, 4)
    tr = simulate_closed_loop(reactor, robust_gains.controller(reactor_noisy_data), x0,
                              NoiseSpec.uniform(0.02, 0.02, seed=5), 200)
    assert tr.status == "ok"
    assert np.linalg.norm(tr.x, axis=0).max() < 10
    assert tr.err_norm.max() < 10


def test_open_loop_unstable_diverges(reactor, reactor_data):
    split = pseudo_inverse_split(reactor_data)
    ctrl = build_controller(reactor_data, split, np.zeros((2, 4)), np.zeros((4, 2)))
    tr = simulate_closed_loop(reactor, ctrl, np.ones(4), NoiseSpec.zero(), 5000)
    assert tr.diverged and tr.status == "diverged"
    assert tr.steps < 5000
    assert np.linalg.norm(tr.x[:, -1]) > DIVERGENCE_THRESHOLD
    assert np.all(np.isfinite(tr.x))


def test_trace_e_recomputable(reactor, reactor_data, nf_gains):
    tr = simulate_closed_loop(reactor, nf_gains.controller(reactor_data), np.ones(4),
                              NoiseSpec.uniform(0.02, 0.02, seed=1), 20)
    assert np.array_equal(tr.e, tr.x - tr.xhat)
    assert tr.x.shape == (4, 21) and tr.u.shape == (2, 20) and tr.y.shape == (2, 20)


def test_horizon_and_x0_validation(reactor, reactor_data, nf_gains):
    ctrl = nf_gains.controller(reactor_data)
    with pytest.raises(ValueError):
        simulate_closed_loop(reactor, ctrl, np.ones(4), NoiseSpec.zero(), 0)
    with pytest.raises(ValueError):
        simulate_closed_loop(reactor, ctrl, np.ones(3), NoiseSpec.zero(), 5)


def test_rges_probe(reactor, reactor_noisy_data, robust_gains):
    ctrl = robust_gains.controller(reactor_noisy_data)
    for seed in range(5):
        tr = simulate_closed_loop(reactor, ctrl, random_initial_state(4, seed), NoiseSpec.zero(), 100)
        en = tr.err_norm
        assert estimation_metrics(tr).decay_slope < 0
        # asymptotic rate from the tail, then the tightest constant over [0, 100]
        t = np.arange(len(en))
        rho = np.exp(np.polyfit(t[50:], np.log(en[50:]), 1)[0])
        assert rho < 1
        c = np.max(en / (rho ** t * en[0]))
        assert np.all(en <= c * rho ** t * en[0] * (1 + 1e-12))
        assert c < 100


def test_isps_monotone_trend(reactor, reactor_noisy_data, robust_gains):
    ctrl = robust_gains.controller(reactor_noisy_data)
    sups = []
    for bar in (0.04, 0.02, 0.01):
        vals = []
        for seed in range(20):
            tr = simulate_closed_loop(reactor, ctrl, random_initial_state(4, seed),
                                      NoiseSpec.uniform(bar, bar, seed=100 + seed), 200)
            assert tr.status == "ok"
            vals.append(np.linalg.norm(tr.x[:, 20:], axis=0).max())
        sups.append(np.mean(vals))
    assert np.all(np.isfinite(sups))
    assert sups[0] >= sups[1] >= sups[2]


def test_metrics_window(reactor, reactor_data, nf_gains):
    tr = simulate_closed_loop(reactor, nf_gains.controller(reactor_data), np.ones(4),
                              NoiseSpec.zero(), 50)
    with pytest.raises(ValueError):
        estimation_metrics(tr, window=100)
    m = estimation_metrics(tr, window=50)
    assert m.ebar == pytest.approx(np.mean(tr.err_norm[:50]))
    assert m.per_step_time > 0


# -- composite matrices -----------------------------------------------------

def test_composite_noise_free(reactor, reactor_data, nf_gains):
    rep = composite_stability(reactor_data, nf_gains.split, nf_gains.K, nf_gains.L, reactor)
    assert not rep.Xi2.any()
    assert np.array_equal(rep.Xi3, rep.Xi1)
    assert rep.similarity_residual <= 1e-6
    assert rep.block_union_residual <= 1e-6
    assert rep.stable


def test_composite_noisy(reactor, reactor_noisy_data, robust_gains):
    rep = composite_stability(reactor_noisy_data, robust_gains.split, robust_gains.K,
                              robust_gains.L, reactor)
    assert np.max(np.abs(rep.Xi3 - (rep.Xi1 + rep.Xi2))) <= 1e-12
    assert rep.similarity_residual <= 1e-6
    assert rep.block_union_residual <= 1e-6
    assert rep.rho_xi0 < 1
    d = rep.to_dict()
    assert {"rho_xi0", "similarity_residual"} <= set(d)


def test_xi0_is_true_closed_loop(reactor, reactor_noisy_data, robust_gains):
    # Xi0 acts on (x, xhat) exactly as the plant with the data-based controller
    K, L = robust_gains.K, robust_gains.L
    Xi0 = composite_matrices(reactor_noisy_data, robust_gains.split, K, L)[0]
    ctrl = robust_gains.controller(reactor_noisy_data)
    ref = np.block([[reactor.A, reactor.B @ K], [L @ reactor.C, ctrl.A_cl]])
    assert np.max(np.abs(Xi0 - ref)) <= 1e-9


def test_composite_needs_consistent_plant(reactor, target, reactor_noisy_data, robust_gains):
    from ddlqg.systems import scalar_system

    other = type(reactor)(reactor.A * 0.9, reactor.B, reactor.C)
    with pytest.raises(ValueError):
        composite_stability(reactor_noisy_data, robust_gains.split, robust_gains.K,
                            robust_gains.L, other)


def test_composite_needs_ground_truth(reactor_noisy_data, robust_gains):
    from ddlqg.lmi import GroundTruthUnavailable

    d = reactor_noisy_data
    bare = TrajectoryData(d.X0, d.X1, d.U0, d.Y0)
    with pytest.raises(GroundTruthUnavailable):
        composite_matrices(bare, robust_gains.split, robust_gains.K, robust_gains.L)


def test_eig_multiset_distance():
    assert eig_multiset_distance(np.diag([1.0, 2.0]), np.diag([2.0, 1.0])) == 0
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    assert eig_multiset_distance(R, np.diag([1j, -1j])) <= 1e-12
    assert eig_multiset_distance(np.diag([1.0, 2.0]), np.diag([1.0, 3.0])) == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(5))
def test_similarity_on_random_gains(reactor, seed):
    g = np.random.default_rng(seed)
    d = collect_offline_data(reactor, 15, NoiseSpec.uniform(0.05, 0.05), seed=seed)
    split = norm_minimizing_split(d)
    K, L = 0.3 * g.standard_normal((2, 4)), 0.3 * g.standard_normal((4, 2))
    rep = composite_stability(d, split, K, L, reactor)
    assert rep.similarity_residual <= 1e-6
    assert spectral_radius(rep.Xi0) == pytest.approx(rep.rho_xi0)
