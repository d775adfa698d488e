# %% [markdown]
# # Data-driven LQG from a noise-free record
#
# The LQR and Kalman programs can be written with data matrices in place of
# (A, B, C). On a noise-free record their optima coincide with the
# model-based gains, and the controller assembled from data equals the
# model-based observer/controller.

# %%
import numpy as np

from ddlqg import (
    BATCH_REACTOR_REFERENCE_L,
    NoiseSpec,
    batch_reactor,
    collect_offline_data,
    design_noise_free,
    estimation_metrics,
    kalman_gain,
    lqr_gain,
    simulate_closed_loop,
)

np.set_printoptions(precision=4, suppress=True)
sys = batch_reactor()
data = collect_offline_data(sys, 15, NoiseSpec.zero(), seed=1)
I4, I2 = np.eye(4), np.eye(2)

# %%
gains = design_noise_free(data, I4, I2, 0.02 * I4, 0.02 * I2)
print("L* =\n", gains.L)
print("max |L* - reference| =", np.abs(gains.L - BATCH_REACTOR_REFERENCE_L).max())
print("||K* - K_bar|| =", np.linalg.norm(gains.K - lqr_gain(sys.A, sys.B, I4, I2), 2))
print("||L* - L_bar|| =",
      np.linalg.norm(gains.L - kalman_gain(sys.A, sys.C, 0.02 * I4, 0.02 * I2)[1], 2))

# %% [markdown]
# The recursion xhat+ = A_cl xhat + L y is built from X1, Y0 and the right
# inverse only. Against the true matrices it matches A + BK - LC.

# %%
ctrl = gains.controller(data)
print("max |A_cl - (A + BK - LC)| =",
      np.abs(ctrl.A_cl - (sys.A + sys.B @ gains.K - gains.L @ sys.C)).max())

# %% [markdown]
# Closed loop from a random initial state, no online noise. The estimate
# starts at zero and the error decays geometrically.

# %%
x0 = np.random.default_rng(3).uniform(-1, 1, 4)
trace = simulate_closed_loop(sys, ctrl, x0, NoiseSpec.zero(), 100, data=data, split=gains.split)
m = estimation_metrics(trace)
print("rho(Xi0) =", trace.composite.rho_xi0)
print("||e(t)|| at t = 0, 20, 50, 100:", trace.err_norm[[0, 20, 50, 100]])
print(f"decay slope {m.decay_slope:.3f}, mean step time {m.per_step_time * 1e6:.1f} us")
