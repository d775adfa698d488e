# %% [markdown]
# # Riccati oracle versus semidefinite programs
#
# The reference LQR and Kalman gains come from a value-iteration DARE
# solver. The same gains are the optimizers of small semidefinite programs,
# which the package builds as standard-form models and solves with its own
# primal-dual interior-point method.

# %%
import numpy as np

from ddlqg import (
    build_model_based_sdp,
    kalman_gain,
    lqr_gain,
    recover_kalman_gain,
    recover_lqr_gain,
    residuals,
    scalar_system,
    solve,
    solve_dare,
)

# %% [markdown]
# Scalar plant x+ = 0.5 x + u with unit weights: the DARE reduces to a
# quadratic whose positive root is (0.25 + sqrt(4.0625)) / 2.

# %%
sys = scalar_system()
sol = solve_dare(sys.A, sys.B, [[1.0]], [[1.0]])
print("P =", sol.P[0, 0], "closed form", (0.25 + np.sqrt(4.0625)) / 2)
print("K_bar =", lqr_gain(sys.A, sys.B, [[1.0]], [[1.0]])[0, 0])
print("L_bar =", kalman_gain(sys.A, sys.C, [[1.0]], [[1.0]])[1][0, 0])

# %% [markdown]
# The model-based programs recover the same numbers. The residuals are
# recomputed from the returned point, independently of the solver.

# %%
for variant, recover in (("lqr", recover_lqr_gain), ("kalman", recover_kalman_gain)):
    model = build_model_based_sdp(sys, [[1.0]], [[1.0]], variant)
    s = solve(model)
    print(f"{variant:6s} status={s.status.value} gain={recover(s)[0, 0]:.6f} "
          f"iterations={s.iterations}", residuals(model, s))

# %% [markdown]
# Models can be dumped to JSON for cross-checking with another solver.

# %%
import tempfile
from pathlib import Path

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "kalman.json"
    build_model_based_sdp(sys, [[1.0]], [[1.0]], "kalman").to_json(path)
    print(path.read_text()[:200], "...")
