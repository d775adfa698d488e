# %% [markdown]
# # Offline data and persistency of excitation
#
# Everything downstream works from one short experiment on the plant: a
# record of states, inputs and outputs. This script collects such a record
# for the batch reactor, checks that the input is rich enough, and shows
# that the data alone pin down (A, B, C) when the record is noise free.

# %%
import numpy as np

from ddlqg import (
    NoiseSpec,
    batch_reactor,
    check_rank_condition,
    collect_offline_data,
    hankel,
    identified_matrices,
    is_persistently_exciting,
    min_samples_for_rank,
    pseudo_inverse_split,
)

np.set_printoptions(precision=4, suppress=True)
sys = batch_reactor()
print("open-loop spectral radius:", max(abs(np.linalg.eigvals(sys.A))))

# %% [markdown]
# A depth-L Hankel matrix stacks shifted windows of a signal. An input is
# persistently exciting of order L when that matrix has full row rank.

# %%
print(hankel([1, 2, 3, 4], 2))
print("constant input PE of order 2?", is_persistently_exciting(np.ones(20), 2))

# %% [markdown]
# Uniform inputs in [-1, 1] over T = 15 samples. The rank condition asks
# [X0; U0] to have full row rank n_x + n_u = 6.

# %%
data = collect_offline_data(sys, 15, NoiseSpec.zero(), seed=1)
print("input PE of order n_x + 1:", is_persistently_exciting(data.U0.T, sys.n_x + 1))
print("rank condition:", check_rank_condition(data))
print("samples that guarantee it for generic PE inputs:", min_samples_for_rank(4, 2))

# %% [markdown]
# A right inverse of [X0; U0] turns the record into the system matrices.

# %%
split = pseudo_inverse_split(data)
A_hat, B_hat, C_hat = identified_matrices(data, split)
print("max |A_hat - A| =", np.abs(A_hat - sys.A).max())
print("max |B_hat - B| =", np.abs(B_hat - sys.B).max())
print("max |C_hat - C| =", np.abs(C_hat - sys.C).max())

# %% [markdown]
# With bounded noise the same construction is only approximate.

# %%
noisy = collect_offline_data(sys, 15, NoiseSpec.uniform(0.02, 0.02), seed=2)
A_n, _, _ = identified_matrices(noisy, pseudo_inverse_split(noisy))
print("noisy record, max |A_hat - A| =", np.abs(A_n - sys.A).max())
