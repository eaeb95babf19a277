# %% [markdown]
# # Grouping output channels by weight range
#
# Trained adder layers mix channels whose weight ranges differ by an order
# of magnitude.  One scale for the whole layer either crushes the narrow
# channels or clips the wide ones, so channels are clustered and each
# cluster gets its own scale.

# %%
import numpy as np

from adderquant.grouping import GroupingConfig, channel_feature, cluster_1d, group_scales, plan_for_weights

rng = np.random.default_rng(1)
maxima = np.r_[rng.uniform(0.1, 0.2, 6), rng.uniform(1.0, 1.5, 6), rng.uniform(6, 8, 4)]
w = rng.uniform(-1, 1, (3, 3, 4, 16))
w *= maxima / np.abs(w).reshape(-1, 16).max(axis=0)

print("per-channel max|W|:", np.round(channel_feature(w, "max"), 2))

# %% [markdown]
# Clustering is exact: for one-dimensional features the optimal k-means
# clusters are contiguous runs of the sorted values, found by dynamic
# programming.  The objective only ever falls as groups are added.

# %%
for g in (1, 2, 3, 4):
    plan = cluster_1d(channel_feature(w), g)
    sizes = [len(ix) for ix in plan.groups]
    print(f"g={g} sizes={sizes} objective={plan.objective:.4f}")

# %% [markdown]
# Each group's scale comes from its own range, capped at the activation
# range ``r_x``.  Groups wider than ``r_x`` are handled by the weight clamp
# (see the next demo).

# %%
plan = plan_for_weights(w, GroupingConfig(3))
r_x = 2.0
for ix, m, s in zip(plan.groups, plan.group_max, group_scales(plan, r_x, 4)):
    print(f"channels {ix.tolist()}: range {m:.2f} -> step {s:.4f}")

# %% [markdown]
# ``restore`` puts group-ordered outputs back in model channel order.

# %%
y = np.arange(16)
print(np.array_equal(y[plan.order][plan.restore], y))
