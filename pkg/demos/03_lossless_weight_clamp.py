# %% [markdown]
# # Clamping weights without changing the layer
#
# When every input lies in ``[-r_x, r_x]``, a weight beyond that range always
# sits on the same side of the input.  Its excess over ``r_x`` then adds a
# constant to ``|x - w|``.  Clipping the weight and moving that constant into
# a per-channel bias leaves the layer's output unchanged.

# %%
import numpy as np

from adderquant.clamp import activation_range, clamp_layer
from adderquant.kernels import ConvConfig, adder_conv

rng = np.random.default_rng(2)
r_x = 1.0
x = rng.uniform(-r_x, r_x, (8, 8, 4))
w = rng.normal(0, 3, (3, 3, 4, 6))
cfg = ConvConfig(1, 1)

layer = clamp_layer(w, r_x)
before = adder_conv(x, w, cfg)
after = adder_conv(x, layer.w_clamped, cfg) + layer.bias_fold
print("largest |W| after clamp:", np.abs(layer.w_clamped).max())
print("folded bias per channel:", np.round(layer.bias_fold, 2))
print("max output change:", np.abs(before - after).max())

# %% [markdown]
# The guarantee needs the inputs to respect the range.  One input outside it
# breaks the equality, which is why runtime activations are clamped too.

# %%
x_out = x.copy()
x_out[4, 4, 0] = 5.0
gap = adder_conv(x_out, w, cfg) - (adder_conv(x_out, layer.w_clamped, cfg) + layer.bias_fold)
print("gap with an out-of-range input:", np.abs(gap).max())

# %% [markdown]
# ## Choosing r_x
#
# ``r_x`` is a high quantile of the absolute calibration activations.  Rare
# outliers are discarded instead of stretching the range.

# %%
acts = np.r_[np.linspace(0.1, 1.0, 10), 100.0]
for alpha in (1.0, 0.9):
    print(f"alpha={alpha}: r_x={activation_range(acts, alpha).r_x}")
