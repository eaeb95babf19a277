# %% [markdown]
# # Post-training quantization of a small adder network
#
# The toy network has multiply convolutions at both ends (kept in full
# precision) and adder layers in between whose weights are wider than their
# inputs, as in trained adder networks.

# %%
import numpy as np

from adderquant import diagnostics
from adderquant.grouping import GroupingConfig
from adderquant.pipeline import calibrate, forward_quantized, forward_reference, quantize_model
from adderquant.store import toy_inputs, toy_model

model = toy_model(seed=0, widths=(3, 8, 8, 8, 4))
calib = toy_inputs(seed=1, n=8)
test = toy_inputs(seed=2, n=4)
ranges = calibrate(model, calib, alpha=0.999)
print([None if r is None else round(r.r_x, 3) for r in ranges])

# %% [markdown]
# Error against the full-precision forward falls as bits increase.

# %%
for b in (4, 5, 6, 8, 16):
    qm = quantize_model(model, ranges, b, GroupingConfig(4))
    err = np.mean([np.abs(forward_quantized(qm, x) - forward_reference(model, x)).mean() for x in test])
    print(f"b={b:2d} mean |error| = {err:.5f}")

# %% [markdown]
# ## Per-layer diagnostics
#
# Baseline columns quantize the same layer with a single shared scale taken
# from the activations (most weights saturate) or from the weights (most
# activation codes go unused).

# %%
qm = quantize_model(model, ranges, 4, GroupingConfig(4))
rows = diagnostics.analyze_model(model, qm, test[0])
cols = ("layer", "over_clamp_fraction", "bits_waste_fraction", "output_l1_error",
        "baseline_act_over_clamp", "baseline_act_output_l1", "baseline_w_bits_waste", "baseline_w_output_l1")
print(diagnostics.to_text(rows, cols))

# %% [markdown]
# ## Cost of extra scales
#
# Each group needs its own pass to quantize the activations.  Against the
# convolution itself this is small.

# %%
print(diagnostics.to_text(diagnostics.flops_table(c=32, k=32),
                          ("groups", "relative_flops", "closed_form_r", "approx_r")))
