# %% [markdown]
# # Adder convolution and the uniform quantizer
#
# An adder layer replaces the multiply-accumulate of a convolution with a
# negated L1 distance between each input window and each filter.

# %%
import numpy as np

from adderquant.kernels import ConvConfig, adder_conv, quantized_adder_conv, vanilla_conv
from adderquant.quantizer import QuantSpec, dequantize, quant_loss, quantize, scale_from_range

rng = np.random.default_rng(0)
x = rng.standard_normal((6, 6, 2))
w = rng.standard_normal((3, 3, 2, 4))
cfg = ConvConfig(stride=1, padding=1)

y_mul = vanilla_conv(x, w, cfg)
y_add = adder_conv(x, w, cfg)
print("output shape", y_add.shape)
print("adder outputs are never positive:", bool((y_add <= 0).all()))

# %% [markdown]
# Shifting inputs and weights by the same constant leaves an adder layer
# unchanged.  A multiply layer has no such symmetry.  (Padding is left out
# here because padded zeros do not shift.)

# %%
valid = ConvConfig()
print("adder shift-invariant:", np.allclose(adder_conv(x + 3, w + 3, valid), adder_conv(x, w, valid)))
print("vanilla shift-invariant:", np.allclose(vanilla_conv(x + 3, w + 3, valid), vanilla_conv(x, w, valid)))

# %% [markdown]
# ## Symmetric quantization
#
# A range ``m`` and bit-width ``b`` give the step ``2m / (2**b - 1)``.
# Codes live in ``[-2**(b-1), 2**(b-1) - 1]``.

# %%
spec = QuantSpec(4, scale_from_range(7.5, 4))
v = np.array([-9.0, -7.5, -0.49, 0.5, 3.4, 7.5, 100.0])
codes = quantize(v, spec)
print("codes   ", codes)
print("restored", dequantize(codes, spec))
print("loss    ", quant_loss(v, spec))

# %% [markdown]
# Integer kernels agree exactly with the float kernel on the same integers,
# so a quantized layer is just integer arithmetic followed by one multiply.

# %%
xi = rng.integers(-8, 8, (6, 6, 2)).astype(np.int32)
wi = rng.integers(-8, 8, (3, 3, 2, 4)).astype(np.int32)
same = np.array_equal(quantized_adder_conv(xi, wi, cfg), adder_conv(xi.astype(float), wi.astype(float), cfg))
print("integer path equals float path:", same)
