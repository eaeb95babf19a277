"""Post-training quantization of adder networks.

calibrate -> group channels -> clamp weights and fold the excess into the
bias -> one scale per group -> integer weights.  ``forward_quantized`` then
runs each group on integers and stitches the groups back together in model
channel order.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .clamp import ActRange, RangeObserver, clamp_activations, clamp_layer
from .errors import CalibrationError, ConfigError, ShapeError
from .grouping import GroupingConfig, GroupPlan, group_scales, plan_for_weights
from .kernels import ConvConfig, adder_conv, quantized_adder_conv, vanilla_conv
from .quantizer import SCALE_FLOOR, QuantSpec, check_bits, dequantize, quantize
from .tensor import FLOAT, check_activation, check_weight

KINDS = ("adder", "vanilla")


@dataclass
class LayerDef:
    """A full-precision layer: weights, convolution config and optional bias."""

    kind: str
    weights: np.ndarray
    conv: ConvConfig = field(default_factory=ConvConfig)
    bias: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        self.weights = np.asarray(self.weights, dtype=FLOAT)
        check_weight(self.weights)
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=FLOAT)
            if self.bias.shape != (self.c_out,):
                raise ShapeError(f"bias must have shape ({self.c_out},), got {self.bias.shape}")

    @property
    def c_in(self) -> int:
        return self.weights.shape[2]

    @property
    def c_out(self) -> int:
        return self.weights.shape[3]


@dataclass
class QuantizedLayer:
    plan: GroupPlan
    specs: list[QuantSpec]
    w_bar: list[np.ndarray]
    bias_fold: np.ndarray
    bias_total: np.ndarray
    act_range: ActRange
    conv: ConvConfig = field(default_factory=ConvConfig)
    kind = "adder"

    @property
    def c_in(self) -> int:
        return self.w_bar[0].shape[2]

    @property
    def c_out(self) -> int:
        return self.plan.c_out

    @property
    def kernel(self) -> int:
        return self.w_bar[0].shape[0]

    def validate(self) -> None:
        """Raise ValueError when any structural invariant is broken."""
        self.plan.validate()
        if not (len(self.specs) == len(self.w_bar) == self.plan.g):
            raise ValueError("specs, integer weights and groups differ in count")
        d, c_in = self.kernel, self.c_in
        for ix, spec, wb in zip(self.plan.groups, self.specs, self.w_bar):
            if wb.shape != (d, d, c_in, len(ix)):
                raise ValueError(f"group weights of shape {wb.shape} do not match {len(ix)} channels")
            if wb.size and (wb.min() < spec.q_n or wb.max() > spec.q_p):
                raise ValueError("integer weights outside the quantizer bounds")
        for name in ("bias_fold", "bias_total"):
            if getattr(self, name).shape != (self.c_out,):
                raise ValueError(f"{name} must hold one value per output channel")
        if np.any(self.bias_fold > 0):
            raise ValueError("folded bias must be non-positive")
        if not self.act_range.r_x > 0:
            raise ValueError("activation range must be positive")

    def dequantized_weights(self) -> np.ndarray:
        w = np.empty((self.kernel, self.kernel, self.c_in, self.c_out))
        for ix, spec, wb in zip(self.plan.groups, self.specs, self.w_bar):
            w[:, :, :, ix] = dequantize(wb, spec)
        return w


Layer = Union[LayerDef, QuantizedLayer]


@dataclass
class QuantizedModel:
    layers: list[Layer]
    bits: int
    g: int
    alpha: float
    feature: str = "max"


def _check_chain(layers: Sequence[Layer]) -> None:
    if not layers:
        raise ConfigError("model has no layers")
    for a, b in zip(layers, layers[1:]):
        if a.c_out != b.c_in:
            raise ShapeError(f"layer with {a.c_out} outputs feeds a layer expecting {b.c_in}")


def _run_fp(layer: LayerDef, x: np.ndarray) -> np.ndarray:
    kernel = adder_conv if layer.kind == "adder" else vanilla_conv
    y = kernel(x, layer.weights, layer.conv)
    if layer.bias is not None:
        y = y + layer.bias
    return y


def _check_input(layers: Sequence[Layer], x) -> np.ndarray:
    x = np.asarray(x, dtype=FLOAT)
    check_activation(x)
    if x.shape[2] != layers[0].c_in:
        raise ShapeError(f"input has {x.shape[2]} channels, model expects {layers[0].c_in}")
    return x


def forward_reference(model: Sequence[LayerDef], x) -> np.ndarray:
    """Full-precision forward pass."""
    _check_chain(model)
    x = _check_input(model, x)
    for layer in model:
        x = _run_fp(layer, x)
    return x


def is_quantizable(layer: LayerDef) -> bool:
    return layer.kind == "adder"


def calibrate(model: Sequence[LayerDef], calib_inputs, alpha: float = 0.999) -> list[ActRange | None]:
    """Activation range of every adder layer's input, from full-precision runs.

    Returns one entry per layer; pass-through layers get ``None``.
    """
    _check_chain(model)
    if isinstance(calib_inputs, np.ndarray) and calib_inputs.ndim == 3:
        calib_inputs = [calib_inputs]
    calib_inputs = list(calib_inputs)
    if not calib_inputs:
        raise CalibrationError("no calibration inputs")
    if not 0 < alpha <= 1:
        raise ConfigError(f"alpha must lie in (0, 1], got {alpha}")

    observers = [RangeObserver() if is_quantizable(layer) else None for layer in model]
    for x in calib_inputs:
        x = _check_input(model, x)
        for layer, obs in zip(model, observers):
            if obs is not None:
                obs.observe(x)
            x = _run_fp(layer, x)

    ranges: list[ActRange | None] = []
    for i, obs in enumerate(observers):
        if obs is None:
            ranges.append(None)
            continue
        r = obs.range(alpha)
        if r.r_x == 0:
            warnings.warn(f"layer {i} saw only zero activations; flooring its range", stacklevel=2)
            r = ActRange(SCALE_FLOOR, r.alpha, r.n)
        ranges.append(r)
    return ranges


def quantize_layer(
    layer: LayerDef,
    act_range: ActRange,
    b: int,
    grouping: GroupingConfig = GroupingConfig(),
    clamp: bool = True,
) -> QuantizedLayer:
    """Quantize one adder layer with group-shared scales.

    Channels are clustered on the original weights.  With ``clamp`` on,
    weights beyond the activation range are clipped and the clipped mass is
    folded into the bias, so those groups take their scale from ``r_x``.
    """
    b = check_bits(b)
    w = layer.weights
    r_x = act_range.r_x
    plan = plan_for_weights(w, grouping)
    if clamp:
        clamped = clamp_layer(w, r_x)
        w, fold = clamped.w_clamped, clamped.bias_fold
    else:
        fold = np.zeros(layer.c_out)
    scales = group_scales(plan, r_x, b)
    specs = [QuantSpec(b, float(s)) for s in scales]
    w_bar = [quantize(w[:, :, :, ix], spec) for ix, spec in zip(plan.groups, specs)]
    bias = layer.bias if layer.bias is not None else np.zeros(layer.c_out)
    return QuantizedLayer(
        plan=plan,
        specs=specs,
        w_bar=w_bar,
        bias_fold=fold,
        bias_total=bias + fold,
        act_range=act_range,
        conv=layer.conv,
    )


def quantize_model(
    model: Sequence[LayerDef],
    ranges: Sequence[ActRange | None],
    b: int,
    grouping: GroupingConfig = GroupingConfig(),
    clamp: bool = True,
    threads: int | None = None,
) -> QuantizedModel:
    """Quantize every adder layer; other layers pass through unchanged."""
    b = check_bits(b)
    _check_chain(model)
    if len(ranges) != len(model):
        raise ConfigError("one range entry per layer required")
    for layer, r in zip(model, ranges):
        if is_quantizable(layer) and r is None:
            raise CalibrationError("missing activation range for an adder layer")

    def work(pair):
        layer, r = pair
        if not is_quantizable(layer):
            return layer
        return quantize_layer(layer, r, b, grouping, clamp)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            layers = list(pool.map(work, zip(model, ranges)))
    else:
        layers = [work(p) for p in zip(model, ranges)]
    alpha = next((r.alpha for r in ranges if r is not None), 1.0)
    return QuantizedModel(layers, b, grouping.g, alpha, grouping.feature.value)


def _group_conv(x_bar, w_bar, conv):
    try:
        return quantized_adder_conv(x_bar, w_bar, conv)
    except OverflowError:
        return quantized_adder_conv(x_bar, w_bar, conv, wide=True)


def run_quantized_layer(layer: QuantizedLayer, x) -> np.ndarray:
    x = clamp_activations(x, layer.act_range.r_x)
    outs = []
    for spec, wb in zip(layer.specs, layer.w_bar):
        # activations are re-quantized on each group's scale
        acc = _group_conv(quantize(x, spec), wb, layer.conv)
        outs.append(dequantize(acc, spec))
    y = np.concatenate(outs, axis=2)[:, :, layer.plan.restore]
    return y + layer.bias_total


def forward_quantized(qm: QuantizedModel, x) -> np.ndarray:
    _check_chain(qm.layers)
    x = _check_input(qm.layers, x)
    for layer in qm.layers:
        if isinstance(layer, QuantizedLayer):
            x = run_quantized_layer(layer, x)
        else:
            x = _run_fp(layer, x)
    return x
