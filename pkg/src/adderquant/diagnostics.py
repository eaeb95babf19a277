"""Quantization diagnostics: over-clamp / bits-waste analysis, FLOPs cost
of group-shared scales, and per-layer error reports."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields

import numpy as np

from .baseline import shared_scale, shared_scale_adder
from .errors import ConfigError, ShapeError
from .kernels import ConvConfig, adder_conv
from .pipeline import LayerDef, QuantizedLayer, QuantizedModel, _run_fp, forward_reference, run_quantized_layer
from .quantizer import QuantSpec, check_bits, quant_loss, quantize, raw_codes
from .clamp import clamp_activations


@dataclass
class LayerReport:
    """Per-layer quantization health.

    ``over_clamp_fraction`` is the share of total pre-clamp code magnitude
    cut off by saturation at ``2**(b-1)``; ``clamped_element_fraction``
    counts saturated elements instead.  ``bits_waste_fraction`` is
    ``(q_p - max|x_code|) / q_p``, the positive code levels activations never
    reach.
    """

    over_clamp_fraction: float = 0.0
    clamped_element_fraction: float = 0.0
    bits_waste_fraction: float = 0.0
    weight_quant_loss: float = 0.0
    act_quant_loss: float = 0.0
    output_l1_error: float = 0.0


def over_clamp(codes, b: int) -> tuple[float, float]:
    """(magnitude fraction, element fraction) of codes saturated by the quantizer."""
    raw = np.asarray(codes, dtype=np.int64)
    q_n, q_p = -(2 ** (b - 1)), 2 ** (b - 1) - 1
    mag = np.abs(raw)
    total = int(mag.sum())
    cut = int(np.maximum(mag - 2 ** (b - 1), 0).sum())
    frac = cut / total if total else 0.0
    elem = float(np.mean((raw < q_n) | (raw > q_p))) if raw.size else 0.0
    return frac, elem


def bits_waste(x_codes, b: int) -> float:
    q_p = 2 ** (b - 1) - 1
    top = int(np.abs(np.asarray(x_codes, dtype=np.int64)).max()) if np.size(x_codes) else 0
    return max(q_p - top, 0) / q_p


def prop1_analysis(w, x, b: int, scale_source: str, cfg: ConvConfig = ConvConfig()) -> LayerReport:
    """Quantize weights and activations with one shared scale and measure the damage.

    ``scale_source`` picks the range the scale comes from: ``"weights"``
    (``max|W|``) or ``"activations"`` (``max|X|``).  Output error is filled in
    when ``x`` and ``w`` are an activation/weight pair.
    """
    b = check_bits(b)
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    s = shared_scale(w, float(np.abs(x).max()), b, scale_source)
    spec = QuantSpec(b, s)
    frac, elem = over_clamp(raw_codes(w, s), b)
    rep = LayerReport(
        over_clamp_fraction=frac,
        clamped_element_fraction=elem,
        bits_waste_fraction=bits_waste(quantize(x, spec), b),
        weight_quant_loss=float(quant_loss(w, spec).mean()),
        act_quant_loss=float(quant_loss(x, spec).mean()),
    )
    if x.ndim == 3 and w.ndim == 4 and x.shape[2] == w.shape[2]:
        fp = adder_conv(x, w, cfg)
        rep.output_l1_error = float(np.abs(fp - shared_scale_adder(x, w, b, s, cfg)).mean())
    return rep


def layer_report(fp_out, q_out, intermediates: dict | None = None) -> LayerReport:
    """Report with ``output_l1_error = mean|fp_out - q_out|``.

    ``intermediates`` may carry any other LayerReport field by name.
    """
    fp_out = np.asarray(fp_out, dtype=np.float64)
    q_out = np.asarray(q_out, dtype=np.float64)
    if fp_out.shape != q_out.shape:
        raise ShapeError(f"output shapes differ: {fp_out.shape} vs {q_out.shape}")
    rep = LayerReport(**(intermediates or {}))
    rep.output_l1_error = float(np.abs(fp_out - q_out).mean())
    return rep


def quantized_layer_stats(layer: LayerDef, qlayer: QuantizedLayer, x) -> dict:
    """Clamp, waste and loss statistics of a grouped layer on input ``x``."""
    xc = clamp_activations(x, qlayer.act_range.r_x)
    w = np.clip(layer.weights, -qlayer.act_range.r_x, qlayer.act_range.r_x) if np.any(qlayer.bias_fold) else layer.weights
    cut = total = n_sat = n_el = 0
    wastes, w_loss, a_loss = [], 0.0, []
    for ix, spec in zip(qlayer.plan.groups, qlayer.specs):
        raw = np.abs(raw_codes(w[:, :, :, ix], spec.scale))
        half = 2 ** (spec.bits - 1)
        cut += int(np.maximum(raw - half, 0).sum())
        total += int(raw.sum())
        n_sat += int((raw > spec.q_p).sum())
        n_el += raw.size
        w_loss += float(quant_loss(w[:, :, :, ix], spec).sum())
        wastes.append(bits_waste(quantize(xc, spec), spec.bits))
        a_loss.append(float(quant_loss(xc, spec).mean()))
    return {
        "over_clamp_fraction": cut / total if total else 0.0,
        "clamped_element_fraction": n_sat / n_el,
        "bits_waste_fraction": float(np.mean(wastes)),
        "weight_quant_loss": w_loss / n_el,
        "act_quant_loss": float(np.mean(a_loss)),
    }


# ---------------------------------------------------------------------------
# FLOPs


@dataclass
class FlopsReport:
    flops_all: int
    flops_single: int
    relative_flops: float
    overhead: float
    closed_form_r: float | None
    approx_r: float | None


def layer_flops(h, w, d, c_in, c_out, g, padding=1, stride=1) -> int:
    """FLOPs of one quantized adder layer with ``g`` activation quantization passes.

    Integer l1 convolution, weight quantization, ``g`` activation
    quantizations and output dequantization, one FLOP per element for each
    (de)quantize op.
    """
    cfg = ConvConfig(stride, padding)
    h_out, w_out = cfg.out_size(h, d), cfg.out_size(w, d)
    return (
        2 * h * w * (c_in * d * d + 1) * c_out
        + c_in * d * d * c_out
        + g * h * w * c_in
        + h_out * w_out * c_out
    )


def flops_overhead(h, w, d, c_in, c_out, g, padding=1, stride=1) -> FlopsReport:
    """Cost of ``g`` group-shared scales relative to a single shared scale.

    ``closed_form_r`` is filled for the square case (``d == 3``, ``h == w``,
    ``c_in == c_out``, unit stride and padding); ``approx_r`` is the large-k
    approximation ``(g-1)/(18c+4)`` in the same case.
    """
    for name, v in dict(h=h, w=w, d=d, c_in=c_in, c_out=c_out, g=g, stride=stride).items():
        if isinstance(v, bool) or int(v) != v or v < 1:
            raise ConfigError(f"{name} must be a positive integer, got {v}")
    if padding < 0:
        raise ConfigError(f"padding must be non-negative, got {padding}")
    full = layer_flops(h, w, d, c_in, c_out, g, padding, stride)
    single = layer_flops(h, w, d, c_in, c_out, 1, padding, stride)
    closed = approx = None
    if d == 3 and h == w and c_in == c_out and padding == 1 and stride == 1:
        k, c = h, c_in
        closed = (g - 1) * k * k * c / (18 * k * k * c * c + k * k * c + 9 * c * c + 3 * k * k * c)
        approx = (g - 1) / (18 * c + 4)
    return FlopsReport(full, single, full / single, full / single - 1.0, closed, approx)


# ---------------------------------------------------------------------------
# model-level reports

REPORT_COLUMNS = (
    "layer",
    "kind",
    "groups",
    "r_x",
    "over_clamp_fraction",
    "clamped_element_fraction",
    "bits_waste_fraction",
    "weight_quant_loss",
    "act_quant_loss",
    "output_l1_error",
    "baseline_act_over_clamp",
    "baseline_act_output_l1",
    "baseline_w_bits_waste",
    "baseline_w_output_l1",
    "relative_flops",
)


def analyze_model(model: list[LayerDef], qm: QuantizedModel, x) -> list[dict]:
    """One row per quantized layer, each layer fed its full-precision input.

    Baseline columns quantize the same layer with a single shared scale from
    the activation range (``act``) or from the weights (``w``).
    """
    if len(model) != len(qm.layers):
        raise ShapeError("model and quantized model differ in depth")
    rows = []
    x = np.asarray(x, dtype=np.float64)
    forward_reference(model, x)  # shape check
    for i, (layer, q) in enumerate(zip(model, qm.layers)):
        if isinstance(q, QuantizedLayer):
            fp = _run_fp(layer, x)
            stats = quantized_layer_stats(layer, q, x)
            rep = layer_report(fp, run_quantized_layer(q, x), stats)
            r_x = q.act_range.r_x
            xc = clamp_activations(x, r_x)
            act = prop1_analysis(layer.weights, xc, qm.bits, "activations", layer.conv)
            wts = prop1_analysis(layer.weights, xc, qm.bits, "weights", layer.conv)
            fl = flops_overhead(x.shape[0], x.shape[1], layer.weights.shape[0], layer.c_in, layer.c_out,
                                q.plan.g, layer.conv.padding, layer.conv.stride)
            rows.append({
                "layer": i,
                "kind": layer.kind,
                "groups": q.plan.g,
                "r_x": r_x,
                **asdict(rep),
                "baseline_act_over_clamp": act.over_clamp_fraction,
                "baseline_act_output_l1": act.output_l1_error,
                "baseline_w_bits_waste": wts.bits_waste_fraction,
                "baseline_w_output_l1": wts.output_l1_error,
                "relative_flops": fl.relative_flops,
            })
        x = _run_fp(layer, x)
    return rows


def flops_table(c: int = 32, k: int = 32, d: int = 3, groups=(1, 2, 4, 8)) -> list[dict]:
    rows = []
    for g in groups:
        r = flops_overhead(k, k, d, c, c, g)
        rows.append({"groups": g, **asdict(r)})
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return "" if v is None else str(v)


def to_csv(rows: list[dict], columns=None) -> str:
    columns = list(columns or (rows[0].keys() if rows else REPORT_COLUMNS))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns})
    return buf.getvalue()


def to_text(rows: list[dict], columns=None) -> str:
    columns = list(columns or (rows[0].keys() if rows else REPORT_COLUMNS))
    cells = [[_fmt(r[c]) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(wd) for c, wd in zip(columns, widths))]
    lines += ["  ".join(v.rjust(wd) for v, wd in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


LAYER_REPORT_FIELDS = tuple(f.name for f in fields(LayerReport))
