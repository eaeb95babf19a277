"""Built-in self-checks run by ``adderquant verify``.

Each suite draws seeded random fixtures and compares an implementation
path against an independent one.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .clamp import clamp_weights
from .grouping import GroupingConfig, cluster_1d, cluster_objective
from .kernels import ConvConfig, adder_conv, quantized_adder_conv
from .pipeline import calibrate, forward_quantized, quantize_model
from .quantizer import QuantSpec
from .store import dumps, loads, toy_inputs, toy_model


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str


def brute_force_contiguous(features, g: int) -> float:
    """Best objective over every split of the sorted features into ``g`` runs."""
    f = np.sort(np.asarray(features, dtype=np.float64))
    order = np.argsort(np.asarray(features, dtype=np.float64), kind="stable")
    best = np.inf
    for cuts in itertools.combinations(range(1, len(f)), g - 1):
        bounds = (0,) + cuts + (len(f),)
        groups = [np.sort(order[a:b]) for a, b in zip(bounds, bounds[1:])]
        best = min(best, cluster_objective(features, groups))
    return best


def lossless_clamp(seed: int = 0, trials: int = 200) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        d = int(rng.choice([1, 3]))
        c_in = int(rng.choice([1, 4, 16]))
        r_x = float(rng.uniform(0.1, 2.0))
        x = rng.uniform(-r_x, r_x, (5, 5, c_in))
        w_c = rng.normal(0.0, 2.0 * r_x, (d, d, c_in))
        clipped, b = clamp_weights(w_c, r_x)
        lhs = adder_conv(x, w_c[..., None])
        rhs = adder_conv(x, clipped[..., None]) + b
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return SuiteResult("theorem1", worst <= 1e-9, f"max |gap| = {worst:.3e} over {trials} layers")


def clustering(seed: int = 0, trials: int = 50) -> SuiteResult:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(trials):
        n = int(rng.integers(1, 13))
        g = int(rng.integers(1, min(4, n) + 1))
        f = rng.exponential(1.0, n)
        if cluster_1d(f, g).objective != brute_force_contiguous(f, g):
            bad += 1
    return SuiteResult("clustering", bad == 0, f"{bad}/{trials} instances off the brute-force optimum")


def kernels(seed: int = 0, trials: int = 100) -> SuiteResult:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(trials):
        c_in, c_out, d = (int(v) for v in rng.integers(1, 5, 3))
        cfg = ConvConfig(int(rng.integers(1, 3)), int(rng.integers(0, 2)))
        x = rng.integers(-8, 8, (6, 6, c_in)).astype(np.int32)
        w = rng.integers(-8, 8, (d, d, c_in, c_out)).astype(np.int32)
        if not np.array_equal(quantized_adder_conv(x, w, cfg), adder_conv(x.astype(float), w.astype(float), cfg)):
            bad += 1
    return SuiteResult("kernels", bad == 0, f"{bad}/{trials} integer/float mismatches")


def roundtrip(seed: int = 0, trials: int = 10, corrupt_scale: bool = False) -> SuiteResult:
    bad = 0
    for t in range(trials):
        model = toy_model(seed + t, (3, 8, 8, 4))
        xs = toy_inputs(seed + t, 2)
        qm = quantize_model(model, calibrate(model, xs), 6, GroupingConfig(4))
        back = loads(dumps(qm))
        if corrupt_scale:
            layer = back.layers[1]
            layer.specs[0] = QuantSpec(layer.specs[0].bits, layer.specs[0].scale * 1.5)
        fp_back = loads(dumps(model))
        same = dumps(back) == dumps(qm) and dumps(fp_back) == dumps(model)
        same = same and np.array_equal(forward_quantized(back, xs[0]), forward_quantized(qm, xs[0]))
        bad += not same
    return SuiteResult("roundtrip", bad == 0, f"{bad}/{trials} models changed across save/load")


SUITES = {
    "theorem1": lossless_clamp,
    "clustering": clustering,
    "kernels": kernels,
    "roundtrip": roundtrip,
}


def run(names=None, seed: int = 0, corrupt_scale: bool = False) -> list[SuiteResult]:
    names = list(names or SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}")
    out = []
    for n in names:
        if n == "roundtrip":
            out.append(roundtrip(seed, corrupt_scale=corrupt_scale))
        else:
            out.append(SUITES[n](seed))
    return out
