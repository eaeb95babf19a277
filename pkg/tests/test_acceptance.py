"""Acceptance gate: the eleven primary criteria at their stated tolerances.

Each criterion prints one ``PASS``/``FAIL`` line (visible under pytest
without ``-s``).  Run directly with ``python3 tests/test_acceptance.py`` for
just the summary.
"""
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from adderquant import store  # noqa: E402
from adderquant.baseline import shared_scale, shared_scale_adder  # noqa: E402
from adderquant.clamp import clamp_weights  # noqa: E402
from adderquant.diagnostics import flops_overhead, prop1_analysis  # noqa: E402
from adderquant.errors import ContainerError  # noqa: E402
from adderquant.grouping import GroupingConfig, cluster_1d  # noqa: E402
from adderquant.kernels import ConvConfig, adder_conv, quantized_adder_conv  # noqa: E402
from adderquant.pipeline import LayerDef, calibrate, forward_quantized, forward_reference, quantize_model  # noqa: E402
from corruptions import corruption_fixtures  # noqa: E402
from oracles import contiguous_optimum, sse  # noqa: E402


def _mean_l1(model, qm, xs):
    return float(np.mean([np.abs(forward_quantized(qm, x) - forward_reference(model, x)).mean() for x in xs]))


def c1_lossless_clamp():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for t in range(500):
        d = (1, 3)[t % 2]
        c_in = (1, 4, 16)[t % 3]
        r_x = float(rng.uniform(0.05, 5.0))
        x = rng.uniform(-r_x, r_x, (6, 6, c_in))
        w_c = rng.normal(0.0, 2.0 * r_x, (d, d, c_in))
        clipped, b = clamp_weights(w_c, r_x)
        gap = adder_conv(x, w_c[..., None]) - (adder_conv(x, clipped[..., None]) + b)
        worst = max(worst, float(np.abs(gap).max()))
    elapsed = time.perf_counter() - start
    return worst <= 1e-9 and elapsed < 10, f"max gap {worst:.2e} over 500 triples in {elapsed:.2f}s"


def c2_over_clamp_case():
    got = {}
    for b in (4, 8):
        r_x = 0.37
        x = np.linspace(-r_x, r_x, 4 * 4 * 3).reshape(4, 4, 3)
        w = np.full((3, 3, 3, 2), 50 * r_x)
        half = 2 ** (b - 1)
        rep = prop1_analysis(w, x, b, "activations")
        got[b] = (rep.over_clamp_fraction, (49 * half - 25) / (50 * half - 25))
    ok = all(a == e for a, e in got.values())
    return ok, ", ".join(f"b={b}: {a:.6f} (expected {e:.6f})" for b, (a, e) in got.items())


def c3_bits_waste_case():
    r_w = 2.5
    w = np.linspace(-r_w, r_w, 3 * 3 * 3 * 4).reshape(3, 3, 3, 4)
    x = np.full((5, 5, 3), 0.02 * r_w)
    waste = prop1_analysis(w, x, 8, "weights").bits_waste_fraction
    return abs(waste - 0.98) <= 0.01, f"bits_waste_fraction {waste:.4f}"


def c4_flops_table():
    expected = {2: 1.002, 4: 1.005, 8: 1.012}
    rows = {g: flops_overhead(32, 32, 3, 32, 32, g) for g in expected}
    table_ok = all(round(r.relative_flops, 3) == expected[g] for g, r in rows.items())
    closed_ok = all(abs(r.closed_form_r - r.overhead) <= 5e-4 for r in rows.values())
    detail = ", ".join(f"g={g}: {r.relative_flops:.5f}" for g, r in rows.items())
    return table_ok and closed_ok, detail


def c5_clustering_optimal():
    rng = np.random.default_rng(105)
    bad = 0
    for _ in range(100):
        n = int(rng.integers(1, 17))
        g = int(rng.integers(1, min(4, n) + 1))
        f = rng.lognormal(0.0, 1.0, n)
        if sse(f, cluster_1d(f, g).groups) != contiguous_optimum(f, g):
            bad += 1
    return bad == 0, f"{bad}/100 instances differ from brute force"


def c6_kernel_equivalence():
    rng = np.random.default_rng(106)
    bad = 0
    for _ in range(200):
        c_in, c_out, d = (int(v) for v in rng.integers(1, 5, 3))
        cfg = ConvConfig(int(rng.integers(1, 3)), int(rng.integers(0, 2)))
        lim = 2 ** int(rng.integers(2, 16))
        x = rng.integers(-lim, lim, (6, 7, c_in)).astype(np.int32)
        w = rng.integers(-lim, lim, (d, d, c_in, c_out)).astype(np.int32)
        bad += not np.array_equal(quantized_adder_conv(x, w, cfg), adder_conv(x.astype(float), w.astype(float), cfg))
    return bad == 0, f"{bad}/200 mismatches"


def _bimodal_layer(rng, xs, c_in=8, c_out=16):
    r = float(np.abs(np.stack(xs)).max())
    small = rng.random(c_out) < 0.5
    maxima = r * np.where(small, rng.uniform(0.3, 0.6, c_out), rng.uniform(3.0, 6.0, c_out))
    w = rng.uniform(-1.0, 1.0, (3, 3, c_in, c_out))
    w *= maxima / np.abs(w).reshape(-1, c_out).max(axis=0)
    return LayerDef("adder", w, ConvConfig(1, 1))


def c7_grouping_benefit():
    rng = np.random.default_rng(107)
    wins = 0
    for _ in range(200):
        xs = [rng.standard_normal((8, 8, 8)) for _ in range(4)]
        layer = _bimodal_layer(rng, xs)
        model = [layer]
        qm = quantize_model(model, calibrate(model, xs, 0.999), 4, GroupingConfig(4))
        grouped = _mean_l1(model, qm, xs)
        r_x = float(np.abs(np.stack(xs)).max())
        source = "weights" if np.abs(layer.weights).max() <= r_x else "activations"
        s = shared_scale(layer.weights, r_x, 4, source)
        shared = float(np.mean([
            np.abs(shared_scale_adder(x, layer.weights, 4, s, layer.conv) - forward_reference(model, x)).mean()
            for x in xs
        ]))
        wins += grouped < shared
    return wins >= 190, f"g=4 pipeline wins {wins}/200 trials"


def c8_degeneracy():
    rng = np.random.default_rng(108)
    bad = 0
    for t in range(50):
        c_in, c_out = int(rng.integers(1, 6)), int(rng.integers(1, 9))
        d = int(rng.choice([1, 3]))
        cfg = ConvConfig(1, d // 2)
        x = rng.normal(0.0, 1.0, (6, 6, c_in))
        w = rng.normal(0.0, float(rng.choice([0.2, 3.0])), (d, d, c_in, c_out))
        bias = rng.normal(size=c_out)
        b = int(rng.integers(2, 17))
        model = [LayerDef("adder", w, cfg, bias)]
        qm = quantize_model(model, calibrate(model, [x], 1.0), b, GroupingConfig(1), clamp=False)
        r_x = float(np.abs(x).max())
        source = "weights" if np.abs(w).max() <= r_x else "activations"
        expected = shared_scale_adder(x, w, b, shared_scale(w, r_x, b, source), cfg, bias)
        bad += not np.array_equal(forward_quantized(qm, x), expected)
    return bad == 0, f"{bad}/50 layers differ from the shared-scale path"


def c9_high_bit():
    model = store.toy_model(109, (3, 8, 8, 4))
    xs = store.toy_inputs(110, 20)
    qm = quantize_model(model, calibrate(model, xs, 1.0), 16, GroupingConfig(4))
    worst = 0.0
    for x in xs:
        fp = forward_reference(model, x)
        worst = max(worst, float(np.abs(forward_quantized(qm, x) - fp).max() / np.abs(fp).max()))
    return worst <= 1e-3, f"worst relative L-inf {worst:.2e} over 20 inputs"


def c10_serialization():
    with warnings.catch_warnings():
        # tiny random layers often have fewer channels than groups
        warnings.simplefilter("ignore", UserWarning)
        return _serialization()


def _serialization():
    rng = np.random.default_rng(110)
    changed = 0
    for seed in range(100):
        depth = int(rng.integers(1, 5))
        widths = tuple(int(v) for v in rng.integers(1, 7, depth + 1))
        model = store.toy_model(seed, widths, kernel=int(rng.choice([1, 3])))
        xs = store.toy_inputs(seed, 2, channels=widths[0])
        qm = quantize_model(model, calibrate(model, xs), int(rng.integers(2, 17)), GroupingConfig(int(rng.integers(1, 5))))
        for obj in (model, qm):
            blob = store.dumps(obj)
            changed += store.dumps(store.loads(blob)) != blob
        changed += not np.array_equal(forward_quantized(store.loads(store.dumps(qm)), xs[0]), forward_quantized(qm, xs[0]))
    model = store.toy_model(0, (3, 8, 8, 4))
    qm = quantize_model(model, calibrate(model, store.toy_inputs(0, 2)), 6, GroupingConfig(4))
    fixtures = corruption_fixtures(store.dumps(qm))
    caught = 0
    for data in fixtures.values():
        try:
            store.loads(data)
        except ContainerError:
            caught += 1
    ok = changed == 0 and caught == len(fixtures) == 10
    return ok, f"{changed} round-trip differences over 100 models, {caught}/{len(fixtures)} corruptions rejected"


def c11_monotone_bits():
    violations = 0
    for seed in range(20):
        model = store.toy_model(seed, (3, 8, 8, 8, 4))
        ranges = calibrate(model, store.toy_inputs(seed + 1000, 8), 0.999)
        held_out = store.toy_inputs(seed + 2000, 4)
        errs = [_mean_l1(model, quantize_model(model, ranges, b, GroupingConfig(4)), held_out) for b in (4, 5, 6, 8)]
        violations += sum(e2 > e1 for e1, e2 in zip(errs, errs[1:]))
    return violations <= 0.05 * 60, f"{violations}/60 adjacent-level increases"


CRITERIA = [
    ("1 lossless weight clamp", c1_lossless_clamp),
    ("2 over-clamp worked case", c2_over_clamp_case),
    ("3 bits-waste worked case", c3_bits_waste_case),
    ("4 FLOPs table", c4_flops_table),
    ("5 clustering optimality", c5_clustering_optimal),
    ("6 integer/float kernels", c6_kernel_equivalence),
    ("7 grouping benefit", c7_grouping_benefit),
    ("8 shared-scale degeneracy", c8_degeneracy),
    ("9 high-bit convergence", c9_high_bit),
    ("10 serialization", c10_serialization),
    ("11 monotone in bits", c11_monotone_bits),
]


def _line(name, ok, detail):
    return f"{'PASS' if ok else 'FAIL'} criterion {name}: {detail}"


@pytest.mark.parametrize("name,check", CRITERIA, ids=[c[0].split()[0] for c in CRITERIA])
def test_criterion(name, check, capsys):
    ok, detail = check()
    with capsys.disabled():
        print("\n" + _line(name, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    results = [(name, *check()) for name, check in CRITERIA]
    for r in results:
        print(_line(*r))
    sys.exit(0 if all(ok for _, ok, _ in results) else 1)
