import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adderquant.errors import ConfigError, ShapeError
from adderquant.kernels import ConvConfig, adder_conv, output_shape, quantized_adder_conv, vanilla_conv
from oracles import naive_conv


def test_vanilla_scalar():
    assert vanilla_conv(np.array([[[1.0]]]), np.array([[[[2.0]]]])).ravel().tolist() == [2.0]


def test_vanilla_zero_input(rng):
    w = rng.normal(size=(3, 3, 2, 4))
    assert not vanilla_conv(np.zeros((5, 5, 2)), w, ConvConfig(1, 1)).any()


def test_adder_scalar():
    assert adder_conv(np.array([[[3.0]]]), np.array([[[[5.0]]]])).ravel().tolist() == [-2.0]


def test_adder_identity_window(rng):
    x = rng.normal(size=(3, 3, 2))
    w = x[:, :, :, None]
    assert adder_conv(x, w).ravel().tolist() == [0.0]


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 0), (2, 1)])
def test_against_loop_oracle(rng, stride, padding):
    x = rng.normal(size=(4, 4, 2))
    w = rng.normal(size=(3, 3, 2, 2))
    cfg = ConvConfig(stride, padding)
    np.testing.assert_allclose(vanilla_conv(x, w, cfg), naive_conv(x, w, stride, padding), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(adder_conv(x, w, cfg), naive_conv(x, w, stride, padding, adder=True), rtol=1e-12, atol=1e-12)


def test_channel_mismatch():
    with pytest.raises(ShapeError):
        adder_conv(np.zeros((4, 4, 2)), np.zeros((3, 3, 3, 1)))
    with pytest.raises(ShapeError):
        vanilla_conv(np.zeros((4, 4, 2)), np.zeros((3, 3, 3, 1)))


def test_kernel_too_large():
    with pytest.raises(ShapeError):
        adder_conv(np.zeros((2, 2, 1)), np.zeros((3, 3, 1, 1)))


def test_bad_config():
    with pytest.raises(ConfigError):
        ConvConfig(0, 0)
    with pytest.raises(ConfigError):
        ConvConfig(1, -1)


def test_quantized_trivial():
    x = np.array([[[3]]], dtype=np.int32)
    w = np.array([[[[-3]]]], dtype=np.int32)
    assert quantized_adder_conv(x, w).ravel().tolist() == [-6]
    assert quantized_adder_conv(x, x[..., None]).ravel().tolist() == [0]


def test_quantized_rejects_floats():
    with pytest.raises(TypeError):
        quantized_adder_conv(np.zeros((2, 2, 1)), np.zeros((1, 1, 1, 1), dtype=np.int32))


def test_quantized_overflow_detected():
    x = np.full((1, 1, 1), -32768, dtype=np.int32)
    w = np.full((1, 1, 1, 1), 32767, dtype=np.int32)
    big_x = np.repeat(np.repeat(np.repeat(x, 3, 0), 3, 1), 40000, 2)
    big_w = np.repeat(np.repeat(np.repeat(w, 3, 0), 3, 1), 40000, 2)
    with pytest.raises(OverflowError):
        quantized_adder_conv(big_x, big_w)
    assert quantized_adder_conv(big_x, big_w, wide=True).item() == -9 * 40000 * 65535


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**31),
    d=st.sampled_from([1, 2, 3]),
    stride=st.integers(1, 3),
    padding=st.integers(0, 2),
    c_in=st.integers(1, 4),
    c_out=st.integers(1, 4),
)
def test_shape_law_and_properties(seed, d, stride, padding, c_in, c_out):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(6, 5, c_in))
    w = rng.normal(size=(d, d, c_in, c_out))
    cfg = ConvConfig(stride, padding)
    y = adder_conv(x, w, cfg)
    assert y.shape == ((6 - d + 2 * padding) // stride + 1, (5 - d + 2 * padding) // stride + 1, c_out)
    assert y.shape == output_shape(x.shape, w.shape, cfg)
    assert vanilla_conv(x, w, cfg).shape == y.shape
    assert (y <= 0).all()


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), delta=st.floats(-10, 10))
def test_translation_invariance(seed, delta):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(5, 5, 3))
    w = rng.normal(size=(3, 3, 3, 2))
    np.testing.assert_allclose(adder_conv(x + delta, w + delta), adder_conv(x, w), atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), stride=st.integers(1, 2), padding=st.integers(0, 1))
def test_integer_float_agreement(seed, stride, padding):
    rng = np.random.default_rng(seed)
    x = rng.integers(-8, 8, (5, 5, 3)).astype(np.int32)
    w = rng.integers(-8, 8, (3, 3, 3, 2)).astype(np.int32)
    cfg = ConvConfig(stride, padding)
    np.testing.assert_array_equal(quantized_adder_conv(x, w, cfg), adder_conv(x.astype(float), w.astype(float), cfg))
