from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from precision_highway import resblocks as rb
from precision_highway.erroranalysis import cosine_error
from precision_highway.quant import QuantSpec, quantize
from precision_highway.tensorcore import ConvSpec, conv2d

SMALL = rb.ResidualNetConfig(num_blocks=3, channels=4, spatial=5, activation_bits=2, seed=11)


def test_same_seed_bit_identical():
    a, b = rb.build_random_net(SMALL), rb.build_random_net(SMALL)
    for wa, wb in zip(sum(map(list, a.weights), []), sum(map(list, b.weights), [])):
        assert wa.tobytes() == wb.tobytes()


def test_different_seed_differs():
    a = rb.build_random_net(SMALL)
    b = rb.build_random_net(replace(SMALL, seed=12))
    assert not np.array_equal(a.weights[0][0], b.weights[0][0])


def test_fan_in_scaling_keeps_unit_std():
    cfg = rb.ResidualNetConfig(num_blocks=2, channels=16, spatial=8, convs_per_block=3)
    for seed in range(10):
        net = rb.build_random_net(replace(cfg, seed=seed))
        x = np.random.default_rng(100 + seed).standard_normal(cfg.input_shape)
        for blk in net.weights:
            for w, spec in zip(blk, cfg.conv_specs()):
                std = conv2d(x, w, spec)[:, 1:-1, 1:-1].std()  # interior, away from zero padding
                assert 0.5 <= std <= 2.0


@pytest.mark.parametrize("style", [rb.HIGHWAY_POSTACT, rb.HIGHWAY_PREACT])
@pytest.mark.parametrize("bits", [1, 2, 4])
def test_zero_net_highway_is_identity(style, bits):
    cfg = replace(SMALL, style=style, activation_bits=bits)
    x = rb.random_input(cfg)
    y, taps = rb.forward(rb.zero_net(cfg), x, quantized=True)
    np.testing.assert_array_equal(y, x)
    for t in taps:
        np.testing.assert_array_equal(t, x)


def test_zero_net_conventional_leaves_skip_error():
    cfg = replace(SMALL, num_blocks=1, style=rb.CONVENTIONAL_POSTACT, activation_bits=2)
    x = rb.random_input(cfg)
    y, _ = rb.forward(rb.zero_net(cfg), x, quantized=True)
    np.testing.assert_array_equal(y, quantize(x, QuantSpec.fixed(2)))
    assert not np.array_equal(y, x)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("convs", [1, 2, 3])
def test_skip_error_cancels_exactly(seed, convs):
    cfg = rb.ResidualNetConfig(num_blocks=1, channels=6, spatial=6, convs_per_block=convs,
                               activation_bits=2, weight_bits=2, quantize_first_last=True, seed=seed)
    net = rb.build_random_net(cfg)
    x = rb.random_input(cfg)
    y_conv, _ = rb.forward(rb.with_style(net, rb.CONVENTIONAL_POSTACT), x, quantized=True)
    y_hw, _ = rb.forward(rb.with_style(net, rb.HIGHWAY_POSTACT), x, quantized=True)
    e = quantize(x, QuantSpec.fixed(2)) - x
    np.testing.assert_allclose(y_conv - y_hw, e, rtol=0, atol=1e-12)


def test_full_precision_independent_of_annotations():
    cfg = rb.ResidualNetConfig(num_blocks=4, channels=4, spatial=5, seed=3)
    net = rb.build_random_net(cfg)
    x = rb.random_input(cfg)
    ref, _ = rb.forward(net, x, quantized=False)
    for style in (rb.CONVENTIONAL_POSTACT, rb.HIGHWAY_POSTACT):
        for ka, kw in ((1, 2), (4, None), (8, 3)):
            other = rb.with_style(net, style, activation_bits=ka, weight_bits=kw, highway_bits=6)
            y, _ = rb.forward(other, x, quantized=False)
            assert y.tobytes() == ref.tobytes()


def test_highway_full_equals_64_bits():
    cfg = replace(SMALL, style=rb.HIGHWAY_POSTACT)
    net = rb.build_random_net(cfg)
    x = rb.random_input(cfg)
    y_full, _ = rb.forward(net, x, quantized=True)
    y_64, _ = rb.forward(rb.with_style(net, rb.HIGHWAY_POSTACT, highway_bits=64), x, quantized=True)
    assert y_full.tobytes() == y_64.tobytes()


def test_reduced_highway_quantizes_skip():
    cfg = replace(SMALL, num_blocks=1)
    net = rb.zero_net(cfg)
    x = rb.random_input(cfg)
    y, _ = rb.forward(rb.with_style(net, rb.HIGHWAY_POSTACT, highway_bits=3), x, quantized=True)
    assert len(np.unique(y)) <= 8


def test_lossless_bits_match_full_precision():
    cfg = rb.ResidualNetConfig(num_blocks=4, channels=8, spatial=6, activation_bits=32, weight_bits=32, seed=5)
    for style in rb.STYLES:
        fp, q = rb.run_pair(replace(cfg, style=style), rb.random_input(cfg))
        for a, b in zip(fp, q):
            np.testing.assert_allclose(a, b, atol=1e-6)


def test_taps_one_per_block():
    fp, q = rb.run_pair(SMALL, rb.random_input(SMALL))
    assert len(fp) == len(q) == SMALL.num_blocks


def test_forward_rejects_out_of_range_input():
    net = rb.build_random_net(SMALL)
    x = np.array(rb.random_input(SMALL))
    x[0, 0, 0] = 1.5
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        rb.forward(net, x, quantized=True)
    with pytest.raises(ValueError, match="shape"):
        rb.forward(net, np.zeros((1, 2, 2)), quantized=True)


def test_first_and_last_layers_unquantized_by_default():
    cfg = replace(SMALL, weight_bits=2)
    net = rb.build_random_net(cfg)
    assert net.weight_specs[0][0] is None
    assert net.weight_specs[-1][-1] is None
    assert net.weight_specs[1][0] is not None
    net_all = rb.build_random_net(replace(cfg, quantize_first_last=True))
    assert all(s is not None for blk in net_all.weight_specs for s in blk)


def test_preact_skip_carries_raw_sum():
    # block 2 of a pre-activation highway sees a negative-valued sum on its skip
    cfg = rb.ResidualNetConfig(num_blocks=2, channels=4, spatial=5, style=rb.HIGHWAY_PREACT, seed=2)
    net = rb.build_random_net(cfg)
    y_pre, taps = rb.forward(net, rb.random_input(cfg), quantized=False)
    assert taps[0].min() < 0.0  # the first sum leaves [0, 1]
    y_post, _ = rb.forward(rb.with_style(net, rb.HIGHWAY_POSTACT), rb.random_input(cfg), quantized=False)
    assert not np.array_equal(y_pre, y_post)


@pytest.mark.parametrize("bad", [dict(convs_per_block=4), dict(activation_bits=0), dict(style="x"),
                                 dict(highway_bits=0), dict(channels=0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        replace(SMALL, **bad)


def test_config_dict_round_trip():
    assert rb.ResidualNetConfig.from_dict(SMALL.to_dict()) == SMALL
    with pytest.raises(ValueError, match="unknown"):
        rb.ResidualNetConfig.from_dict({**SMALL.to_dict(), "depth": 3})


def _final_error(cfg, seed):
    fp, q = rb.run_pair(replace(cfg, seed=seed), rb.random_input(replace(cfg, seed=seed)))
    return cosine_error(fp[-1], q[-1])


@pytest.mark.slow
def test_highway_final_error_not_worse_median():
    cfg = rb.ResidualNetConfig(num_blocks=8, channels=32, spatial=8, activation_bits=2)
    conv = [_final_error(replace(cfg, style=rb.CONVENTIONAL_POSTACT), s) for s in range(10)]
    hw = [_final_error(replace(cfg, style=rb.HIGHWAY_POSTACT), s) for s in range(10)]
    assert np.median(hw) <= np.median(conv)


@pytest.mark.slow
def test_conventional_error_grows_with_depth():
    base = rb.ResidualNetConfig(channels=32, spatial=8, activation_bits=2, style=rb.CONVENTIONAL_POSTACT)
    shallow = [_final_error(replace(base, num_blocks=1), s) for s in range(10)]
    deep = [_final_error(replace(base, num_blocks=16), s) for s in range(10)]
    assert np.median(deep) >= np.median(shallow)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_skip_cancellation_property(seed):
    cfg = rb.ResidualNetConfig(num_blocks=1, channels=3, spatial=4, activation_bits=3, seed=seed)
    net = rb.build_random_net(cfg)
    x = rb.random_input(cfg)
    y_conv, _ = rb.forward(rb.with_style(net, rb.CONVENTIONAL_POSTACT), x, quantized=True)
    y_hw, _ = rb.forward(rb.with_style(net, rb.HIGHWAY_POSTACT), x, quantized=True)
    np.testing.assert_allclose(y_conv - y_hw, quantize(x, QuantSpec.fixed(3)) - x, rtol=0, atol=1e-12)


def test_conv_specs_layout():
    assert [s.kernel_size for s in replace(SMALL, convs_per_block=3).conv_specs()] == [1, 3, 1]
    assert all(isinstance(s, ConvSpec) for s in SMALL.conv_specs())
