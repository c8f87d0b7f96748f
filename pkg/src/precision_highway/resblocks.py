"""Toy residual networks with configurable quantizer placement.

A block maps its input sum ``x`` to ``y = F(branch) + skip``:

* ``conventional_postact``: ``a = Q(act(x))`` feeds both the branch and the
  skip, so the skip carries the activation quantization error.
* ``highway_postact``: the skip takes ``act(x)`` at full precision (or reduced
  to ``highway_bits`` by min/max quantization); only the branch sees ``Q``.
* ``highway_preact``: like ``highway_postact`` but the skip takes the raw sum
  ``x`` before the activation.

``act`` is ReLU clamped at 1. ``F`` is 1-3 convolutions with the same bounded
activation and ``Q`` between them. Block boundaries sit right after the skip
addition, which is where taps are recorded.
"""

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .quant import QuantSpec, fit_weight_quantizer, quantize, quantize_dynamic, weights_lossless
from .tensorcore import ConvSpec, clip01, conv2d, elementwise_add, freeze

CONVENTIONAL_POSTACT = "conventional_postact"
HIGHWAY_POSTACT = "highway_postact"
HIGHWAY_PREACT = "highway_preact"
STYLES = (CONVENTIONAL_POSTACT, HIGHWAY_POSTACT, HIGHWAY_PREACT)

KERNEL_LAYOUTS = {1: (3,), 2: (3, 3), 3: (1, 3, 1)}


def _check_bits(name, v, allow_full):
    if v is None and allow_full:
        return
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
        raise ValueError(f"{name} must be a positive integer{' or full' if allow_full else ''}, got {v!r}")


@dataclass(frozen=True)
class ResidualNetConfig:
    """Architecture and precision annotations of a toy residual net.

    ``weight_bits=None`` and ``highway_bits=None`` both mean full precision.
    """

    num_blocks: int = 16
    channels: int = 64
    spatial: int = 8
    convs_per_block: int = 2
    activation_bits: int = 4
    weight_bits: int | None = None
    style: str = HIGHWAY_POSTACT
    highway_bits: int | None = None
    quantize_first_last: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.num_blocks < 0:
            raise ValueError("num_blocks must be >= 0")
        if self.channels < 1 or self.spatial < 1:
            raise ValueError("channels and spatial must be positive")
        if self.convs_per_block not in KERNEL_LAYOUTS:
            raise ValueError(f"convs_per_block must be one of {sorted(KERNEL_LAYOUTS)}")
        _check_bits("activation_bits", self.activation_bits, False)
        _check_bits("weight_bits", self.weight_bits, True)
        _check_bits("highway_bits", self.highway_bits, True)
        if self.style not in STYLES:
            raise ValueError(f"style must be one of {STYLES}, got {self.style!r}")

    @property
    def input_shape(self):
        return (self.channels, self.spatial, self.spatial)

    def conv_specs(self):
        return [ConvSpec(self.channels, self.channels, k, 1, k // 2)
                for k in KERNEL_LAYOUTS[self.convs_per_block]]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown ResidualNetConfig keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class ResidualNet:
    config: ResidualNetConfig
    weights: tuple  # per block: tuple of conv kernels
    weight_specs: tuple = field(default=())  # matching QuantSpec or None

    def layer_names(self):
        return [f"block{b}.conv{j}" for b, blk in enumerate(self.weights) for j in range(len(blk))]


def _weight_specs(config, weights):
    specs = []
    last = len(weights) - 1
    for b, blk in enumerate(weights):
        row = []
        for j, w in enumerate(blk):
            edge = (b == 0 and j == 0) or (b == last and j == len(blk) - 1)
            if weights_lossless(config.weight_bits) or (edge and not config.quantize_first_last):
                row.append(None)
            elif not np.any(w):
                # all-zero kernels have no Laplace scale; they are already exact
                row.append(None)
            else:
                row.append(fit_weight_quantizer(w, config.weight_bits))
        specs.append(tuple(row))
    return tuple(specs)


def assemble(config, weights):
    """Wrap given kernels (e.g. loaded from disk) into a net for ``config``."""
    weights = tuple(tuple(freeze(w) for w in blk) for blk in weights)
    specs = config.conv_specs()
    if len(weights) != config.num_blocks:
        raise ValueError(f"expected {config.num_blocks} blocks, got {len(weights)}")
    for blk in weights:
        if len(blk) != len(specs):
            raise ValueError(f"expected {len(specs)} convs per block, got {len(blk)}")
        for w, s in zip(blk, specs):
            want = (s.out_channels, s.in_channels, s.kernel_size, s.kernel_size)
            if w.shape != want:
                raise ValueError(f"kernel shape {w.shape} != {want}")
    return ResidualNet(config, weights, _weight_specs(config, weights))


def build_random_net(config):
    """Seeded Gaussian kernels scaled by ``1/sqrt(fan_in)``."""
    rng = np.random.default_rng(config.seed)
    blocks = []
    for _ in range(config.num_blocks):
        blk = []
        for s in config.conv_specs():
            fan_in = s.in_channels * s.kernel_size ** 2
            shape = (s.out_channels, s.in_channels, s.kernel_size, s.kernel_size)
            blk.append(rng.standard_normal(shape) / np.sqrt(fan_in))
        blocks.append(blk)
    return assemble(config, blocks)


def zero_net(config):
    blocks = [[np.zeros((s.out_channels, s.in_channels, s.kernel_size, s.kernel_size))
               for s in config.conv_specs()] for _ in range(config.num_blocks)]
    return assemble(config, blocks)


def with_style(net, style, **changes):
    """Same kernels, different quantizer placement (or other annotations)."""
    cfg = replace(net.config, style=style, **changes)
    return ResidualNet(cfg, net.weights, _weight_specs(cfg, net.weights))


def random_input(config, seed=None):
    """Seeded uniform input in [0, 1]; a stream separate from the weights."""
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng([seed, 1])
    return freeze(rng.uniform(0.0, 1.0, size=config.input_shape))


def _validate_input(config, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != config.input_shape:
        raise ValueError(f"input shape {x.shape} != {config.input_shape}")
    if not np.all(np.isfinite(x)) or x.min() < 0.0 or x.max() > 1.0:
        raise ValueError("input values must lie in [0, 1]")
    return freeze(x)


def _residual_path(net, b, r, quantized, aq):
    specs = net.config.conv_specs()
    last = len(specs) - 1
    for j, (w, s) in enumerate(zip(net.weights[b], specs)):
        wspec = net.weight_specs[b][j] if quantized else None
        if wspec is not None:
            w = quantize(w, wspec)
        r = conv2d(r, w, s)
        if j < last:
            r = clip01(r)
            if quantized:
                r = quantize(r, aq)
    return r


def forward(net, x, quantized):
    """Run the net; returns ``(y, taps)`` with one post-addition tap per block."""
    cfg = net.config
    cur = _validate_input(cfg, x)
    aq = QuantSpec.fixed(cfg.activation_bits, 0.0, 1.0)
    taps = []
    for b in range(cfg.num_blocks):
        act = clip01(cur)
        if not quantized:
            skip = cur if cfg.style == HIGHWAY_PREACT else act
            branch = act
        elif cfg.style == CONVENTIONAL_POSTACT:
            branch = skip = quantize(act, aq)
        else:
            branch = quantize(act, aq)
            skip = cur if cfg.style == HIGHWAY_PREACT else act
            if cfg.highway_bits is not None:
                skip = quantize_dynamic(skip, cfg.highway_bits)
        cur = elementwise_add(_residual_path(net, b, branch, quantized, aq), skip)
        taps.append(cur)
    return cur, taps


def run_pair(net_or_config, x):
    """Full-precision and quantized runs from identical weights."""
    net = net_or_config
    if isinstance(net, ResidualNetConfig):
        net = build_random_net(net)
    _, taps_fp = forward(net, x, quantized=False)
    _, taps_q = forward(net, x, quantized=True)
    return taps_fp, taps_q
