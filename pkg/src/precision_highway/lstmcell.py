"""Stacked LSTM cells with conventional or highway quantizer placement.

Gate order in every weight matrix is ``i, f, g, o``. Under the highway
placement only the operands of the two matrix products are quantized: the
layer input and ``h_{t-1}`` onto ``[-1, 1]`` with ``activation_bits``, the
weights with Laplace levels. Under the conventional placement ``i, f, o``,
``g``, ``c`` and ``h`` are also snapped (``c`` onto ``[-cell_clip, cell_clip]``)
before the operation that consumes them.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .quant import QuantSpec, quantize, quantize_weights, weights_lossless
from .tensorcore import elementwise_add, elementwise_mul, freeze, matvec, sigmoid, tanh

CONVENTIONAL = "conventional"
HIGHWAY = "highway"
PLACEMENTS = (CONVENTIONAL, HIGHWAY)


@dataclass(frozen=True)
class LstmConfig:
    """Cell sizes, precision annotations and initialization.

    ``forget_bias`` is added to the forget-gate pre-activation at init. The
    default of 3 (``f`` near 0.95, a memory of roughly 20 steps) stands in
    for the long-memory units of a trained model; a near-zero bias forgets
    within a couple of steps and nothing can accumulate across time.
    """

    input_size: int = 32
    hidden_size: int = 32
    num_layers: int = 1
    activation_bits: int = 2
    weight_bits: int | None = None
    placement: str = HIGHWAY
    cell_clip: float = 2.0
    forget_bias: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.input_size < 1 or self.hidden_size < 1:
            raise ValueError("input_size and hidden_size must be positive")
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if isinstance(self.activation_bits, bool) or self.activation_bits < 1:
            raise ValueError(f"activation_bits must be >= 1, got {self.activation_bits!r}")
        if self.weight_bits is not None and self.weight_bits < 1:
            raise ValueError(f"weight_bits must be >= 1 or full, got {self.weight_bits!r}")
        if self.placement not in PLACEMENTS:
            raise ValueError(f"placement must be one of {PLACEMENTS}, got {self.placement!r}")
        if not self.cell_clip > 0:
            raise ValueError("cell_clip must be positive")

    def layer_input_size(self, layer):
        return self.input_size if layer == 0 else self.hidden_size

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown LstmConfig keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class LayerWeights:
    w_ih: np.ndarray  # (4H, I)
    w_hh: np.ndarray  # (4H, H)
    b_ih: np.ndarray  # (4H,)
    b_hh: np.ndarray  # (4H,)


@dataclass(frozen=True)
class LstmState:
    """Per-layer hidden output and cell state, each ``(num_layers, hidden)``."""

    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, cfg):
        z = freeze(np.zeros((cfg.num_layers, cfg.hidden_size)))
        return cls(z, z)


def init_weights(cfg):
    """Seeded Gaussian weights scaled by ``1/sqrt(fan_in)``.

    Biases are zero except the forget gate's, which is ``cfg.forget_bias``.
    """
    rng = np.random.default_rng(cfg.seed)
    layers = []
    four_h = 4 * cfg.hidden_size
    for layer in range(cfg.num_layers):
        n_in = cfg.layer_input_size(layer)
        fan_in = n_in + cfg.hidden_size
        b_ih = np.zeros(four_h)
        b_ih[cfg.hidden_size:2 * cfg.hidden_size] = cfg.forget_bias
        layers.append(LayerWeights(
            w_ih=freeze(rng.standard_normal((four_h, n_in)) / np.sqrt(fan_in)),
            w_hh=freeze(rng.standard_normal((four_h, cfg.hidden_size)) / np.sqrt(fan_in)),
            b_ih=freeze(b_ih),
            b_hh=freeze(np.zeros(four_h)),
        ))
    return tuple(layers)


def zero_weights(cfg):
    four_h = 4 * cfg.hidden_size
    return tuple(
        LayerWeights(freeze(np.zeros((four_h, cfg.layer_input_size(layer)))),
                     freeze(np.zeros((four_h, cfg.hidden_size))),
                     freeze(np.zeros(four_h)), freeze(np.zeros(four_h)))
        for layer in range(cfg.num_layers)
    )


def check_weights(cfg, weights):
    if len(weights) != cfg.num_layers:
        raise ValueError(f"expected {cfg.num_layers} layers of weights, got {len(weights)}")
    four_h = 4 * cfg.hidden_size
    for layer, lw in enumerate(weights):
        shapes = {
            "w_ih": (four_h, cfg.layer_input_size(layer)),
            "w_hh": (four_h, cfg.hidden_size),
            "b_ih": (four_h,),
            "b_hh": (four_h,),
        }
        for name, want in shapes.items():
            got = np.shape(getattr(lw, name))
            if got != want:
                raise ValueError(f"layer {layer} {name} has shape {got}, expected {want}")


def _maybe_quantize_weights(w, bits):
    # all-zero matrices have no Laplace scale and are exact already
    if weights_lossless(bits) or not np.any(w):
        return freeze(np.asarray(w, dtype=np.float64))
    return quantize_weights(w, bits)


def prepare_weights(cfg, weights, quantized=True):
    """Snap weight matrices once per run; biases stay full precision."""
    check_weights(cfg, weights)
    if not quantized:
        return tuple(weights)
    return tuple(
        LayerWeights(_maybe_quantize_weights(lw.w_ih, cfg.weight_bits),
                     _maybe_quantize_weights(lw.w_hh, cfg.weight_bits),
                     lw.b_ih, lw.b_hh)
        for lw in weights
    )


def _layer_step(cfg, lw, h_prev, c_prev, x, quantized):
    sig = {}
    conventional = quantized and cfg.placement == CONVENTIONAL
    if quantized:
        sym = QuantSpec.fixed(cfg.activation_bits, -1.0, 1.0)
        x = quantize(x, sym)
        h_in = quantize(h_prev, sym)
    else:
        h_in = h_prev
    sig["x_in"], sig["h_in"] = x, h_in
    pre = matvec(lw.w_ih, x) + lw.b_ih + matvec(lw.w_hh, h_in) + lw.b_hh
    hs = cfg.hidden_size
    i = sigmoid(pre[:hs])
    f = sigmoid(pre[hs:2 * hs])
    g = tanh(pre[2 * hs:3 * hs])
    o = sigmoid(pre[3 * hs:])
    if conventional:
        unit = QuantSpec.fixed(cfg.activation_bits, 0.0, 1.0)
        sym = QuantSpec.fixed(cfg.activation_bits, -1.0, 1.0)
        cell = QuantSpec.fixed(cfg.activation_bits, -cfg.cell_clip, cfg.cell_clip)
        i, f, o = quantize(i, unit), quantize(f, unit), quantize(o, unit)
        g = quantize(g, sym)
        c_prev = quantize(c_prev, cell)
    sig.update(i=i, f=f, g=g, o=o)
    c = elementwise_add(elementwise_mul(f, c_prev), elementwise_mul(i, g))
    c_used = quantize(c, cell) if conventional else c
    h = elementwise_mul(o, tanh(c_used))
    sig["c"], sig["h"] = c, h
    return h, c, sig


def step_signals(cfg, weights, state, x_t, quantized=True):
    """One time step through every layer; also returns per-layer signals.

    ``weights`` must already be prepared (see ``prepare_weights``) when
    ``quantized`` is true.
    """
    x = np.asarray(x_t, dtype=np.float64)
    if x.shape != (cfg.input_size,):
        raise ValueError(f"x_t has shape {x.shape}, expected ({cfg.input_size},)")
    want = (cfg.num_layers, cfg.hidden_size)
    if state.h.shape != want or state.c.shape != want:
        raise ValueError(f"state tensors must be {want}")
    x = np.clip(x, -1.0, 1.0)
    hs, cs, signals = [], [], []
    for layer, lw in enumerate(weights):
        h, c, sig = _layer_step(cfg, lw, state.h[layer], state.c[layer], x, quantized)
        hs.append(h)
        cs.append(c)
        signals.append(sig)
        x = h
    return LstmState(freeze(np.stack(hs)), freeze(np.stack(cs))), signals


def step(cfg, weights, state, x_t, quantized=True):
    """Advance one time step. Weights are quantized here if ``quantized``."""
    prepared = prepare_weights(cfg, weights, quantized)
    return step_signals(cfg, prepared, state, x_t, quantized)[0]


def run_sequence(cfg, weights, xs, initial=None, quantized=True):
    """Iterate ``step`` over ``xs``; returns ``(outputs, trace)``.

    ``outputs[t]`` is the top layer's ``h_t``; ``trace[t]`` the full state.
    """
    if len(xs) == 0:
        raise ValueError("sequence must be non-empty")
    prepared = prepare_weights(cfg, weights, quantized)
    state = LstmState.zeros(cfg) if initial is None else initial
    outputs, trace = [], []
    for x_t in xs:
        state, _ = step_signals(cfg, prepared, state, x_t, quantized)
        outputs.append(state.h[-1])
        trace.append(state)
    return outputs, trace


def random_sequence(cfg, length, seed=None):
    """Seeded uniform inputs in [-1, 1], independent of the weight stream."""
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng([seed, 2])
    return [freeze(v) for v in rng.uniform(-1.0, 1.0, size=(length, cfg.input_size))]
