"""Operation counts by precision class and a parametric energy/area model.

Energy units are picojoules and area units are mm^2, but the defaults are an
order-of-magnitude model of a row-stationary accelerator, not silicon data.
Default relative costs follow the usual normalized hierarchy of such designs:
a 16-bit MAC with its register-file operand traffic is ~4x a bare 0.5 pJ
multiply-add, a global-buffer access ~6x and a DRAM access ~200x the bare op.
"""

import json
import math
from dataclasses import asdict, dataclass, fields

from .lstmcell import CONVENTIONAL, HIGHWAY

REFERENCE_BITS = 16
HIGH_PRECISION_BITS = 32
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class OpCounts:
    low_precision_mac: int = 0
    high_precision_add: int = 0
    nonlinear_op: int = 0
    elementwise_mul: int = 0

    def __add__(self, other):
        return OpCounts(*(a + b for a, b in zip(astuple(self), astuple(other))))

    def scale(self, n):
        return OpCounts(*(a * n for a in astuple(self)))


def astuple(c):
    return (c.low_precision_mac, c.high_precision_add, c.nonlinear_op, c.elementwise_mul)


@dataclass(frozen=True)
class CostParams:
    """Model constants; every value must be positive.

    ``mac_energy_pj`` is a 16x16-bit MAC. A ``ka x kw`` MAC costs
    ``mac_energy_pj * (ka*kw/256) ** mac_exponent``. High-precision side ops
    are priced at 32 bits and scale linearly with their actual width.
    ``onchip_bytes`` is the buffer size at 16-bit precision; the buffer is
    resized proportionally to precision, so it always holds the same number
    of elements.
    """

    mac_energy_pj: float = 2.0
    mac_exponent: float = 0.5
    add_energy_pj: float = 0.1
    nonlinear_energy_pj: float = 1.0
    sram_energy_per_bit_pj: float = 0.2
    dram_energy_per_bit_pj: float = 6.0
    pe_area_mm2: float = 0.05
    num_pes: int = 168
    sram_area_mm2_per_kb: float = 0.005
    onchip_bytes: int = 2 * 1024 * 1024

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0 or not math.isfinite(v):
                raise ValueError(f"cost parameter {f.name} must be positive, got {v!r}")

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown cost parameter keys: {sorted(unknown)}")
        return cls(**d)

    def mac_energy(self, ka, kw):
        return self.mac_energy_pj * (ka * kw / REFERENCE_BITS ** 2) ** self.mac_exponent

    @property
    def capacity_elements(self):
        return self.onchip_bytes * 8 // REFERENCE_BITS


@dataclass(frozen=True)
class TensorTraffic:
    """Element counts of tensors moved through memory for one inference unit.

    ``activation`` tensors live at the activation precision, ``highway``
    tensors at the highway precision, ``weight_elements`` at weight precision.
    """

    activation: tuple = ()
    highway: tuple = ()
    weight_elements: int = 0


@dataclass(frozen=True)
class CostReport:
    counts: OpCounts
    compute_energy_pj: float
    onchip_energy_pj: float
    offchip_energy_pj: float
    area_mm2: float
    highway_overhead: float
    bits: dict

    @property
    def total_energy_pj(self):
        return self.compute_energy_pj + self.onchip_energy_pj + self.offchip_energy_pj

    def to_dict(self):
        d = asdict(self)
        d["total_energy_pj"] = self.total_energy_pj
        d["schema_version"] = SCHEMA_VERSION
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def count_lstm_ops(input_size, hidden_size, placement=HIGHWAY):
    """Per layer, per time step.

    Four gate matrix-vector products make the MACs. The side ops are the cell
    addition, four gate nonlinearities plus ``tanh(c)``, and three
    elementwise products; they are high precision under the highway
    placement and counted the same way under the conventional one.
    """
    if input_size < 1 or hidden_size < 1:
        raise ValueError("sizes must be >= 1")
    if placement not in (CONVENTIONAL, HIGHWAY):
        raise ValueError(f"unknown placement {placement!r}")
    return OpCounts(
        low_precision_mac=4 * (input_size + hidden_size) * hidden_size,
        high_precision_add=hidden_size,
        nonlinear_op=5 * hidden_size,
        elementwise_mul=3 * hidden_size,
    )


def count_resnet_ops(netcfg):
    """Exact conv MACs, one skip add and one activation per block output,
    and one activation between consecutive convs."""
    plane = netcfg.channels * netcfg.spatial ** 2
    per_block = OpCounts(
        low_precision_mac=sum(s.macs(netcfg.spatial, netcfg.spatial) for s in netcfg.conv_specs()),
        high_precision_add=plane,
        nonlinear_op=netcfg.convs_per_block * plane,
    )
    return per_block.scale(netcfg.num_blocks)


def resnet_traffic(netcfg):
    plane = netcfg.channels * netcfg.spatial ** 2
    specs = netcfg.conv_specs()
    per_block_act = (plane,) * (len(specs) - 1)
    weights = sum(s.out_channels * s.in_channels * s.kernel_size ** 2 for s in specs)
    return TensorTraffic(
        activation=per_block_act * netcfg.num_blocks,
        highway=(plane,) * netcfg.num_blocks,
        weight_elements=weights * netcfg.num_blocks,
    )


def lstm_traffic(input_size, hidden_size, num_layers=1):
    """Per time step: ``h`` and ``c`` of every layer ride the highway."""
    weights = 0
    for layer in range(num_layers):
        n_in = input_size if layer == 0 else hidden_size
        weights += 4 * (n_in + hidden_size) * hidden_size
    return TensorTraffic(
        activation=(input_size,),
        highway=(hidden_size, hidden_size) * num_layers,
        weight_elements=weights,
    )


def _side_width(highway_bits):
    return HIGH_PRECISION_BITS if highway_bits is None else highway_bits


def _energy(counts, ka, kw, highway_bits, params, traffic):
    hw = _side_width(highway_bits)
    scale = hw / HIGH_PRECISION_BITS
    compute = (counts.low_precision_mac * params.mac_energy(ka, kw)
               + counts.high_precision_add * params.add_energy_pj * scale
               + counts.nonlinear_op * params.nonlinear_energy_pj * scale
               + counts.elementwise_mul * params.mac_energy(hw, hw))
    cap = params.capacity_elements
    onchip = offchip = 0.0
    for elems, bits in [(e, ka) for e in traffic.activation] + [(e, hw) for e in traffic.highway]:
        # written once and read once
        onchip += 2 * elems * bits * params.sram_energy_per_bit_pj
        if elems > cap:
            offchip += 2 * elems * bits * params.dram_energy_per_bit_pj
    wbits = traffic.weight_elements * kw
    onchip += wbits * params.sram_energy_per_bit_pj
    if traffic.weight_elements > cap:
        offchip += wbits * params.dram_energy_per_bit_pj
    return compute, onchip, offchip


def _check_bits(name, v):
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ValueError(f"{name} must be a positive integer, got {v!r}")


def estimate_cost(counts, ka, kw, highway_bits=None, params=None, traffic=None):
    """Energy and area for ``counts`` at the given precisions.

    ``highway_bits=None`` is a full-precision (32-bit) highway. The overhead
    is measured against the same workload with the highway at ``ka`` bits.
    """
    params = CostParams() if params is None else params
    traffic = TensorTraffic() if traffic is None else traffic
    _check_bits("ka", ka)
    _check_bits("kw", kw)
    if highway_bits is not None:
        _check_bits("highway_bits", highway_bits)
        if highway_bits < ka:
            raise ValueError(f"highway_bits ({highway_bits}) below activation bits ({ka})")
    compute, onchip, offchip = _energy(counts, ka, kw, highway_bits, params, traffic)
    base = sum(_energy(counts, ka, kw, ka, params, traffic))
    total = compute + onchip + offchip
    overhead = (total - base) / base if base > 0 else 0.0
    area = (params.num_pes * params.pe_area_mm2 * (ka * kw / REFERENCE_BITS ** 2) ** params.mac_exponent
            + params.sram_area_mm2_per_kb * params.onchip_bytes / 1024 * ka / REFERENCE_BITS)
    return CostReport(
        counts=counts,
        compute_energy_pj=compute,
        onchip_energy_pj=onchip,
        offchip_energy_pj=offchip,
        area_mm2=area,
        highway_overhead=overhead,
        bits={"activation": ka, "weight": kw,
              "highway": "full" if highway_bits is None else highway_bits},
    )


def reduction(high, low):
    """Fractional drop from ``high`` to ``low``."""
    return (high - low) / high
