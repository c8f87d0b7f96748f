"""Accumulated quantization error: lockstep full-precision vs quantized runs.

The error at a position is ``1 - cos(a_fp, a_q)`` over the flattened tensor,
taken at each residual block's post-addition output or at each LSTM ``c_t``.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import spearmanr

from . import lstmcell, resblocks

CONVENTIONAL = "conventional"
HIGHWAY = "highway"
VARIANTS = (CONVENTIONAL, HIGHWAY)

METRIC = "1 - cosine_similarity(full_precision, quantized), flattened"


def cosine_error(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"cosine_error needs equal sizes, got {a.size} and {b.size}")
    za, zb = not np.any(a), not np.any(b)
    if za and zb:
        raise ValueError("cosine similarity is undefined for two zero tensors")
    if za or zb:
        return 1.0
    # rescale first so tiny or huge magnitudes cannot under/overflow the norms
    a = a / np.max(np.abs(a))
    b = b / np.max(np.abs(b))
    cos = float(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(min(max(1.0 - cos, 0.0), 2.0))


@dataclass(frozen=True)
class ErrorProfile:
    labels: tuple
    errors: tuple
    variant: str
    seed: int
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.labels) != len(self.errors):
            raise ValueError("labels and errors differ in length")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if any(not 0.0 <= e <= 2.0 for e in self.errors):
            raise ValueError("errors must lie in [0, 2]")

    def rank_correlation(self):
        """Spearman correlation between position and error."""
        return spearman(self.labels, self.errors)


def spearman(x, y):
    if len(x) < 2 or np.ptp(np.asarray(y, dtype=float)) == 0:
        return 0.0
    return float(spearmanr(x, y).statistic)


def _config_summary(cfg):
    d = cfg.to_dict()
    d.pop("style", None)
    d.pop("placement", None)
    return d


def residual_variant(cfg, variant):
    """Map a variant tag onto a block style, keeping a pre-activation highway."""
    if variant == CONVENTIONAL:
        return replace(cfg, style=resblocks.CONVENTIONAL_POSTACT)
    if variant == HIGHWAY:
        style = cfg.style if cfg.style != resblocks.CONVENTIONAL_POSTACT else resblocks.HIGHWAY_POSTACT
        return replace(cfg, style=style)
    raise ValueError(f"unknown variant {variant!r}")


def profile_residual(netcfg, x=None, variant=HIGHWAY, net=None):
    """Per-block error of one residual variant.

    ``x`` defaults to the seeded uniform input of ``netcfg``. Pass ``net`` to
    reuse existing kernels (e.g. loaded from disk); its style is overridden.
    """
    cfg = residual_variant(netcfg, variant)
    if net is None:
        net = resblocks.build_random_net(cfg)
    else:
        net = resblocks.with_style(net, cfg.style, highway_bits=cfg.highway_bits)
    if x is None:
        x = resblocks.random_input(cfg)
    taps_fp, taps_q = resblocks.run_pair(net, x)
    errors = tuple(cosine_error(a, b) for a, b in zip(taps_fp, taps_q))
    return ErrorProfile(tuple(range(1, len(errors) + 1)), errors, variant, cfg.seed,
                        _config_summary(cfg))


def profile_lstm(cfg, weights=None, x_seq=None, variant=HIGHWAY, length=50):
    """Per-step error on ``c_t`` for one LSTM placement."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    cfg = replace(cfg, placement=variant)
    if weights is None:
        weights = lstmcell.init_weights(cfg)
    if x_seq is None:
        x_seq = lstmcell.random_sequence(cfg, length)
    _, trace_fp = lstmcell.run_sequence(cfg, weights, x_seq, quantized=False)
    _, trace_q = lstmcell.run_sequence(cfg, weights, x_seq, quantized=True)
    errors = tuple(cosine_error(a.c, b.c) for a, b in zip(trace_fp, trace_q))
    return ErrorProfile(tuple(range(1, len(errors) + 1)), errors, variant, cfg.seed,
                        _config_summary(cfg))


@dataclass(frozen=True)
class ComparisonReport:
    """Seed-aggregated comparison of the two variants.

    ``gap`` is the per-position median over seeds of the paired difference
    ``conventional - highway``; ``widening`` is ``gap[-1] - gap[0]``.
    """

    labels: tuple
    seeds: tuple
    median: dict
    iqr: dict
    gap: tuple
    widening: float
    dominance: int  # seeds where highway <= conventional at every position
    rank_correlation: dict  # Spearman of the median series against position
    profiles: tuple = ()


def _config_key(p):
    d = dict(p.config)
    d.pop("seed", None)
    return tuple(sorted((k, repr(v)) for k, v in d.items()))


def compare(profiles):
    profiles = sorted(profiles, key=lambda p: (p.variant, p.seed))
    by_variant = {v: [p for p in profiles if p.variant == v] for v in VARIANTS}
    for v, ps in by_variant.items():
        if not ps:
            raise ValueError(f"no profiles for variant {v!r}")
    keys = {_config_key(p) for p in profiles}
    if len(keys) != 1:
        raise ValueError("profiles come from configs that differ beyond the variant tag")
    labels = {p.labels for p in profiles}
    if len(labels) != 1:
        raise ValueError("profiles are not aligned on the same positions")
    seeds = {v: [p.seed for p in ps] for v, ps in by_variant.items()}
    if seeds[CONVENTIONAL] != seeds[HIGHWAY] or len(set(seeds[HIGHWAY])) != len(seeds[HIGHWAY]):
        raise ValueError("both variants need the same, distinct seeds")

    arr = {v: np.array([p.errors for p in ps]) for v, ps in by_variant.items()}
    median = {v: tuple(float(m) for m in np.median(a, axis=0)) for v, a in arr.items()}
    iqr = {v: tuple(float(q) for q in np.subtract(*np.percentile(a, [75, 25], axis=0)))
           for v, a in arr.items()}
    diff = arr[CONVENTIONAL] - arr[HIGHWAY]
    gap = tuple(float(g) for g in np.median(diff, axis=0))
    (label_tuple,) = labels
    return ComparisonReport(
        labels=label_tuple,
        seeds=tuple(seeds[HIGHWAY]),
        median=median,
        iqr=iqr,
        gap=gap,
        widening=gap[-1] - gap[0],
        dominance=int(np.sum(np.all(arr[HIGHWAY] <= arr[CONVENTIONAL], axis=1))),
        rank_correlation={v: spearman(label_tuple, median[v]) for v in VARIANTS},
        profiles=tuple(profiles),
    )


def sweep_residual(netcfg, seeds, variants=VARIANTS):
    return [profile_residual(replace(netcfg, seed=s), variant=v)
            for v in variants for s in seeds]


def sweep_lstm(cfg, seeds, length=50, variants=VARIANTS):
    return [profile_lstm(replace(cfg, seed=s), variant=v, length=length)
            for v in variants for s in seeds]
