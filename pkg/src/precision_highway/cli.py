"""Command-line entry point.

Config files are YAML (JSON is accepted too) with optional top-level
sections ``resnet``, ``lstm`` and ``cost`` whose keys are the fields of
``ResidualNetConfig``, ``LstmConfig`` and ``CostParams``. Bit-widths may be
written as ``full``. Other top-level keys: ``sequence_length`` (LSTM steps),
``input`` (container holding a tensor ``x``) and ``weights`` (container with
a saved network).
"""

import argparse
import concurrent.futures
import os
import sys
from dataclasses import replace

import numpy as np
import yaml

from . import __version__, _backend, costmodel, erroranalysis, lstmcell, modelio, report, resblocks
from .quant import MAX_LAPLACE_BITS, solve_laplace_levels

TOP_KEYS = {"resnet", "lstm", "cost", "sequence_length", "input", "weights"}
BIT_KEYS = {"activation_bits", "weight_bits", "highway_bits"}


class UsageError(Exception):
    pass


def _parse_bits(v):
    if v is None or (isinstance(v, str) and v.lower() == "full"):
        return None
    if isinstance(v, bool):
        raise UsageError(f"invalid bit-width {v!r}")
    try:
        n = int(v)
    except (TypeError, ValueError):
        raise UsageError(f"invalid bit-width {v!r}") from None
    if n < 1 or str(n) != str(v).strip():
        raise UsageError(f"invalid bit-width {v!r}")
    return n


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"config {path} is not valid YAML: {exc}") from None
    data = data or {}
    if not isinstance(data, dict):
        raise UsageError("config must be a mapping")
    unknown = set(data) - TOP_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    base = os.path.dirname(os.path.abspath(path))
    for key in ("input", "weights"):
        if key in data:
            data[key] = os.path.join(base, data[key])
            if not os.path.isfile(data[key]):
                raise UsageError(f"{key} file not found: {data[key]}")
    return data


def _section(raw, name, cls):
    sec = dict(raw.get(name) or {})
    for k in BIT_KEYS & set(sec):
        sec[k] = _parse_bits(sec[k])
    try:
        return cls.from_dict(sec)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"[{name}] {exc}") from None


def resnet_config(raw):
    cfg = _section(raw, "resnet", resblocks.ResidualNetConfig)
    if cfg.num_blocks < 1:
        raise UsageError("[resnet] num_blocks must be >= 1 for a forward run")
    return cfg


def lstm_config(raw):
    cfg = _section(raw, "lstm", lstmcell.LstmConfig)
    if cfg.activation_bits is None:
        raise UsageError("[lstm] activation_bits cannot be full")
    return cfg


def cost_params(raw, params_path=None):
    sec = dict(raw.get("cost") or {})
    if params_path:
        sec.update(load_config_section(params_path))
    try:
        return costmodel.CostParams.from_dict(sec)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"[cost] {exc}") from None


def load_config_section(path):
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise UsageError(f"cannot read params {path}: {exc.strerror}") from None
    if not isinstance(data, dict):
        raise UsageError("params file must be a mapping")
    return data.get("cost", data)


def parse_seeds(text):
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            seeds.extend(range(int(a), int(b) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise UsageError("empty seed list")
    if len(set(seeds)) != len(seeds):
        raise UsageError("duplicate seeds")
    return sorted(seeds)


def _metadata(command, raw, seeds, extra=None):
    meta = {
        "schema_version": report.SCHEMA_VERSION,
        "toolkit": "precision_highway",
        "version": __version__,
        "backend": _backend.name,
        "command": command,
        "config": raw,
        "seeds": seeds,
        "error_metric": erroranalysis.METRIC,
    }
    meta.update(extra or {})
    return meta


def _write(out, name, text):
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, name)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return path


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# --- workers (module level so they pickle) -----------------------------------


def _load_input(path, shape):
    _, tensors = modelio.load(path)
    if "x" not in tensors:
        raise UsageError(f"input container {path} has no tensor 'x'")
    x = tensors["x"]
    if x.shape != shape:
        raise UsageError(f"input tensor shape {x.shape} != {shape}")
    return x


def _resnet_job(args):
    cfg, variant, seed, input_path, weights_path = args
    cfg = replace(cfg, seed=seed)
    net = None
    if weights_path:
        net = modelio.load(weights_path)
        if not isinstance(net, resblocks.ResidualNet):
            raise UsageError(f"{weights_path} does not hold a residual net")
        net = resblocks.assemble(replace(net.config, **{k: getattr(cfg, k) for k in (
            "activation_bits", "weight_bits", "style", "highway_bits", "quantize_first_last", "seed")}),
            net.weights)
        cfg = net.config
    x = _load_input(input_path, cfg.input_shape) if input_path else None
    return erroranalysis.profile_residual(cfg, x, variant, net=net)


def _lstm_job(args):
    cfg, variant, seed, length, weights_path = args
    cfg = replace(cfg, seed=seed)
    weights = None
    if weights_path:
        loaded_cfg, weights = modelio.load(weights_path)
        cfg = replace(cfg, input_size=loaded_cfg.input_size, hidden_size=loaded_cfg.hidden_size,
                      num_layers=loaded_cfg.num_layers)
    return erroranalysis.profile_lstm(cfg, weights, None, variant, length=length)


# --- commands ----------------------------------------------------------------


def cmd_levels(args):
    single = args.bits is not None
    bits = [args.bits] if single else list(range(1, MAX_LAPLACE_BITS + 1))
    for k in bits:
        if not 1 <= k <= MAX_LAPLACE_BITS:
            raise UsageError(f"--bits must be in [1, {MAX_LAPLACE_BITS}]")
    lines = []
    for k in bits:
        lv = solve_laplace_levels(k)
        lines.append(f"k={k} spacing={lv.spacing:.4f} l2_error={lv.l2_error:.6f}")
        if single:
            lines.append("levels (units of mean |w|): "
                         + " ".join(f"{v:+.4f}" for v in lv.levels()))
    print("\n".join(lines))
    return 0


def _emit_profiles(args, name, raw, seeds, profiles, xlabel, extra=None):
    rep = erroranalysis.compare(profiles)
    out = args.out
    written = []
    if args.csv:
        written.append(_write(out, f"{name}.csv", report.profiles_csv(profiles)))
    if args.json:
        written.append(_write(out, f"{name}.json", report.to_json(report.comparison_dict(rep))))
    if args.svg:
        series = {v: (list(rep.labels), list(rep.median[v])) for v in erroranalysis.VARIANTS}
        written.append(_write(out, f"{name}.svg", report.line_chart_svg(
            series, title=f"median {erroranalysis.METRIC.split(',')[0]}", xlabel=xlabel)))
    written.append(_write(out, "metadata.json", report.to_json(_metadata(name, raw, seeds, extra))))
    for path in written:
        print(path)
    return rep


def cmd_profile_resnet(args):
    raw = load_config(args.config)
    cfg = resnet_config(raw)
    seeds = parse_seeds(args.seeds)
    jobs = [(cfg, v, s, raw.get("input"), raw.get("weights"))
            for v in erroranalysis.VARIANTS for s in seeds]
    profiles = _map(_resnet_job, jobs, args.jobs)
    _emit_profiles(args, "profile_resnet", raw, seeds, profiles, "residual block")
    return 0


def cmd_profile_lstm(args):
    raw = load_config(args.config)
    cfg = lstm_config(raw)
    seeds = parse_seeds(args.seeds)
    length = int(args.steps or raw.get("sequence_length", 50))
    if length < 1:
        raise UsageError("sequence length must be >= 1")
    jobs = [(cfg, v, s, length, raw.get("weights")) for v in erroranalysis.VARIANTS for s in seeds]
    profiles = _map(_lstm_job, jobs, args.jobs)
    _emit_profiles(args, "profile_lstm", raw, seeds, profiles, "time step",
                   {"sequence_length": length})
    return 0


def cmd_sweep_highway(args):
    raw = load_config(args.config)
    cfg = resnet_config(raw)
    if cfg.style == resblocks.CONVENTIONAL_POSTACT:
        cfg = replace(cfg, style=resblocks.HIGHWAY_POSTACT)
    seeds = parse_seeds(args.seeds)
    bits = [_parse_bits(b) for b in args.bits.split(",")]
    jobs = [(replace(cfg, highway_bits=b), erroranalysis.HIGHWAY, s, raw.get("input"), raw.get("weights"))
            for b in bits for s in seeds]
    profiles = _map(_resnet_job, jobs, args.jobs)
    rows, summary = [], []
    for i, b in enumerate(bits):
        chunk = profiles[i * len(seeds):(i + 1) * len(seeds)]
        finals = [p.errors[-1] for p in chunk]
        label = "full" if b is None else b
        rows.extend((label, p.seed, p.errors[-1]) for p in chunk)
        summary.append({"highway_bits": label, "mean_final_error": float(np.mean(finals)),
                        "median_final_error": float(np.median(finals))})
    written = []
    if args.csv:
        written.append(_write(args.out, "sweep_highway.csv",
                              report.rows_csv(("highway_bits", "seed", "error"), rows)))
    if args.json:
        written.append(_write(args.out, "sweep_highway.json",
                              report.to_json({"schema_version": report.SCHEMA_VERSION, "settings": summary})))
    if args.svg:
        xs = list(range(len(bits)))
        written.append(_write(args.out, "sweep_highway.svg", report.line_chart_svg(
            {"highway": (xs, [s["mean_final_error"] for s in summary])},
            title="final-block error vs highway precision (" + ", ".join(str(s["highway_bits"]) for s in summary) + ")",
            xlabel="setting index")))
    written.append(_write(args.out, "metadata.json", report.to_json(
        _metadata("sweep_highway", raw, seeds, {"highway_bits": ["full" if b is None else b for b in bits]}))))
    for line in summary:
        print(f"highway_bits={line['highway_bits']} mean_final_error={line['mean_final_error']:.6g} "
              f"median_final_error={line['median_final_error']:.6g}")
    for path in written:
        print(path)
    return 0


def _model_counts(raw, model):
    if model == "lstm":
        cfg = lstm_config(raw)
        counts = costmodel.count_lstm_ops(cfg.input_size, cfg.hidden_size, cfg.placement)
        traffic = costmodel.lstm_traffic(cfg.input_size, cfg.hidden_size, cfg.num_layers)
        if cfg.num_layers > 1:
            counts = sum((costmodel.count_lstm_ops(cfg.layer_input_size(i), cfg.hidden_size, cfg.placement)
                          for i in range(cfg.num_layers)), costmodel.OpCounts())
        unit = "per time step, all layers"
        return cfg, counts, traffic, unit
    cfg = _section(raw, "resnet", resblocks.ResidualNetConfig)
    return cfg, costmodel.count_resnet_ops(cfg), costmodel.resnet_traffic(cfg), "per inference"


def _pick_model(raw, model):
    if model:
        return model
    if "lstm" in raw and "resnet" not in raw:
        return "lstm"
    return "resnet"


def cmd_count(args):
    raw = load_config(args.config)
    model = _pick_model(raw, args.model)
    cfg, counts, _, unit = _model_counts(raw, model)
    doc = {"schema_version": report.SCHEMA_VERSION, "model": model, "unit": unit,
           "config": cfg.to_dict(), "counts": costmodel.asdict(counts)}
    text = report.to_json(doc)
    if args.out:
        print(_write(args.out, "counts.json", text))
        _write(args.out, "metadata.json", report.to_json(_metadata("count", raw, [])))
    else:
        sys.stdout.write(text)
    return 0


def cmd_cost(args):
    raw = load_config(args.config)
    model = _pick_model(raw, args.model)
    params = cost_params(raw, args.params)
    cfg, counts, traffic, unit = _model_counts(raw, model)
    ka = cfg.activation_bits
    kw = cfg.weight_bits if cfg.weight_bits is not None else 32
    hb = getattr(cfg, "highway_bits", None) if model == "resnet" else None
    if model == "lstm" and cfg.placement == lstmcell.CONVENTIONAL:
        hb = ka
    try:
        rep = costmodel.estimate_cost(counts, ka, kw, hb, params, traffic)
        ref = costmodel.estimate_cost(counts, 16, 16, 16, params, traffic)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    doc = rep.to_dict()
    doc.update({
        "model": model,
        "unit": unit,
        "params": costmodel.asdict(params),
        "reference_16bit": {
            "total_energy_pj": ref.total_energy_pj,
            "area_mm2": ref.area_mm2,
            "energy_reduction": costmodel.reduction(ref.total_energy_pj, rep.total_energy_pj),
            "area_reduction": costmodel.reduction(ref.area_mm2, rep.area_mm2),
        },
    })
    text = report.to_json(doc)
    if args.out:
        print(_write(args.out, "cost.json", text))
        _write(args.out, "metadata.json", report.to_json(_metadata("cost", raw, [])))
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="precision-highway", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("levels", help="Laplace weight-quantizer spacing and level table")
    s.add_argument("--bits", type=int, help="bit-width (default: table for 1..8)")
    s.set_defaults(fn=cmd_levels)

    def emitting(s, default_seeds="0"):
        s.add_argument("--config", help="YAML config file")
        s.add_argument("--seeds", default=default_seeds, help="e.g. 0-9 or 0,3,5")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
        for flag in ("csv", "json", "svg"):
            s.add_argument(f"--{flag}", action=argparse.BooleanOptionalAction, default=True)

    s = sub.add_parser("profile-resnet", help="per-block error, conventional vs highway")
    emitting(s)
    s.set_defaults(fn=cmd_profile_resnet)

    s = sub.add_parser("profile-lstm", help="per-step cell-state error for both placements")
    emitting(s)
    s.add_argument("--steps", type=int, help="sequence length (default 50)")
    s.set_defaults(fn=cmd_profile_lstm)

    s = sub.add_parser("sweep-highway", help="final-block error vs highway precision")
    emitting(s)
    s.add_argument("--bits", default="full,8,6", help="comma list, e.g. full,8,6")
    s.set_defaults(fn=cmd_sweep_highway)

    for name, fn, helptext in (("count", cmd_count, "operation counts as JSON"),
                               ("cost", cmd_cost, "energy/area report as JSON")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", help="YAML config file")
        s.add_argument("--model", choices=("resnet", "lstm"))
        s.add_argument("--out", help="write JSON into this directory instead of stdout")
        if name == "cost":
            s.add_argument("--params", help="YAML file of CostParams overrides")
        s.set_defaults(fn=fn)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (UsageError, modelio.ContainerError, ValueError) as exc:
        print(f"precision-highway: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"precision-highway: error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
