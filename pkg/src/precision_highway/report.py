"""CSV, JSON and SVG emitters for analysis results. Output is byte-stable."""

import csv
import io
import json

SCHEMA_VERSION = 1
CSV_HEADER = ("variant", "seed", "position", "error")

_COLORS = {"conventional": "#d62728", "highway": "#1f77b4"}


def profiles_csv(profiles):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for p in sorted(profiles, key=lambda p: (p.variant, p.seed)):
        for pos, err in zip(p.labels, p.errors):
            w.writerow((p.variant, p.seed, pos, repr(float(err))))
    return buf.getvalue()


def rows_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def to_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def comparison_dict(report):
    return {
        "schema_version": SCHEMA_VERSION,
        "labels": list(report.labels),
        "seeds": list(report.seeds),
        "median": {k: list(v) for k, v in report.median.items()},
        "iqr": {k: list(v) for k, v in report.iqr.items()},
        "gap": list(report.gap),
        "widening": report.widening,
        "dominance": report.dominance,
        "rank_correlation": report.rank_correlation,
    }


def line_chart_svg(series, title="", xlabel="position", ylabel="error", width=640, height=400):
    """Minimal polyline chart. ``series`` maps a name to ``(xs, ys)``."""
    pad = 50
    xs_all = [x for xs, _ in series.values() for x in xs]
    ys_all = [y for _, ys in series.values() for y in ys]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = 0.0, max(ys_all) if ys_all and max(ys_all) > 0 else 1.0
    if x1 == x0:
        x1 = x0 + 1

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="14" y="{height / 2:.1f}" font-size="12" '
        f'transform="rotate(-90 14 {height / 2:.1f})" text-anchor="middle">{ylabel}</text>',
        f'<text x="{pad - 4}" y="{py(y1) + 4:.1f}" text-anchor="end" font-size="10">{y1:.3g}</text>',
        f'<text x="{pad - 4}" y="{py(y0) + 4:.1f}" text-anchor="end" font-size="10">0</text>',
    ]
    for i, (name, (xs, ys)) in enumerate(sorted(series.items())):
        color = _COLORS.get(name, ["#2ca02c", "#9467bd", "#8c564b", "#e377c2"][i % 4])
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        out.append(f'<text x="{width - pad - 4}" y="{pad + 14 * (i + 1)}" text-anchor="end" '
                   f'font-size="12" fill="{color}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
