"""Static report artifacts: a seven-panel metric SVG, colored skeleton SVGs and Markdown tables.

The SVG is written by hand so the geometry is deterministic and diffable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .errors import ConfigError, InsufficientSamples, MissingInput
from .metrics import METRICS
from .synth import rest_pose

LOG_METRICS = ("ros", "rrs")
LABELS = {"pgi": "PGI (↑)", "pgu": "PGU (↓)", "risp": "RISp (↓)", "risv": "RISv (↓)",
          "risb": "RISb (↓)", "ros": "ROS (↓)", "rrs": "RRS (↓)"}
METHOD_COLORS = {"cam": "#1f77b4", "gradcam": "#d62728", "random": "#7f7f7f"}
METHOD_DASH = {"cam": "", "gradcam": "6,3", "random": "2,2"}


@dataclass(frozen=True)
class ColorRule:
    """green < 0.3t <= yellow < 0.6t <= orange < t <= red, with t = threshold * scale."""

    threshold: float = 0.3
    scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.threshold * self.scale <= 1:
            raise ConfigError("threshold * scale must lie in (0, 1]")

    @property
    def t(self) -> float:
        return self.threshold * self.scale

    def bounds(self) -> tuple:
        return (0.3 * self.t, 0.6 * self.t, self.t)

    def color(self, score: float) -> str:
        lo, mid, hi = self.bounds()
        if score < lo:
            return "green"
        if score < mid:
            return "yellow"
        if score < hi:
            return "orange"
        return "red"


def _p_label(p) -> str:
    if p is None:
        return "CAM vs Grad-CAM: n/a"
    return f"CAM vs Grad-CAM p = {p:.3g}"


def metric_panels_svg(curves: dict, pvalues: dict, metrics=METRICS) -> str:
    """``curves[metric][method]`` is a list of (k, value); ``pvalues[metric]`` a float or None."""
    pw, ph, gap, margin = 260, 200, 40, 50
    cols = 4
    rows = math.ceil(len(metrics) / cols)
    width = cols * pw + (cols - 1) * gap + 2 * margin
    height = rows * (ph + 70) + 2 * margin + 30
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    methods = sorted({m for c in curves.values() for m in c}, key=lambda m: (m not in METHOD_COLORS, m))
    for i, method in enumerate(methods):
        x = margin + i * 110
        out.append(f'<line x1="{x}" y1="20" x2="{x + 24}" y2="20" stroke="{METHOD_COLORS.get(method, "black")}" '
                   f'stroke-width="2" stroke-dasharray="{METHOD_DASH.get(method, "")}"/>')
        out.append(f'<text x="{x + 30}" y="24">{escape(method)}</text>')
    for idx, metric in enumerate(metrics):
        r, c = divmod(idx, cols)
        x0 = margin + c * (pw + gap)
        y0 = margin + 20 + r * (ph + 70)
        log = metric in LOG_METRICS
        series = curves.get(metric, {})
        values = [v for pts in series.values() for _, v in pts]
        ks = [k for pts in series.values() for k, _ in pts]
        out.append(f'<g class="panel" data-metric="{metric}" data-scale="{"log" if log else "linear"}">')
        out.append(f'<rect x="{x0}" y="{y0}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
        out.append(f'<text x="{x0 + pw / 2}" y="{y0 - 8}" text-anchor="middle" font-weight="bold">'
                   f'{escape(LABELS.get(metric, metric))}{" (log)" if log else ""}</text>')
        p = pvalues.get(metric)
        out.append(f'<text class="pvalue" x="{x0 + pw / 2}" y="{y0 + ph + 34}" text-anchor="middle">'
                   f'{escape(_p_label(p))}</text>')
        if values:
            kmin, kmax = min(ks), max(ks)
            if log:
                pos = [v for v in values if v > 0] or [1.0]
                lo, hi = math.log10(min(pos)), math.log10(max(pos))
            else:
                lo, hi = min(values), max(values)
            if hi <= lo:
                lo, hi = lo - 0.5, hi + 0.5

            def sx(k):
                return x0 + (0.5 if kmax == kmin else (k - kmin) / (kmax - kmin)) * pw

            def sy(v):
                val = math.log10(max(v, 10 ** lo)) if log else v
                return y0 + ph - (val - lo) / (hi - lo) * ph

            for frac in (0.0, 0.5, 1.0):
                val = lo + frac * (hi - lo)
                label = f"1e{val:.1f}" if log else f"{val:.3g}"
                yy = y0 + ph - frac * ph
                out.append(f'<text x="{x0 - 4}" y="{yy + 4:.2f}" text-anchor="end" font-size="9">{label}</text>')
            out.append(f'<text x="{x0}" y="{y0 + ph + 14}" font-size="9">k={kmin}</text>')
            out.append(f'<text x="{x0 + pw}" y="{y0 + ph + 14}" font-size="9" text-anchor="end">k={kmax}</text>')
            for method in methods:
                pts = sorted(series.get(method, []))
                if not pts:
                    continue
                path = " ".join(f"{sx(k):.2f},{sy(v):.2f}" for k, v in pts)
                out.append(f'<polyline class="line" data-method="{method}" points="{path}" fill="none" '
                           f'stroke="{METHOD_COLORS.get(method, "black")}" stroke-width="1.5" '
                           f'stroke-dasharray="{METHOD_DASH.get(method, "")}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def skeleton_svg(scores, reg, rule: ColorRule = ColorRule(), title: str = "") -> str:
    """Rest-pose skeleton with every joint filled by its attribution color."""
    pose = rest_pose(reg)
    lo = pose.min(axis=0) - 30
    span = pose.max(axis=0) + 30 - lo
    width, height = 240, int(240 * span[1] / span[0]) + 30
    scale = 240 / span[0]
    pts = (pose - lo) * scale + np.array([0, 24])
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2}" y="14" text-anchor="middle">{escape(title)}</text>']
    for p, c in reg.bones:
        out.append(f'<line x1="{pts[p, 0]:.2f}" y1="{pts[p, 1]:.2f}" x2="{pts[c, 0]:.2f}" y2="{pts[c, 1]:.2f}" '
                   f'stroke="#444" stroke-width="2"/>')
    for v, name in enumerate(reg.names):
        s = float(scores[v])
        out.append(f'<circle class="joint" data-joint="{escape(name)}" data-score="{s:.6f}" '
                   f'cx="{pts[v, 0]:.2f}" cy="{pts[v, 1]:.2f}" r="6" fill="{rule.color(s)}" stroke="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _table(header, rows) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(str(x) for x in row) + " |" for row in rows]
    return "\n".join(lines)


def tables_markdown(aggregates: list, ttests: list, config_hash: str) -> str:
    """Aggregate tables (method rows, metric columns) and t-test tables, one pair per scope."""
    parts = [f"<!-- config_hash={config_hash} -->", "# Metric summary", "",
             "AUC over k is the trapezoid area divided by the k span; entries are mean ± std (ddof 1) over windows.", ""]
    scopes = sorted({a["scope"] for a in aggregates})
    for scope in scopes:
        rows_here = [a for a in aggregates if a["scope"] == scope]
        methods = sorted({a["method"] for a in rows_here})
        cell = {(a["method"], a["metric"]): f'{float(a["auc_mean"]):.4g} ± {float(a["auc_std"]):.3g}' for a in rows_here}
        parts += [f"## Aggregates: {scope}", "",
                  _table(["method"] + [LABELS[m] for m in METRICS],
                         [[m] + [cell.get((m, x), "") for x in METRICS] for m in methods]), ""]
        tt = [t for t in ttests if t["scope"] == scope]
        if tt:
            comps = sorted({t["comparison"] for t in tt})
            val = {(t["comparison"], t["metric"]): f't={float(t["t_statistic"]):.3g}, p={float(t["p_value"]):.3g}' for t in tt}
            parts += [f"## Welch t-tests: {scope}", "",
                      _table(["comparison"] + [LABELS[m] for m in METRICS],
                             [[c] + [val.get((c, x), "") for x in METRICS] for c in comps]), ""]
    return "\n".join(parts) + "\n"


def write_report(cfg) -> Path:
    from .harness import auc_samples, cmd_ttest, read_csv, read_json
    from .stats import unpaired_ttest

    res = cfg.results_path
    if not (res / "metrics.csv").exists():
        raise MissingInput(f"{res / 'metrics.csv'} not found; run evaluate first")
    out = cfg.report_path
    out.mkdir(parents=True, exist_ok=True)
    reg = cfg.registry()
    records = read_csv(res / "metrics.csv")
    aggregates = read_csv(res / "aggregate.csv")
    samples = auc_samples(cfg)
    try:
        ttests = read_csv(res / "ttest.csv") if (res / "ttest.csv").exists() else read_csv(cmd_ttest(cfg))
    except InsufficientSamples:  # fewer than two methods: no t-tests to show
        ttests = []
    scope = "ensemble" if any(r["scope"] == "ensemble" for r in records) else min(r["scope"] for r in records)

    sums = {}
    for r in records:
        if r["scope"] == scope:
            key = (r["metric"], r["method"], int(r["k"]))
            s = sums.setdefault(key, [0.0, 0])
            s[0] += float(r["value"])
            s[1] += 1
    curves = {}
    for (metric, method, k), (total, n) in sorted(sums.items()):
        curves.setdefault(metric, {}).setdefault(method, []).append((k, total / n))
    pvalues = {}
    for metric in METRICS:
        a = samples.get((scope, metric, "cam"))
        b = samples.get((scope, metric, "gradcam"))
        pvalues[metric] = None
        if a and b and len(a) >= 2 and len(b) >= 2:
            pvalues[metric] = unpaired_ttest(a, b).p_value
    metrics_present = [m for m in METRICS if m in curves] or list(METRICS)
    (out / "metrics.svg").write_text(metric_panels_svg(curves, pvalues, metrics_present))

    rule = ColorRule()
    maps = read_json(res / "attributions.json")["scores"].get(scope, {})
    for wid in sorted(maps)[: cfg.report_windows]:
        for method, scores in sorted(maps[wid].items()):
            name = f"skeleton_{wid.replace('/', '_').replace('@', '_')}_{method}.svg"
            (out / name).write_text(skeleton_svg(scores, reg, rule, f"{wid} {method}"))
    (out / "tables.md").write_text(tables_markdown(aggregates, ttests, cfg.hash()))
    return out
