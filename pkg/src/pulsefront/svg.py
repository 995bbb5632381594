"""Tiny SVG line/scatter plots with deterministic output."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

W, H, PAD = 480, 360, 50
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


def _n(v):
    return f"{v:.2f}"


class Axes:
    def __init__(self, xs, ys, title, xlabel, ylabel):
        xs = [x for x in xs if math.isfinite(x)] or [0.0, 1.0]
        ys = [y for y in ys if math.isfinite(y)] or [0.0, 1.0]
        self.x0, self.x1 = min(xs), max(xs)
        self.y0, self.y1 = min(ys), max(ys)
        if self.x1 == self.x0:
            self.x0, self.x1 = self.x0 - 1, self.x1 + 1
        if self.y1 == self.y0:
            self.y0, self.y1 = self.y0 - 1, self.y1 + 1
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<rect x="{PAD}" y="{PAD // 2}" width="{W - 1.5 * PAD}" height="{H - 1.5 * PAD}" fill="none" stroke="black"/>',
            f'<text x="{W / 2}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>',
            f'<text x="{W / 2}" y="{H - 6}" text-anchor="middle" font-size="11">{escape(xlabel)}</text>',
            f'<text x="12" y="{H / 2}" font-size="11" transform="rotate(-90 12 {H / 2})" text-anchor="middle">{escape(ylabel)}</text>',
        ]
        for v, pos in ((self.x0, PAD), (self.x1, W - PAD / 2)):
            self.parts.append(f'<text x="{_n(pos)}" y="{H - PAD + 14}" font-size="9" text-anchor="middle">{v:.4g}</text>')
        for v, pos in ((self.y0, H - PAD), (self.y1, PAD / 2)):
            self.parts.append(f'<text x="{PAD - 4}" y="{_n(pos + 3)}" font-size="9" text-anchor="end">{v:.4g}</text>')

    def px(self, x, y):
        u = PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 1.5 * PAD)
        v = H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 1.5 * PAD)
        return u, v

    def line(self, xs, ys, color, dash=False):
        pts = [self.px(x, y) for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
        if len(pts) < 2:
            return
        d = "M" + " L".join(f"{_n(u)},{_n(v)}" for u, v in pts)
        extra = ' stroke-dasharray="4,3"' if dash else ""
        self.parts.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1.2"{extra}/>')

    def dot(self, x, y, color, r=3, marker="circle"):
        if not (math.isfinite(x) and math.isfinite(y)):
            return
        u, v = self.px(x, y)
        if marker == "circle":
            self.parts.append(f'<circle cx="{_n(u)}" cy="{_n(v)}" r="{r}" fill="{color}"/>')
        else:
            self.parts.append(f'<rect x="{_n(u - r)}" y="{_n(v - r)}" width="{2 * r}" height="{2 * r}" '
                              f'fill="none" stroke="{color}"/>')

    def label(self, x, y, text, color="black"):
        u, v = self.px(x, y)
        self.parts.append(f'<text x="{_n(u + 4)}" y="{_n(v - 4)}" font-size="8" fill="{color}">{escape(text)}</text>')

    def save(self, path):
        with open(path, "w") as fh:
            fh.write("\n".join(self.parts + ["</svg>"]) + "\n")


def speed_vs_inverse_k(path, records):
    ok = [r for r in records if r["status"] == "ok"]
    ax = Axes([1 / r["k"] for r in ok] + [0.0], [r["c"] for r in ok] + [0.0],
              "measured speed against 1/k", "1/k", "c_k")
    groups = sorted({(r["d"], r["alpha"], r["seed"]) for r in ok})
    for i, g in enumerate(groups):
        mine = [r for r in ok if (r["d"], r["alpha"], r["seed"]) == g]
        col = PALETTE[i % len(PALETTE)]
        ax.line([1 / r["k"] for r in mine], [r["c"] for r in mine], col)
        for r in mine:
            ax.dot(1 / r["k"], r["c"], col)
    ax.save(path)


def phase_diagram(path, preds):
    """Predicted (square) and measured (dot) signs over (d, alpha) with r_lo / r_hi curves."""
    ds = [p["d"] for p in preds]
    al = [p["alpha"] for p in preds]
    ax = Axes(ds, al, "sign of the limit speed", "d", "alpha")
    colors = {1: "#1f77b4", -1: "#d62728", 0: "#7f7f7f", None: "#cccccc"}
    r_lo, r_hi = preds[0]["r_lo"], preds[0]["r_hi"]
    grid = [min(ds) + (max(ds) - min(ds)) * i / 100 for i in range(101)]
    ax.line(grid, [math.sqrt(d * r_lo) for d in grid], "black", dash=True)
    ax.line(grid, [math.sqrt(d * r_hi) for d in grid], "black", dash=True)
    for p in preds:
        ax.dot(p["d"], p["alpha"], colors.get(p["predicted_sign"], "#cccccc"), r=6, marker="square")
        ms = p.get("measured_sign_s0")
        ax.dot(p["d"], p["alpha"], colors.get(ms, "#cccccc"), r=3)
    ax.save(path)


def xi_traces(path, records):
    traces = [r for r in records if r.get("_xi_trace")]
    if not traces:
        ax = Axes([0, 1], [0, 1], "free boundary (no moving runs)", "t", "Xi")
        ax.save(path)
        return
    ts = [t for r in traces for t in r["_xi_trace"][0]]
    xs = [x - r["_xi_trace"][1][0] for r in traces for x in r["_xi_trace"][1]]
    ax = Axes(ts, xs, "free boundary position (shifted to start at 0)", "t", "Xi(t) - Xi(t0)")
    for i, r in enumerate(traces):
        t, x = r["_xi_trace"]
        ax.line(t, [v - x[0] for v in x], PALETTE[i % len(PALETTE)])
    ax.save(path)
