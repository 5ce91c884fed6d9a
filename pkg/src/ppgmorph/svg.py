"""Tiny SVG line/scatter plotting; no plotting library needed."""

from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b")


def _fmt(v):
    return f"{v:.2f}"


def _nice_range(lo, hi):
    if not np.isfinite(lo) or not np.isfinite(hi):
        return 0.0, 1.0
    if hi == lo:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


@dataclass
class Panel:
    """One set of axes: lines, point sets, markers and text."""

    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    lines: list = field(default_factory=list)  # (x, y, color, label)
    points: list = field(default_factory=list)  # (x, y, color, label)
    markers: list = field(default_factory=list)  # (x, y, label)
    notes: list = field(default_factory=list)
    xlim: tuple | None = None
    ylim: tuple | None = None

    def line(self, x, y, color=None, label=""):
        self.lines.append((np.asarray(x, float), np.asarray(y, float),
                           color or PALETTE[len(self.lines) % len(PALETTE)], label))
        return self

    def scatter(self, x, y, color=None, label=""):
        self.points.append((np.asarray(x, float), np.asarray(y, float), color or PALETTE[0], label))
        return self

    def marker(self, x, y, label):
        self.markers.append((float(x), float(y), label))
        return self

    def note(self, text):
        self.notes.append(text)
        return self

    def _limits(self):
        xs = [a for a, *_ in self.lines + self.points] + [np.array([m[0] for m in self.markers])]
        ys = [b for _, b, *_ in self.lines + self.points] + [np.array([m[1] for m in self.markers])]
        xs = np.concatenate([x for x in xs if x.size]) if any(x.size for x in xs) else np.array([0, 1.0])
        ys = np.concatenate([y for y in ys if y.size]) if any(y.size for y in ys) else np.array([0, 1.0])
        xl = self.xlim or (float(np.nanmin(xs)), float(np.nanmax(xs)))
        yl = self.ylim or _nice_range(float(np.nanmin(ys)), float(np.nanmax(ys)))
        if xl[0] == xl[1]:
            xl = _nice_range(*xl)
        return xl, yl

    def render(self, x0, y0, w, h):
        (xa, xb), (ya, yb) = self._limits()
        left, right, top, bottom = 60, 15, 22, 38
        pw, ph = w - left - right, h - top - bottom

        def X(v):
            return x0 + left + (np.asarray(v) - xa) / (xb - xa) * pw

        def Y(v):
            return y0 + top + (1 - (np.asarray(v) - ya) / (yb - ya)) * ph

        out = [f'<g class="panel">',
               f'<rect x="{_fmt(x0 + left)}" y="{_fmt(y0 + top)}" width="{_fmt(pw)}" height="{_fmt(ph)}" '
               f'fill="none" stroke="#444" stroke-width="0.8"/>']
        if self.title:
            out.append(f'<text x="{_fmt(x0 + left)}" y="{_fmt(y0 + 15)}" font-size="12" '
                       f'font-weight="bold">{escape(self.title)}</text>')
        for frac in (0.0, 0.5, 1.0):
            xv = xa + frac * (xb - xa)
            yv = ya + frac * (yb - ya)
            out.append(f'<text x="{_fmt(X(xv))}" y="{_fmt(y0 + top + ph + 14)}" font-size="9" '
                       f'text-anchor="middle">{xv:.3g}</text>')
            out.append(f'<text x="{_fmt(x0 + left - 4)}" y="{_fmt(Y(yv) + 3)}" font-size="9" '
                       f'text-anchor="end">{yv:.3g}</text>')
        if self.xlabel:
            out.append(f'<text x="{_fmt(x0 + left + pw / 2)}" y="{_fmt(y0 + h - 6)}" font-size="10" '
                       f'text-anchor="middle">{escape(self.xlabel)}</text>')
        if self.ylabel:
            cx, cy = x0 + 12, y0 + top + ph / 2
            out.append(f'<text x="{_fmt(cx)}" y="{_fmt(cy)}" font-size="10" text-anchor="middle" '
                       f'transform="rotate(-90 {_fmt(cx)} {_fmt(cy)})">{escape(self.ylabel)}</text>')
        for x, y, color, label in self.lines:
            ok = np.isfinite(x) & np.isfinite(y)
            pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(X(x[ok]), Y(y[ok])))
            out.append(f'<polyline class="series" data-label="{escape(label)}" points="{pts}" '
                       f'fill="none" stroke="{color}" stroke-width="1.2"/>')
        for x, y, color, label in self.points:
            for a, b in zip(X(x), Y(y)):
                out.append(f'<circle class="point" cx="{_fmt(a)}" cy="{_fmt(b)}" r="2" fill="{color}" '
                           f'fill-opacity="0.6"/>')
        for x, y, label in self.markers:
            out.append(f'<g class="marker" data-label="{escape(label)}">'
                       f'<circle cx="{_fmt(X(x))}" cy="{_fmt(Y(y))}" r="3.5" fill="none" stroke="#000"/>'
                       f'<text x="{_fmt(X(x) + 5)}" y="{_fmt(Y(y) - 5)}" font-size="10">{escape(label)}</text></g>')
        legend = [(c, l) for _, _, c, l in self.lines + self.points if l]
        for i, (c, l) in enumerate(legend):
            ly = y0 + top + 12 + 12 * i
            lx = x0 + left + pw - 110
            out.append(f'<line x1="{_fmt(lx)}" y1="{_fmt(ly - 3)}" x2="{_fmt(lx + 14)}" y2="{_fmt(ly - 3)}" '
                       f'stroke="{c}" stroke-width="2"/>'
                       f'<text x="{_fmt(lx + 18)}" y="{_fmt(ly)}" font-size="9">{escape(l)}</text>')
        for i, t in enumerate(self.notes):
            out.append(f'<text class="note" x="{_fmt(x0 + left + 6)}" y="{_fmt(y0 + top + 14 + 12 * i)}" '
                       f'font-size="10">{escape(t)}</text>')
        out.append("</g>")
        return "\n".join(out)


def figure(panels, width=640, panel_height=170, ncols=1):
    """SVG document with ``panels`` laid out on a grid, row by row."""
    nrows = -(-len(panels) // ncols)
    pw = width / ncols
    height = nrows * panel_height
    body = [p.render((i % ncols) * pw, (i // ncols) * panel_height, pw, panel_height)
            for i, p in enumerate(panels)]
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{int(height)}" '
            f'viewBox="0 0 {width} {int(height)}">\n<rect width="100%" height="100%" fill="white"/>\n'
            + "\n".join(body) + "\n</svg>\n")


def save(path, svg_text):
    with open(path, "w") as fh:
        fh.write(svg_text)


# -- the three report figures ---------------------------------------------------


def derivative_figure(stack, fid, labels=("O", "S", "N", "D")):
    """Five stacked panels (PPG, VPG, APG, JPG, SPG) with fiducial markers."""
    t = np.arange(len(stack.ppg)) / stack.fs
    rows = [("PPG", stack.ppg, labels), ("VPG", stack.vpg, ("u", "v", "w")),
            ("APG", stack.apg, ("a", "b", "c", "d", "e")), ("JPG", stack.jpg, ()), ("SPG", stack.spg, ())]
    panels = []
    for i, (name, y, marks) in enumerate(rows):
        p = Panel(title=name, xlabel="time (s)" if i == len(rows) - 1 else "").line(t, y, "#1f77b4")
        for m in marks:
            k = fid.idx(m)
            if k is not None:
                p.marker(t[k], y[k], m)
        panels.append(p)
    return figure(panels, panel_height=150)


def curves_figure(epochs, series: dict, title=""):
    """One panel per metric; ``series`` maps metric -> {label: values}."""
    panels = []
    for metric, lines in series.items():
        p = Panel(title=f"{title} {metric}".strip(), xlabel="epoch", ylabel=metric)
        for label, y in lines.items():
            p.line(epochs, y, label=label)
        panels.append(p)
    return figure(panels, panel_height=200)


def scatter_figure(true_age, pred_age, mae_value, title="predicted vs true age"):
    t = np.asarray(true_age, float)
    p = np.asarray(pred_age, float)
    lo = float(min(t.min(), p.min()))
    hi = float(max(t.max(), p.max()))
    panel = Panel(title=title, xlabel="true age (years)", ylabel="predicted age (years)",
                  xlim=(lo, hi), ylim=(lo, hi))
    panel.scatter(t, p)
    panel.line([lo, hi], [lo, hi], "#888888", label="y = x")
    panel.note(f"MAE = {mae_value:.2f} years")
    return figure([panel], width=420, panel_height=420)
