"""Minimal hand-written SVG 1.1 figures: heatmaps and line plots."""
from __future__ import annotations

from html import escape

import numpy as np

_W, _H = 640, 400
_MARGIN = dict(left=60, right=90, top=36, bottom=48)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _colour(frac: float) -> str:
    # blue -> white -> red, with frac in [0, 1]
    frac = min(max(frac, 0.0), 1.0)
    if frac < 0.5:
        k = frac / 0.5
        r, g, b = 59 + k * (247 - 59), 76 + k * (247 - 76), 192 + k * (247 - 192)
    else:
        k = (frac - 0.5) / 0.5
        r, g, b = 247 + k * (180 - 247), 247 + k * (4 - 247), 247 + k * (38 - 247)
    return f"#{int(r):02x}{int(g):02x}{int(b):02x}"


class Figure:
    def __init__(self, width: int = _W, height: int = _H):
        self.width, self.height = width, height
        self.parts: list[str] = []

    def add(self, element: str) -> None:
        self.parts.append(element)

    def text(self, x, y, s, size=12, anchor="middle", rotate=None) -> None:
        tr = f' transform="rotate({rotate} {_fmt(x)} {_fmt(y)})"' if rotate is not None else ""
        self.add(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" font-family="sans-serif" '
            f'text-anchor="{anchor}"{tr}>{escape(str(s))}</text>'
        )

    def render(self) -> str:
        head = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}">\n'
            f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="white"/>\n'
        )
        return head + "\n".join(self.parts) + "\n</svg>\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.render())


class Axes:
    """Maps data coordinates into a rectangle of a :class:`Figure`."""

    def __init__(self, fig: Figure, x0, y0, w, h, xlim, ylim):
        self.fig, self.x0, self.y0, self.w, self.h = fig, x0, y0, w, h
        self.xlim, self.ylim = xlim, ylim

    def px(self, x):
        return self.x0 + (np.asarray(x) - self.xlim[0]) / (self.xlim[1] - self.xlim[0]) * self.w

    def py(self, y):
        return self.y0 + self.h - (np.asarray(y) - self.ylim[0]) / (self.ylim[1] - self.ylim[0]) * self.h

    def frame(self, xlabel="", ylabel="", title="", nticks=5):
        f = self.fig
        f.add(
            f'<rect x="{_fmt(self.x0)}" y="{_fmt(self.y0)}" width="{_fmt(self.w)}" height="{_fmt(self.h)}" '
            'fill="none" stroke="black" stroke-width="1"/>'
        )
        for v in np.linspace(*self.xlim, nticks):
            f.text(self.px(v), self.y0 + self.h + 16, _fmt(round(v, 3)), size=10)
        for v in np.linspace(*self.ylim, nticks):
            f.text(self.x0 - 6, self.py(v) + 3, _fmt(round(v, 3)), size=10, anchor="end")
        if xlabel:
            f.text(self.x0 + self.w / 2, self.y0 + self.h + 34, xlabel)
        if ylabel:
            f.text(self.x0 - 40, self.y0 + self.h / 2, ylabel, rotate=-90)
        if title:
            f.text(self.x0 + self.w / 2, self.y0 - 10, title, size=13)

    def line(self, x, y, colour="black", width=1.5, dash=None):
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(self.px(x), self.py(y)))
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.fig.add(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="{width}"{d}/>')

    def band(self, x, lo, hi, colour="#f4a582", opacity=0.5):
        xs = np.concatenate([x, x[::-1]])
        ys = np.concatenate([hi, lo[::-1]])
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(self.px(xs), self.py(ys)))
        self.fig.add(f'<polygon points="{pts}" fill="{colour}" fill-opacity="{opacity}" stroke="none"/>')

    def markers(self, x, y, colour="black", r=2.0):
        for a, b in zip(self.px(x), self.py(y)):
            self.fig.add(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="{r}" fill="{colour}"/>')


def heatmap(xs, ts, field, title: str, points=None) -> Figure:
    """Colour map of ``field`` (shape ``len(ts) x len(xs)``) with t horizontal, x vertical."""
    fig = Figure()
    m = _MARGIN
    ax = Axes(fig, m["left"], m["top"], _W - m["left"] - m["right"], _H - m["top"] - m["bottom"],
              (ts[0], ts[-1]), (xs[0], xs[-1]))
    lo, hi = float(np.min(field)), float(np.max(field))
    span = hi - lo if hi > lo else 1.0
    dt = ax.w / len(ts)
    dx = ax.h / len(xs)
    for j in range(len(ts)):
        for i in range(len(xs)):
            c = _colour((field[j, i] - lo) / span)
            fig.add(
                f'<rect x="{_fmt(ax.x0 + j * dt)}" y="{_fmt(ax.y0 + ax.h - (i + 1) * dx)}" '
                f'width="{_fmt(dt + 0.05)}" height="{_fmt(dx + 0.05)}" fill="{c}"/>'
            )
    if points is not None and len(points):
        ax.markers(points[:, 1], points[:, 0], colour="black", r=1.8)
    ax.frame("t", "x", title)
    # colour bar
    bx, bw = ax.x0 + ax.w + 20, 14
    for k in range(50):
        fig.add(
            f'<rect x="{_fmt(bx)}" y="{_fmt(ax.y0 + ax.h - (k + 1) * ax.h / 50)}" width="{bw}" '
            f'height="{_fmt(ax.h / 50 + 0.05)}" fill="{_colour((k + 0.5) / 50)}"/>'
        )
    fig.text(bx + bw + 4, ax.y0 + 8, _fmt(hi), size=10, anchor="start")
    fig.text(bx + bw + 4, ax.y0 + ax.h, _fmt(lo), size=10, anchor="start")
    return fig


def slice_panels(panels: list[dict], title_prefix: str = "") -> Figure:
    """Side-by-side slice plots.  Each panel dict holds x, mean, std, exact, title and optional points."""
    n = len(panels)
    width = 40 + n * 300
    fig = Figure(width=width, height=_H)
    for k, p in enumerate(panels):
        x = np.asarray(p["x"])
        curves = [p["exact"], p["mean"] - 2 * p["std"], p["mean"] + 2 * p["std"]]
        if p.get("points") is not None and len(p["points"]):
            curves.append(p["points"][:, 1])
        lo = min(float(np.min(c)) for c in curves)
        hi = max(float(np.max(c)) for c in curves)
        pad = 0.05 * (hi - lo if hi > lo else 1.0)
        ax = Axes(fig, 60 + k * 300, 36, 240, _H - 36 - 48, (x[0], x[-1]), (lo - pad, hi + pad))
        ax.band(x, p["mean"] - 2 * p["std"], p["mean"] + 2 * p["std"])
        ax.line(x, p["exact"], colour="#2166ac", width=1.5)
        ax.line(x, p["mean"], colour="#b2182b", width=1.5, dash="5,3")
        if p.get("points") is not None and len(p["points"]):
            ax.markers(p["points"][:, 0], p["points"][:, 1], colour="black", r=1.8)
        ax.frame("x", "u" if k == 0 else "", title_prefix + p["title"])
    return fig
