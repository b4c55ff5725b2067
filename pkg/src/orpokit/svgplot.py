"""Minimal deterministic SVG emission for line plots and histograms.

No plotting dependency: coordinates are formatted with fixed precision so
identical inputs always produce identical bytes. Output is plain SVG 1.1
that any browser or viewer can open.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

WIDTH = 720
HEIGHT = 440
MARGIN_L = 72
MARGIN_R = 160
MARGIN_T = 42
MARGIN_B = 52

PALETTE = ("#1b6ca8", "#d1495b", "#3e8914", "#8d5a97", "#c77d1e")


def _coord(x: float) -> str:
    return "%.3f" % x


def _label(x: float) -> str:
    return "%.6g" % x


def _span(lo: float, hi: float) -> tuple[float, float]:
    """Pad a data range; degenerate ranges get a unit of breathing room."""
    if hi > lo:
        pad = 0.05 * (hi - lo)
        return lo - pad, hi + pad
    pad = abs(lo) * 0.1 + 1.0
    return lo - pad, hi + pad


class _Canvas:
    def __init__(self, title: str, x_label: str, y_label: str,
                 x_range: tuple, y_range: tuple):
        self.parts = []
        self.x_lo, self.x_hi = _span(*x_range)
        self.y_lo, self.y_hi = _span(*y_range)
        self.parts.append(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">')
        self.parts.append(
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" '
            f'fill="#ffffff"/>')
        self.parts.append(
            f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{escape(title)}</text>')
        self._axes(x_label, y_label)

    def x_px(self, x: float) -> float:
        frac = (x - self.x_lo) / (self.x_hi - self.x_lo)
        return MARGIN_L + frac * (WIDTH - MARGIN_L - MARGIN_R)

    def y_px(self, y: float) -> float:
        frac = (y - self.y_lo) / (self.y_hi - self.y_lo)
        return HEIGHT - MARGIN_B - frac * (HEIGHT - MARGIN_T - MARGIN_B)

    def _axes(self, x_label: str, y_label: str):
        x0, x1 = MARGIN_L, WIDTH - MARGIN_R
        y0, y1 = HEIGHT - MARGIN_B, MARGIN_T
        self.parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" '
                          f'stroke="#333333" stroke-width="1"/>')
        self.parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" '
                          f'stroke="#333333" stroke-width="1"/>')
        for i in range(5):
            t = i / 4
            xv = self.x_lo + t * (self.x_hi - self.x_lo)
            yv = self.y_lo + t * (self.y_hi - self.y_lo)
            xp = self.x_px(xv)
            yp = self.y_px(yv)
            self.parts.append(
                f'<line x1="{_coord(xp)}" y1="{y0}" x2="{_coord(xp)}" '
                f'y2="{y0 + 5}" stroke="#333333" stroke-width="1"/>')
            self.parts.append(
                f'<text x="{_coord(xp)}" y="{y0 + 18}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="11">'
                f'{escape(_label(xv))}</text>')
            self.parts.append(
                f'<line x1="{x0 - 5}" y1="{_coord(yp)}" x2="{x0}" '
                f'y2="{_coord(yp)}" stroke="#333333" stroke-width="1"/>')
            self.parts.append(
                f'<text x="{x0 - 8}" y="{_coord(yp + 4)}" text-anchor="end" '
                f'font-family="sans-serif" font-size="11">'
                f'{escape(_label(yv))}</text>')
        self.parts.append(
            f'<text x="{(x0 + x1) // 2}" y="{HEIGHT - 12}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="13">'
            f'{escape(x_label)}</text>')
        self.parts.append(
            f'<text x="18" y="{(y0 + y1) // 2}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13" '
            f'transform="rotate(-90 18 {(y0 + y1) // 2})">'
            f'{escape(y_label)}</text>')

    def polyline(self, xs, ys, color: str):
        if len(xs) == 1:
            self.parts.append(
                f'<circle cx="{_coord(self.x_px(xs[0]))}" '
                f'cy="{_coord(self.y_px(ys[0]))}" r="3.5" fill="{color}"/>')
            return
        pts = " ".join(f"{_coord(self.x_px(x))},{_coord(self.y_px(y))}"
                       for x, y in zip(xs, ys))
        self.parts.append(f'<polyline points="{pts}" fill="none" '
                          f'stroke="{color}" stroke-width="1.5"/>')

    def legend(self, names):
        lx = WIDTH - MARGIN_R + 12
        for i, name in enumerate(names):
            ly = MARGIN_T + 16 + i * 18
            color = PALETTE[i % len(PALETTE)]
            self.parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" '
                              f'y2="{ly - 4}" stroke="{color}" '
                              f'stroke-width="2"/>')
            self.parts.append(
                f'<text x="{lx + 24}" y="{ly}" font-family="sans-serif" '
                f'font-size="12">{escape(name)}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def line_plot(path, title: str, x_label: str, y_label: str,
              series: list) -> None:
    """series: list of (name, xs, ys). One point degrades to a dot."""
    if not series:
        raise ValueError("no series to plot")
    all_x = [x for _, xs, _ in series for x in xs]
    all_y = [y for _, _, ys in series for y in ys]
    if not all_x:
        raise ValueError("empty series")
    canvas = _Canvas(title, x_label, y_label,
                     (min(all_x), max(all_x)), (min(all_y), max(all_y)))
    for i, (_, xs, ys) in enumerate(series):
        canvas.polyline(xs, ys, PALETTE[i % len(PALETTE)])
    canvas.legend([name for name, _, _ in series])
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(canvas.render())


def histogram_plot(path, title: str, x_label: str, series: list) -> None:
    """series: list of (name, bin_edges, counts) drawn as step outlines."""
    if not series:
        raise ValueError("no series to plot")
    all_x = [e for _, edges, _ in series for e in edges]
    all_c = [c for _, _, counts in series for c in counts]
    canvas = _Canvas(title, x_label, "count",
                     (min(all_x), max(all_x)), (0.0, float(max(all_c))))
    for i, (_, edges, counts) in enumerate(series):
        xs = [edges[0]]
        ys = [0.0]
        for j, c in enumerate(counts):
            xs.extend((edges[j], edges[j + 1]))
            ys.extend((float(c), float(c)))
        xs.append(edges[-1])
        ys.append(0.0)
        canvas.polyline(xs, ys, PALETTE[i % len(PALETTE)])
    canvas.legend([name for name, _, _ in series])
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(canvas.render())
