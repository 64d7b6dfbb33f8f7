"""SVG station maps: nodes in light grey, built stations in black, the city centroid as a grey square.

Stations are drawn at the centroid of their neighbourhood nodes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from .instance import TripNetwork
from .master import Station

WIDTH, HEIGHT, MARGIN = 640, 480, 24


def render_map(net: TripNetwork, stations: Sequence[Station], pairs: Sequence[float] | None = None, title: str = "") -> str:
    pairs = [1.0] * len(stations) if pairs is None else list(pairs)
    built = [s for s, z in zip(stations, pairs) if z > 0.5]
    px, py = float(net.x.mean()), float(net.y.mean())

    x0, x1 = float(net.x.min()), float(net.x.max())
    y0, y1 = float(net.y.min()), float(net.y.max())
    span = max(x1 - x0, y1 - y0, 1e-9)
    scale = min(WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN) / span

    def to_svg(x, y):
        return MARGIN + (x - x0) * scale, HEIGHT - MARGIN - (y - y0) * scale

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f"<title>{_escape(title or 'stations')}</title>",
        '<rect x="0" y="0" width="100%" height="100%" fill="white"/>',
        '<g id="nodes" fill="lightgray" stroke="lightgray">',
    ]
    for n in range(net.n_nodes):
        sx, sy = to_svg(float(net.x[n]), float(net.y[n]))
        lines.append(f'<circle class="node" cx="{sx:.2f}" cy="{sy:.2f}" r="4"/>')
    lines.append("</g>")
    lines.append('<g id="stations" fill="black">')
    for st in built:
        cx, cy = st.centroid(net)
        sx, sy = to_svg(cx, cy)
        lines.append(f'<circle class="station" cx="{sx:.2f}" cy="{sy:.2f}" r="3"/>')
    lines.append("</g>")
    sx, sy = to_svg(px, py)
    lines.append(f'<rect class="centroid" x="{sx - 5:.2f}" y="{sy - 5:.2f}" width="10" height="10" fill="gray"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_map(path: str | Path, net: TripNetwork, stations: Sequence[Station], pairs=None, title: str = "") -> Path:
    path = Path(path)
    path.write_text(render_map(net, stations, pairs, title), encoding="utf-8")
    return path


def count_markers(svg: str) -> dict[str, int]:
    return {k: svg.count(f'class="{k}"') for k in ("node", "station", "centroid")}
