"""Deterministic SVG 1.1 drawings of level-k attractor approximations."""

from __future__ import annotations

from dataclasses import dataclass
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .errors import UnsupportedDimensionError
from .systems import DEFAULT_PIECE_CAP, approximate_attractor, approximate_inner_attractor

COLOR_BY = ("kind", "level", "piece")
PALETTE = ("#1b6ca8", "#d1495b", "#edae49", "#00798c", "#66a182", "#8d5a97", "#30638e", "#e07a5f")
KIND_COLORS = {"condensation": "#1b3a57", "cylinder": "#7fa7c9"}


@dataclass(frozen=True)
class RenderSpec:
    level: int = 3
    size: int = 800  # pixels along the longer side
    color_by: str = "kind"
    stroke_width: float = 1.0  # pixels
    fill_cylinders: bool = True
    fill_opacity: float = 0.35
    precision: int = 6

    def __post_init__(self):
        if self.color_by not in COLOR_BY:
            raise ValueError(f"color_by must be one of {COLOR_BY}")
        if self.level < 0:
            raise ValueError("level must be >= 0")
        if self.size <= 0:
            raise ValueError("size must be positive")


def _pieces(sys, level: int, cap: int):
    from .arclift import SelfSimilarArcIFS

    if isinstance(sys, SelfSimilarArcIFS):
        ps = approximate_inner_attractor(sys.maps, level, 1.0, cap, with_points=False)
    else:
        ps = approximate_attractor(sys, level, 1.0, cap, with_points=False)
    shapes = {}
    if not isinstance(sys, SelfSimilarArcIFS):
        shapes = {c.label: c.shape for c in sys.components}
    order = sorted(ps.pieces, key=lambda p: (tuple(p.word), p.component or 0, p.kind))
    return order, ps.region, shapes


def _color(piece, spec: RenderSpec) -> str:
    if spec.color_by == "kind":
        return KIND_COLORS[piece.kind]
    if spec.color_by == "level":
        return PALETTE[len(piece.word) % len(PALETTE)]
    key = piece.component if piece.kind == "condensation" else (piece.word[0] if piece.word else 0)
    return PALETTE[(key or 0) % len(PALETTE)]


def render_svg(sys, spec: RenderSpec | None = None, cap: int = DEFAULT_PIECE_CAP) -> str:
    """One <g> per level-k piece, ordered by word then component; y axis points up."""
    spec = spec or RenderSpec()
    if sys.dim != 2:
        raise UnsupportedDimensionError(f"rendering needs dimension 2, got {sys.dim}")
    pieces, region, shapes = _pieces(sys, spec.level, cap)
    lo, hi = np.array(region.lo, float), np.array(region.hi, float)
    width, height = hi - lo
    scale = spec.size / max(width, height)
    stroke = spec.stroke_width / scale
    p = spec.precision

    def num(x: float) -> str:
        s = f"{x:.{p}f}".rstrip("0").rstrip(".")
        return "0" if s in ("-0", "") else s

    def pts(g: np.ndarray) -> str:
        return " ".join(f"{num(x)},{num(-y)}" for x, y in g)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{num(width * scale)}" '
        f'height="{num(height * scale)}" viewBox="{num(lo[0])} {num(-hi[1])} {num(width)} {num(height)}">',
        f"<title>{escape(sys.name)} level {spec.level}</title>",
    ]
    for n, piece in enumerate(pieces):
        color = _color(piece, spec)
        word = ".".join(str(i) for i in piece.word) or "e"
        attrs = f'id="p{n}" class="{piece.kind}" data-word={quoteattr(word)}'
        if piece.component is not None:
            attrs += f' data-component="{piece.component}"'
        g = np.asarray(piece.geometry, float)
        if piece.kind == "cylinder":
            fill = f'fill="{color}" fill-opacity="{num(spec.fill_opacity)}"' if spec.fill_cylinders else 'fill="none"'
            body = f'<polygon points="{pts(g)}" {fill} stroke="{color}" stroke-width="{num(stroke)}"/>'
        elif shapes.get(piece.component) == "polygon":
            body = f'<polygon points="{pts(g)}" fill="{color}" stroke="{color}" stroke-width="{num(stroke)}"/>'
        else:
            body = (f'<polyline points="{pts(g)}" fill="none" stroke="{color}" '
                    f'stroke-width="{num(stroke)}" stroke-linecap="round"/>')
        out.append(f"<g {attrs}>{body}</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def count_elements(svg: str) -> int:
    """Number of piece groups in a document produced by render_svg."""
    return svg.count("<g ")
