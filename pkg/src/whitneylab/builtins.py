"""Built-in systems and the deliberately broken fixtures used by the tests.

Coordinates are our own choices (the figures they imitate give none); the
validator is what certifies them.
"""

from __future__ import annotations

import math

import numpy as np

from .config import SystemConfig, from_system
from .geometry import Similitude
from .systems import CondensationComponent, LinearCondensationSystem

THIRD = 1.0 / 3.0
# chain order: bottom-left, bottom-right, top-left, top-right
WHITNEY_OFFSETS = ((0.02, 0.02), (0.63, 0.02), (0.02, 0.63), (0.63, 0.63))
RHOMBUS_HALF_WIDTH = 0.02
# short connectors get thinner rhombi, else their tips meet neighbours almost tangentially
RHOMBUS_MAX_ASPECT = 0.2


def _segment(p, q, label):
    return CondensationComponent("segment", (tuple(p), tuple(q)), tuple(p), tuple(q), label)


def _rhombus(p, q, label, half_width=RHOMBUS_HALF_WIDTH):
    p, q = np.asarray(p, float), np.asarray(q, float)
    mid = (p + q) / 2
    length = float(np.linalg.norm(q - p))
    u = (q - p) / length
    n = np.array([-u[1], u[0]]) * min(half_width, RHOMBUS_MAX_ASPECT * length)
    verts = (tuple(p), tuple(mid + n), tuple(q), tuple(mid - n))
    return CondensationComponent("polygon", verts, tuple(p), tuple(q), label)


def chained_squares(offsets, ratios, connector=_segment, name="", a=(0.0, 0.0), b=(1.0, 1.0)):
    """Homotheties placing squares along a chain a -> Q_1 -> ... -> Q_N -> b,
    consecutive squares joined by connectors from phi_i(b) to phi_{i+1}(a)."""
    maps = [Similitude(r, t) for r, t in zip(ratios, offsets)]
    stops = [np.array(a)]
    for m in maps:
        stops += [m(np.array(a)), m(np.array(b))]
    stops.append(np.array(b))
    comps = [connector(stops[2 * j], stops[2 * j + 1], j + 1) for j in range(len(maps) + 1)]
    zipper = []
    for i in range(len(maps)):
        zipper += [f"C{i + 1}", f"M{i + 1}"]
    zipper.append(f"C{len(maps) + 1}")
    return LinearCondensationSystem(tuple(comps), tuple(maps), a, b, tuple(zipper), name=name)


def whitney_1935_system():
    return chained_squares(WHITNEY_OFFSETS, [THIRD] * 4, name="whitney-1935")


def whitney_rhombus_system():
    return chained_squares(WHITNEY_OFFSETS, [THIRD] * 4, connector=_rhombus, name="whitney-rhombus")


def diag_toy_system(c2=((0.5, 0.5), (0.6, 0.6)), name="diag-toy"):
    comps = (_segment((0.0, 0.0), (0.1, 0.1), 1), _segment(c2[0], c2[1], 2))
    maps = (Similitude(0.4, (0.1, 0.1)), Similitude(0.4, (0.6, 0.6)))
    return LinearCondensationSystem(comps, maps, (0.0, 0.0), (1.0, 1.0), ("C1", "M1", "C2", "M2"), name=name)


def koch_arc():
    from .arclift import SelfSimilarArcIFS

    h = math.sqrt(3) / 6
    maps = (
        Similitude(THIRD, (0.0, 0.0)),
        Similitude(THIRD, (THIRD, 0.0), math.pi / 3),
        Similitude(THIRD, (0.5, h), -math.pi / 3),
        Similitude(THIRD, (2 * THIRD, 0.0)),
    )
    return SelfSimilarArcIFS(maps, (0.0, 0.0), (1.0, 0.0), (False,) * 4, "koch")


def tent_arc(height=0.25, reverse_second=False, name=None):
    """Two-map Koch-type arc through (1/2, height); optionally the second map runs backwards.

    Both versions have the same attractor, which is symmetric under x -> 1 - x.
    """
    from .arclift import SelfSimilarArcIFS

    apex = complex(0.5, height)
    r = abs(apex)
    theta = math.atan2(height, 0.5)
    first = Similitude(r, (0.0, 0.0), theta, True)  # z -> apex * conj(z)
    if reverse_second:
        # z -> 1 + (apex - 1) z : a rotation taking 0 -> 1 and 1 -> apex
        w = apex - 1
        second = Similitude(abs(w), (1.0, 0.0), math.atan2(w.imag, w.real))
    else:
        # z -> apex + (1 - apex) conj(z)
        w = 1 - apex
        second = Similitude(abs(w), (apex.real, apex.imag), math.atan2(w.imag, w.real), True)
    label = name or ("tent-reversed" if reverse_second else "tent")
    return SelfSimilarArcIFS((first, second), (0.0, 0.0), (1.0, 0.0), (False, reverse_second), label)


def segment_arc():
    """[0, 1] x {0} as two halves: similarity dimension exactly 1."""
    from .arclift import SelfSimilarArcIFS

    maps = (Similitude(0.5, (0.0, 0.0)), Similitude(0.5, (0.5, 0.0)))
    return SelfSimilarArcIFS(maps, (0.0, 0.0), (1.0, 0.0), (False, False), "segment")


# broken fixtures ------------------------------------------------------------

def broken_chain_system():
    """C2 starts at (0.52, 0.52) instead of phi_1(b) = (0.5, 0.5)."""
    return diag_toy_system(((0.52, 0.52), (0.6, 0.6)), name="diag-toy-broken-chain")


def detached_system():
    """C2 translated by (0.3, -0.3): it touches neither neighbour."""
    return diag_toy_system(((0.8, 0.2), (0.9, 0.3)), name="diag-toy-detached")


def overlapping_squares_system():
    """Squares 1 and 3 enlarged so that phi_1(K) meets phi_3(K); the chain itself stays intact."""
    offsets = ((0.02, 0.02), (0.63, 0.02), (0.02, 0.40), (0.63, 0.63))
    return chained_squares(offsets, [0.45, THIRD, 0.45, THIRD], name="whitney-overlap")


_FACTORIES = {
    "whitney-1935": whitney_1935_system,
    "whitney-rhombus": whitney_rhombus_system,
    "diag-toy": diag_toy_system,
    "koch": koch_arc,
    "tent": tent_arc,
    "tent-reversed": lambda: tent_arc(reverse_second=True),
    "segment": segment_arc,
    "diag-toy-broken-chain": broken_chain_system,
    "diag-toy-detached": detached_system,
    "whitney-overlap": overlapping_squares_system,
}
BUILTINS = tuple(_FACTORIES)
FIXTURES = ("diag-toy-broken-chain", "diag-toy-detached", "whitney-overlap")


def system(name: str):
    return _FACTORIES[name]()


def get(name: str) -> SystemConfig:
    return from_system(system(name))
