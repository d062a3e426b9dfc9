"""Self-similar arcs and their level-k lift to a linear IFS with condensation.

Cutting an arc gamma into its n^k level-k subarcs in chain order, the first
and last subarcs become condensation components and the n^k - 2 interior
compositions become the maps.  The lifted system has the same attractor
(up to the polyline approximation of the two end pieces) and, for k large
enough, an interior system of similarity dimension above 1.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .dimension import moran_value, similarity_dimension
from .errors import ConfigError, DegenerateError, LevelTooSmallError, NotFoundError
from .geometry import compose_word, word_ratio
from .systems import ENDPOINT_TOL, CondensationComponent, LinearCondensationSystem, cloud_distance

DEFAULT_REFINE = 3


@dataclass(frozen=True, eq=False)
class SelfSimilarArcIFS:
    """Maps S_1..S_n whose images, in index order, chain from a to b.

    ``reversed_maps[i]`` says that S_{i+1}(gamma) is traversed from S(b) to S(a).
    """

    maps: tuple
    a: tuple
    b: tuple
    reversed_maps: tuple = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "maps", tuple(self.maps))
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        object.__setattr__(self, "b", tuple(float(x) for x in self.b))
        rev = tuple(bool(r) for r in self.reversed_maps) or (False,) * len(self.maps)
        object.__setattr__(self, "reversed_maps", rev)
        errors = []
        if len(self.maps) < 2:
            errors.append(f"an arc IFS needs at least 2 maps, got {len(self.maps)}")
        if len(rev) != len(self.maps):
            errors.append(f"{len(rev)} orientation flags for {len(self.maps)} maps")
        if any(m.ratio >= 1.0 for m in self.maps):
            errors.append("all maps must be contractive")
        if self.maps and {m.dim for m in self.maps} != {len(self.a)}:
            errors.append("endpoints and maps disagree on the dimension")
        if errors:
            raise ConfigError(errors)
        errors = self.chaining_errors()
        if errors:
            raise ConfigError(errors)

    @property
    def n(self) -> int:
        return len(self.maps)

    @property
    def dim(self) -> int:
        return len(self.a)

    @property
    def ratios(self) -> list[float]:
        return [m.ratio for m in self.maps]

    @property
    def diameter_scale(self) -> float:
        return float(np.linalg.norm(np.subtract(self.b, self.a)))

    def dimension(self) -> float:
        return similarity_dimension(self.ratios)

    def image_endpoints(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Chain-ordered endpoints of S_i(gamma), i 1-based."""
        m = self.maps[i - 1]
        pa, pb = m(np.array(self.a)), m(np.array(self.b))
        return (pb, pa) if self.reversed_maps[i - 1] else (pa, pb)

    def chaining_errors(self) -> list[str]:
        tol = ENDPOINT_TOL * max(1.0, self.diameter_scale)
        errors = []
        prev = np.array(self.a)
        for i in range(1, self.n + 1):
            start, end = self.image_endpoints(i)
            if np.linalg.norm(start - prev) > tol:
                what = "a" if i == 1 else f"the end of image {i - 1}"
                errors.append(f"image {i} starts at {start.tolist()}, not at {what} {prev.tolist()}")
            prev = end
        if np.linalg.norm(prev - np.array(self.b)) > tol:
            errors.append(f"image {self.n} ends at {prev.tolist()}, not at b {list(self.b)}")
        return errors

    def nodes(self, level: int) -> np.ndarray:
        """Chain endpoints of the level-j subarcs, in order along the arc (n^j + 1 points)."""
        order = order_cylinders(self, level, check=False) if level else None
        if order is None:
            return np.array([self.a, self.b])
        pts = [np.array(self.a)]
        for w, flip in zip(order.words, order.flips):
            m = compose_word(self.maps, w)
            pts.append(m(np.array(self.a if flip else self.b)))
        return np.array(pts)

    def cloud(self, spacing: float) -> np.ndarray:
        """Level-j nodes with j deep enough that subarc diameters fall below ``spacing``.

        Uses diam(S_w(gamma)) <= rho_w * diam_bound, where diam_bound is a
        bound on diam(gamma) from an invariant ball around a.
        """
        bound = self.diameter_bound()
        rho = max(self.ratios)
        depth = 0 if spacing >= bound else math.ceil(math.log(spacing / bound) / math.log(rho) - 1e-12)
        return self.nodes(depth)

    def diameter_bound(self) -> float:
        """2R for a ball B(a, R) with S_i(B) inside B for all i, so gamma lies in B."""
        a = np.array(self.a)
        r = max(float(np.linalg.norm(m(a) - a)) / (1 - m.ratio) for m in self.maps)
        return 2 * max(r, 1e-300)


@dataclass(frozen=True)
class LevelDecomposition:
    k: int
    words: tuple  # chain order
    flips: tuple  # accumulated orientation of each word

    def __len__(self) -> int:
        return len(self.words)


def order_cylinders(arc: SelfSimilarArcIFS, k: int, check: bool = True) -> LevelDecomposition:
    """Level-k words in chain order: children run n..1 under a reversed parent."""
    if k < 1:
        raise ValueError("level must be >= 1")
    items = [((), False)]
    for _ in range(k):
        nxt = []
        for w, flip in items:
            letters = range(arc.n, 0, -1) if flip else range(1, arc.n + 1)
            nxt.extend((w + (i,), flip != arc.reversed_maps[i - 1]) for i in letters)
        items = nxt
    dec = LevelDecomposition(k, tuple(w for w, _ in items), tuple(f for _, f in items))
    if check:
        _check_chain(arc, dec)
    return dec


def _check_chain(arc: SelfSimilarArcIFS, dec: LevelDecomposition) -> None:
    tol = ENDPOINT_TOL * max(1.0, arc.diameter_scale)
    a, b = np.array(arc.a), np.array(arc.b)
    prev = a
    for w, flip in zip(dec.words, dec.flips):
        m = compose_word(arc.maps, w)
        start, end = (m(b), m(a)) if flip else (m(a), m(b))
        if np.linalg.norm(start - prev) > tol:
            raise ConfigError(f"orientation flags break the chain at word {w}")
        prev = end
    if np.linalg.norm(prev - b) > tol:
        raise ConfigError("orientation flags break the chain at the last word")


def _end_polyline(arc: SelfSimilarArcIFS, w: tuple, flip: bool, refine: int, label: int) -> CondensationComponent:
    m = compose_word(arc.maps, w)
    pts = m(arc.nodes(refine))
    if flip:
        pts = pts[::-1]
    verts = tuple(map(tuple, pts))
    return CondensationComponent("polyline", verts, verts[0], verts[-1], label)


def lift(arc: SelfSimilarArcIFS, k: int, refine: int = DEFAULT_REFINE) -> LinearCondensationSystem:
    """Level-k lift: C1, the interior word maps in chain order, C2."""
    if k < 1 or arc.n ** k < 4:
        raise LevelTooSmallError(f"level {k} gives n^k = {arc.n ** k} subarcs; the lift needs at least 4")
    dec = order_cylinders(arc, k)
    first = _end_polyline(arc, dec.words[0], dec.flips[0], refine, 1)
    last = _end_polyline(arc, dec.words[-1], dec.flips[-1], refine, 2)
    inner = range(1, len(dec) - 1)
    maps = tuple(compose_word(arc.maps, dec.words[i]) for i in inner)
    flips = tuple(dec.flips[i] for i in inner)
    zipper = ("C1",) + tuple(f"M{i}" for i in range(1, len(maps) + 1)) + ("C2",)
    name = f"{arc.name}-lift{k}" if arc.name else f"lift{k}"
    return LinearCondensationSystem((first, last), maps, arc.a, arc.b, zipper, flips, name)


def _inner_ratios(arc: SelfSimilarArcIFS, dec: LevelDecomposition) -> list[float]:
    return [word_ratio(arc.maps, w) for w in dec.words[1:-1]]


def inner_dimension(ratios) -> float:
    try:
        return similarity_dimension(ratios)
    except DegenerateError:
        return 0.0


@dataclass
class LiftReport:
    arc_dimension: float
    rho_star: float
    level: int | None = None
    inner_dimension: float | None = None
    end_weight_sum: float | None = None
    end_condition: bool | None = None
    inner_moran_at_arc_dimension: float | None = None
    tried: list = field(default_factory=list)  # (k, inner dimension, end-weight sum)
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "arc_dimension": self.arc_dimension,
            "rho_star": self.rho_star,
            "level": self.level,
            "inner_dimension": self.inner_dimension,
            "end_weight_sum": self.end_weight_sum,
            "end_weight_below_half": self.end_condition,
            "inner_moran_sum_at_arc_dimension": self.inner_moran_at_arc_dimension,
            "tried": [{"k": k, "inner_dimension": d, "end_weight_sum": e} for k, d, e in self.tried],
            "message": self.message,
        }


def smallest_whitney_level(arc: SelfSimilarArcIFS, kmax: int = 5):
    """Smallest k <= kmax whose interior system has similarity dimension > 1.

    Returns (k, inner dimension, LiftReport).  The end-weight sum
    rho_first^s + rho_last^s and whether it is below 1/2 are reported
    alongside, but acceptance is the direct dimension check.
    """
    s = arc.dimension()
    report = LiftReport(s, max(arc.ratios))
    if s <= 1.0:
        report.message = f"s <= 1 (s = {s!r}): the interior dimension never exceeds 1"
        raise NotFoundError(report.message, best=None, report=report)
    best = -math.inf
    for k in range(1, kmax + 1):
        if arc.n ** k < 4:
            continue
        dec = order_cylinders(arc, k)
        ratios = _inner_ratios(arc, dec)
        d = inner_dimension(ratios)
        ends = moran_value([word_ratio(arc.maps, dec.words[0]), word_ratio(arc.maps, dec.words[-1])], s)
        report.tried.append((k, d, ends))
        best = max(best, d)
        if d > 1.0:
            report.level, report.inner_dimension = k, d
            report.end_weight_sum, report.end_condition = ends, ends < 0.5
            report.inner_moran_at_arc_dimension = moran_value(ratios, s)
            report.message = f"interior dimension {d:.12g} > 1 at level {k}"
            return k, d, report
    report.message = f"no level up to {kmax} has interior dimension > 1 (best {best:.12g})"
    raise NotFoundError(report.message, best=best, report=report)


@dataclass(frozen=True)
class ArcValidation:
    eps: float
    adjacent_touch: bool
    others_disjoint: bool
    min_adjacent_distance: float
    min_nonadjacent_distance: float

    @property
    def passed(self) -> bool:
        return self.adjacent_touch and self.others_disjoint


def validate_arc(arc: SelfSimilarArcIFS, eps: float = 1e-3) -> ArcValidation:
    """Consecutive images touch (distance <= eps*D), others stay farther than eps*D apart."""
    scale = arc.diameter_bound()
    spacing = eps * scale
    clouds = [m(arc.cloud(spacing / m.ratio)) for m in arc.maps]
    adj, non = math.inf, math.inf
    touch, apart = True, True
    for i, j in itertools.combinations(range(arc.n), 2):
        d = cloud_distance(clouds[i], clouds[j])
        if j - i == 1:
            adj = min(adj, d)
            touch &= d <= spacing
        else:
            non = min(non, d)
            apart &= d > spacing
    return ArcValidation(eps, touch, apart, adj, non)


def interior_separation(system: LinearCondensationSystem, eps: float = 1e-3) -> dict:
    """Counts touching pairs among the interior cylinders of a lifted system.

    Adjacent interior subarcs share their junction point, so the strong
    separation condition holds only in the sense of disjoint non-neighbours.
    """
    spacing = eps * system.bounding_region().diameter
    clouds = [m(system.cloud(spacing / m.ratio)) for m in system.maps]
    touching = []
    for i, j in itertools.combinations(range(len(clouds)), 2):
        if cloud_distance(clouds[i], clouds[j]) <= spacing:
            touching.append((i + 1, j + 1))
    return {
        "eps": eps,
        "touching_pairs": len(touching),
        "strong_separation": not touching,
        "non_neighbour_pairs_disjoint": all(
            abs(system.map_position(i) - system.map_position(j)) == 1 for i, j in touching),
    }
