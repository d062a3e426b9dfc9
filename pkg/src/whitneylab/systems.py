"""IFS with finite-component condensation and its level-k approximations.

The attractor K satisfies K = C u phi_1(K) u ... u phi_N(K).  Unrolling k times
gives the level-k piece set: the condensation images phi_w(C_j) for |w| < k
and the cylinders phi_w(K) for |w| = k.  K itself is never known, so cylinders
are represented by phi_w(R) for a certified invariant box R (phi_i(R) c R and
C c R, hence K c R) together with a sampled point cloud.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, DomainError, GeometryError, ResourceError, ShapeError
from .geometry import Similitude, expand_level, level_maps, level_words, stack_maps, transform_points

SHAPES = ("segment", "polyline", "polygon")
ENDPOINT_TOL = 1e-9
DEFAULT_PIECE_CAP = 2_000_000


# ---------------------------------------------------------------- distances

def point_segment_distance(p, a, b) -> np.ndarray:
    """Distance from points p (n, d) to the segment [a, b]."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    a, b = np.asarray(a, float), np.asarray(b, float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(p - a, axis=1)
    t = np.clip((p - a) @ ab / denom, 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


def segment_segment_distance(p0, p1, q0, q1) -> float:
    """Exact distance between two closed segments in R^d."""
    p0, p1, q0, q1 = (np.asarray(v, dtype=float) for v in (p0, p1, q0, q1))
    d1, d2, r = p1 - p0, q1 - q0, p0 - q0
    a, e, f = d1 @ d1, d2 @ d2, d2 @ r
    if a == 0.0 and e == 0.0:
        return float(np.linalg.norm(r))
    if a == 0.0:
        s, t = 0.0, float(np.clip(f / e, 0.0, 1.0))
    else:
        c = d1 @ r
        if e == 0.0:
            s, t = float(np.clip(-c / a, 0.0, 1.0)), 0.0
        else:
            b = d1 @ d2
            denom = a * e - b * b
            s = float(np.clip((b * f - c * e) / denom, 0.0, 1.0)) if denom > 0 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t, s = 0.0, float(np.clip(-c / a, 0.0, 1.0))
            elif t > 1.0:
                t, s = 1.0, float(np.clip((b - c) / a, 0.0, 1.0))
    return float(np.linalg.norm(p0 + s * d1 - (q0 + t * d2)))


# ---------------------------------------------------------------- components

@dataclass(frozen=True)
class CondensationComponent:
    """One connected piece C_j with its marked endpoints a_j (start) and b_j (end).

    ``polygon`` vertices form a closed loop (the region it bounds is the component;
    clouds sample its boundary), ``polyline``/``segment`` an open chain.
    """

    shape: str
    vertices: tuple
    start: tuple
    end: tuple
    label: int = 0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise DomainError(f"unknown shape {self.shape!r}; expected one of {SHAPES}")
        verts = tuple(tuple(float(x) for x in v) for v in self.vertices)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "start", tuple(float(x) for x in self.start))
        object.__setattr__(self, "end", tuple(float(x) for x in self.end))
        if len({len(v) for v in verts}) != 1:
            raise ShapeError("component vertices have mixed dimensions")
        need = {"segment": 2, "polyline": 2, "polygon": 3}[self.shape]
        if len(verts) < need or (self.shape == "segment" and len(verts) != 2):
            raise DomainError(f"{self.shape} component {self.label} has {len(verts)} vertices")
        for name, pt in (("start", self.start), ("end", self.end)):
            if len(pt) != self.dim:
                raise ShapeError(f"{name} of component {self.label} has wrong dimension")
            if self.distance_to(np.array(pt))[0] > ENDPOINT_TOL:
                raise DomainError(f"{name} point of component {self.label} is not on the shape")

    @property
    def dim(self) -> int:
        return len(self.vertices[0])

    @property
    def vertex_array(self) -> np.ndarray:
        return np.array(self.vertices)

    def edges(self) -> list[tuple[np.ndarray, np.ndarray]]:
        v = self.vertex_array
        pairs = list(zip(v[:-1], v[1:]))
        if self.shape == "polygon":
            pairs.append((v[-1], v[0]))
        return pairs

    def distance_to(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.min([point_segment_distance(pts, a, b) for a, b in self.edges()], axis=0)

    def distance_to_component(self, other: "CondensationComponent") -> float:
        """Exact curve-to-curve distance (boundaries, for polygons)."""
        return min(segment_segment_distance(a, b, c, d)
                   for a, b in self.edges() for c, d in other.edges())

    @property
    def diameter(self) -> float:
        v = self.vertex_array
        return float(np.max(np.linalg.norm(v[:, None] - v[None], axis=-1)))

    def sample(self, spacing: float) -> np.ndarray:
        """Points along the curve (polygon boundary) at arc-length steps <= spacing.

        Both ends of an open curve and the marked endpoints are always included;
        interior vertices only when the step is finer than the edges.
        """
        v = self.vertex_array
        if self.shape == "polygon":
            v = np.concatenate([v, v[:1]])
        seg = np.linalg.norm(np.diff(v, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        total = cum[-1]
        n = max(1, math.ceil(total / spacing))
        if n >= len(seg) * 4:  # fine enough: walk every edge
            chunks = []
            for a, b, length in zip(v[:-1], v[1:], seg):
                m = max(1, math.ceil(length / spacing))
                chunks.append(a + (np.arange(m)[:, None] / m) * (b - a))
            chunks.append(v[-1:])
            pts = np.concatenate(chunks)
        else:
            t = np.linspace(0.0, total, n + 1)
            idx = np.clip(np.searchsorted(cum, t, side="right") - 1, 0, len(seg) - 1)
            frac = np.where(seg[idx] > 0, (t - cum[idx]) / np.where(seg[idx] > 0, seg[idx], 1.0), 0.0)
            pts = v[idx] + frac[:, None] * (v[idx + 1] - v[idx])
        extra = [q for q in (self.start, self.end) if not any(np.array_equal(q, r) for r in (pts[0], pts[-1]))]
        return np.concatenate([pts, extra]) if extra else pts

    def transformed(self, m: Similitude, label=None) -> "CondensationComponent":
        return CondensationComponent(self.shape, tuple(map(tuple, m(self.vertex_array))),
                                     tuple(m(np.array(self.start))), tuple(m(np.array(self.end))),
                                     self.label if label is None else label)


# ---------------------------------------------------------------- bounding box

@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))

    @property
    def corners(self) -> np.ndarray:
        return np.array(list(itertools.product(*zip(self.lo, self.hi))), dtype=float)

    def contains(self, pts, tol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all((pts >= np.array(self.lo) - tol) & (pts <= np.array(self.hi) + tol), axis=1)

    def is_invariant(self, maps: Sequence[Similitude], tol: float = 1e-12) -> bool:
        c = self.corners
        slack = tol * max(self.diameter, 1.0)
        return all(self.contains(m(c), slack).all() for m in maps)


def _bbox(pts: np.ndarray) -> Box:
    return Box(tuple(pts.min(axis=0)), tuple(pts.max(axis=0)))


def invariant_box(maps: Sequence[Similitude], seed_points: np.ndarray) -> Box:
    """Smallest-effort axis box containing the seeds with phi_i(box) c box for all i."""
    box = _bbox(seed_points)
    for _ in range(200):
        pts = np.concatenate([box.corners] + [m(box.corners) for m in maps])
        new = _bbox(pts)
        if new == box:
            break
        box = new
    if box.is_invariant(maps):
        return box
    lo, hi = np.array(box.lo), np.array(box.hi)
    centre, half = (lo + hi) / 2, (hi - lo) / 2
    half = np.maximum(half, 1e-12 * max(1.0, float(np.abs(centre).max())))
    grow = 1e-9
    for _ in range(64):
        cand = Box(tuple(centre - half * (1 + grow)), tuple(centre + half * (1 + grow)))
        if cand.is_invariant(maps, tol=0.0):
            return cand
        grow *= 2
    raise GeometryError("no invariant box after 64 doublings; maps are probably not contractive")


# ---------------------------------------------------------------- systems

@dataclass(frozen=True, eq=False)
class CondensationSystem:
    components: tuple
    maps: tuple

    def __post_init__(self):
        object.__setattr__(self, "_cache", {})
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "maps", tuple(self.maps))
        errors = []
        if len(self.components) < 2:
            errors.append(f"condensation set needs m >= 2 components, got {len(self.components)}")
        if not self.maps:
            errors.append("at least one map is required")
        dims = {c.dim for c in self.components} | {m.dim for m in self.maps}
        if len(dims) > 1:
            errors.append(f"mixed ambient dimensions {sorted(dims)}")
        for i, m in enumerate(self.maps, 1):
            if not m.ratio < 1.0:
                errors.append(f"map {i} is not contractive (ratio {m.ratio})")
        if errors:
            raise ConfigError(errors)

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def n_maps(self) -> int:
        return len(self.maps)

    @property
    def dim(self) -> int:
        return self.maps[0].dim

    @property
    def ratios(self) -> list[float]:
        return [m.ratio for m in self.maps]

    def anchor_points(self) -> np.ndarray:
        """Points known to lie in K, reused as cylinder representatives."""
        return np.array([self.components[0].start])

    def min_component_gap(self) -> float:
        return min(a.distance_to_component(b) for a, b in itertools.combinations(self.components, 2))

    def bounding_region(self) -> Box:
        if "box" not in self._cache:
            seeds = [c.vertex_array for c in self.components]
            seeds.append(np.array([m.fixed_point() for m in self.maps]))
            self._cache["box"] = invariant_box(self.maps, np.concatenate(seeds))
        return self._cache["box"]

    def resolution_depth(self, spacing: float) -> int:
        """Smallest j with (max ratio)^j * diam(R) <= spacing."""
        diam = self.bounding_region().diameter
        rho = max(self.ratios)
        if spacing >= diam:
            return 0
        return max(0, math.ceil(math.log(spacing / diam) / math.log(rho) - 1e-12))

    def cloud(self, spacing: float, min_depth: int = 0) -> np.ndarray:
        """Points of K whose Hausdorff distance to K is at most ``spacing``.

        Words are expanded until rho_w * diam(R) <= spacing (and at least
        ``min_depth`` letters); condensation images met on the way are
        sampled with gaps <= spacing and each finished cylinder is replaced by
        the images of the anchor points, which lie within its diameter of
        everything in it.
        """
        key = ("cloud", float(spacing), int(min_depth))
        if key in self._cache:
            return self._cache[key]
        if len(self._cache) > 64:
            self._cache.clear()
        diam = self.bounding_region().diameter
        d = self.dim
        chunks = [self.anchor_points()]
        lin, off, ratio = np.eye(d)[None], np.zeros((1, d)), np.ones(1)
        mlin, moff = stack_maps(self.maps)
        mratio = np.array(self.ratios)
        depth = 0
        while len(ratio):
            # a cylinder is fine enough once rho_w * diam(R) <= spacing
            done = (ratio * diam <= spacing) & (depth >= min_depth)
            if done.any():
                chunks.append(transform_points(lin[done], off[done], self.anchor_points()).reshape(-1, d))
            lin, off, ratio = lin[~done], off[~done], ratio[~done]
            if not len(ratio):
                break
            for comp in self.components:
                chunks.append(_sample_images(comp, lin, off, ratio, spacing))
            lin, off = expand_level(lin, off, mlin, moff)
            ratio = (ratio[:, None] * mratio[None]).ravel()
            depth += 1
        pts = np.concatenate(chunks)
        self._cache[key] = pts
        return pts


def cloud_distance(x: np.ndarray, y: np.ndarray) -> float:
    """Minimum distance between two point clouds (KD tree on the larger one)."""
    if len(x) == 0 or len(y) == 0:
        return math.inf
    if len(x) < len(y):
        x, y = y, x
    d, _ = cKDTree(x).query(y, k=1)
    return float(d.min())


def _sample_images(comp: CondensationComponent, lin, off, ratios, spacing) -> np.ndarray:
    """Sample phi(C) for many maps, grouping maps of equal ratio."""
    out = []
    keys = np.round(np.log(ratios), 9)
    for key in np.unique(keys):
        idx = np.nonzero(keys == key)[0]
        base = comp.sample(spacing / float(np.exp(key)))
        out.append(transform_points(lin[idx], off[idx], base).reshape(-1, comp.dim))
    return np.concatenate(out)


def _parse_token(token) -> tuple[str, int]:
    if isinstance(token, str):
        kind, idx = token[:1].upper(), token[1:]
        if kind in ("C", "M") and idx.isdigit():
            return kind, int(idx)
        raise ConfigError(f"bad zipper token {token!r}; use 'C<j>' or 'M<i>'")
    kind, idx = token
    return str(kind).upper(), int(idx)


@dataclass(frozen=True, eq=False)
class LinearCondensationSystem(CondensationSystem):
    """An IFS with condensation plus the zipper order of its attractor button (K, {a, b}).

    ``zipper`` lists the m+N children in chain order as ("C", j) or ("M", i),
    1-based.  A map child is the button (phi_i(K), {phi_i(a), phi_i(b)}); when
    ``reversed_maps[i-1]`` is set the chain runs through phi_i(b) first.
    """

    a: tuple
    b: tuple
    zipper: tuple
    reversed_maps: tuple = ()
    name: str = ""

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        object.__setattr__(self, "b", tuple(float(x) for x in self.b))
        tokens = tuple(_parse_token(t) for t in self.zipper)
        object.__setattr__(self, "zipper", tokens)
        rev = tuple(bool(r) for r in self.reversed_maps) or (False,) * self.n_maps
        object.__setattr__(self, "reversed_maps", rev)
        errors = []
        expected = sorted([("C", j) for j in range(1, self.m + 1)] + [("M", i) for i in range(1, self.n_maps + 1)])
        if sorted(tokens) != expected:
            errors.append("zipper order is not a rearrangement of the components and maps")
        if len(rev) != self.n_maps:
            errors.append(f"{len(rev)} orientation flags for {self.n_maps} maps")
        if len(self.a) != self.dim or len(self.b) != self.dim:
            errors.append("endpoints a, b have the wrong dimension")
        if errors:
            raise ConfigError(errors)

    @property
    def n_positions(self) -> int:
        return len(self.zipper)

    @property
    def position_is_map(self) -> np.ndarray:
        return np.array([k == "M" for k, _ in self.zipper])

    @property
    def position_index(self) -> np.ndarray:
        """0-based component or map index at each zipper position."""
        return np.array([i - 1 for _, i in self.zipper])

    def map_position(self, i: int) -> int:
        """0-based zipper position of map i (1-based)."""
        return self.zipper.index(("M", i))

    def child_endpoints(self, position: int) -> tuple[np.ndarray, np.ndarray]:
        """Chain-ordered endpoints of the child at a 0-based zipper position."""
        kind, idx = self.zipper[position]
        if kind == "C":
            c = self.components[idx - 1]
            return np.array(c.start), np.array(c.end)
        m = self.maps[idx - 1]
        pa, pb = m(np.array(self.a)), m(np.array(self.b))
        return (pb, pa) if self.reversed_maps[idx - 1] else (pa, pb)

    def anchor_points(self) -> np.ndarray:
        return np.array([self.a, self.b])

    def bounding_region(self) -> Box:
        if "box" not in self._cache:
            seeds = [c.vertex_array for c in self.components]
            seeds.append(np.array([m.fixed_point() for m in self.maps]))
            seeds.append(np.array([self.a, self.b]))
            self._cache["box"] = invariant_box(self.maps, np.concatenate(seeds))
        return self._cache["box"]

    def child_cloud(self, position: int, spacing: float, min_depth: int = 0) -> np.ndarray:
        """Cloud of the child at a 0-based zipper position, absolute spacing."""
        kind, idx = self.zipper[position]
        if kind == "C":
            return self.components[idx - 1].sample(spacing)
        m = self.maps[idx - 1]
        return m(self.cloud(spacing / m.ratio, max(0, min_depth - 1)))

    def with_changes(self, **kw) -> "LinearCondensationSystem":
        fields = dict(components=self.components, maps=self.maps, a=self.a, b=self.b,
                      zipper=self.zipper, reversed_maps=self.reversed_maps, name=self.name)
        fields.update(kw)
        return LinearCondensationSystem(**fields)


def bounding_region(system: CondensationSystem) -> Box:
    return system.bounding_region()


# ---------------------------------------------------------------- piece sets

@dataclass(frozen=True)
class Piece:
    kind: str  # "condensation" or "cylinder"
    word: tuple
    component: int | None
    geometry: np.ndarray  # polyline/polygon vertices or the image of the box corners
    ratio: float
    points: np.ndarray | None = None

    @property
    def diameter(self) -> float:
        g = self.geometry
        return float(np.max(np.linalg.norm(g[:, None] - g[None], axis=-1)))


@dataclass
class PieceSet:
    level: int
    pieces: list
    region: Box
    resolution: float

    def __len__(self) -> int:
        return len(self.pieces)

    def of_kind(self, kind: str) -> list:
        return [p for p in self.pieces if p.kind == kind]

    def all_points(self) -> np.ndarray:
        return np.concatenate([p.points for p in self.pieces if p.points is not None])


def piece_count(m: int, n: int, k: int) -> int:
    """m (N^k - 1)/(N - 1) + N^k, the number of pieces at level k."""
    images = m * k if n == 1 else m * (n ** k - 1) // (n - 1)
    return images + n ** k


def _box_polygon(box: Box) -> np.ndarray:
    c = box.corners
    if c.shape[1] == 2:
        return c[[0, 1, 3, 2]]  # (lo,lo) (lo,hi) (hi,hi) (hi,lo)
    return c


def approximate_attractor(system: CondensationSystem, k: int, eps: float,
                          cap: int = DEFAULT_PIECE_CAP, with_points: bool = True) -> PieceSet:
    """Level-k pieces: phi_w(C_j) for |w| < k and phi_w(R) for |w| = k, sorted by word.

    Clouds use spacing eps * diam(piece): condensation images sample C_j at
    eps * diam(C_j) before mapping; a cylinder gets phi_w of a cloud of K at
    spacing eps * diam(R).
    """
    if k < 0:
        raise ValueError("level must be >= 0")
    if eps <= 0:
        raise ValueError("resolution must be positive")
    total = piece_count(system.m, system.n_maps, k)
    if total > cap:
        raise ResourceError(f"level {k} needs {total} pieces, above the cap of {cap}", cap)
    region = system.bounding_region()
    base_cloud = system.cloud(eps * region.diameter) if with_points else None
    poly = _box_polygon(region)
    samples = [c.sample(eps * c.diameter) for c in system.components] if with_points else None
    pieces = []
    for level in range(k + 1):
        lin, off, ratios = level_maps(system.maps, level)
        words = [tuple(int(x) for x in w) for w in level_words(system.n_maps, level)]
        if level < k:
            for j, comp in enumerate(system.components):
                geom = transform_points(lin, off, comp.vertex_array)
                pts = transform_points(lin, off, samples[j]) if with_points else None
                for w_i, w in enumerate(words):
                    pieces.append(Piece("condensation", w, j + 1, geom[w_i], float(ratios[w_i]),
                                        None if pts is None else pts[w_i]))
        else:
            geom = transform_points(lin, off, poly)
            pts = transform_points(lin, off, base_cloud) if with_points else None
            for w_i, w in enumerate(words):
                pieces.append(Piece("cylinder", w, None, geom[w_i], float(ratios[w_i]),
                                    None if pts is None else pts[w_i]))
    pieces.sort(key=lambda p: (p.word, p.component or 0))
    return PieceSet(k, pieces, region, eps)


def inner_attractor_cloud(maps: Sequence[Similitude], spacing: float, region: Box) -> np.ndarray:
    """Images of a fixed point of phi_1 down to the depth where cylinders are below spacing."""
    rho = max(m.ratio for m in maps)
    depth = 0 if spacing >= region.diameter else math.ceil(math.log(spacing / region.diameter) / math.log(rho) - 1e-12)
    lin, off, _ = level_maps(maps, depth)
    return transform_points(lin, off, maps[0].fixed_point()[None]).reshape(-1, maps[0].dim)


def approximate_inner_attractor(maps: Sequence[Similitude], k: int, eps: float,
                                cap: int = DEFAULT_PIECE_CAP, with_points: bool = True) -> PieceSet:
    """The N^k cylinders phi_w(E) of the plain IFS, no condensation."""
    maps = list(maps)
    n = len(maps)
    if n ** k > cap:
        raise ResourceError(f"level {k} needs {n ** k} cylinders, above the cap of {cap}", cap)
    region = invariant_box(maps, np.array([m.fixed_point() for m in maps]))
    cloud = inner_attractor_cloud(maps, eps * region.diameter, region) if with_points else None
    lin, off, ratios = level_maps(maps, k)
    geom = transform_points(lin, off, _box_polygon(region))
    pts = transform_points(lin, off, cloud) if with_points else None
    words = [tuple(int(x) for x in w) for w in level_words(n, k)]
    pieces = [Piece("cylinder", w, None, geom[i], float(ratios[i]), None if pts is None else pts[i])
              for i, w in enumerate(words)]
    return PieceSet(k, pieces, region, eps)
