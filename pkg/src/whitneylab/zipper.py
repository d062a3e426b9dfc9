"""Zipper decompositions: the three conditions, the Hata graph, theorem hypotheses.

All set comparisons run on point clouds with absolute spacing eps * diam(R),
where R is the certified invariant box.  Verdicts therefore mean "verified at
resolution eps"; they are not proofs.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import networkx as nx
import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from .dimension import similarity_dimension
from .errors import DegenerateError
from .systems import ENDPOINT_TOL, LinearCondensationSystem

CLUSTER_FACTOR = 4  # near-intersection clusters may span at most 4 spacings
COVER_FACTOR = 4
GAP_FACTOR = 3  # components closer than 3 spacings cannot be resolved


@dataclass(frozen=True, eq=False)
class Button:
    """A sampled set with its two marked endpoints (start, end)."""

    label: str
    points: np.ndarray
    start: np.ndarray
    end: np.ndarray


@dataclass(frozen=True, eq=False)
class ZipperDecomposition:
    parent: Button
    children: tuple
    assignment: tuple  # ("C", j) or ("M", i) per position

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.children]


def _label(token) -> str:
    kind, idx = token
    return f"{kind}{idx}"


def decompose(sys: LinearCondensationSystem, spacing: float, level: int = 0) -> ZipperDecomposition:
    """The attractor button (K, {a, b}) and its m + N children as sampled buttons."""
    children = []
    for pos, token in enumerate(sys.zipper):
        start, end = sys.child_endpoints(pos)
        children.append(Button(_label(token), sys.child_cloud(pos, spacing, level), start, end))
    parent = Button("K", sys.cloud(spacing, level), np.array(sys.a), np.array(sys.b))
    return ZipperDecomposition(parent, tuple(children), tuple(sys.zipper))


# ---------------------------------------------------------------- report


@dataclass
class ConditionVerdict:
    passed: bool
    detail: str = ""
    failures: list = field(default_factory=list)


@dataclass
class ValidationReport:
    system: str
    eps: float
    level: int
    spacing: float
    diameter: float
    cover: ConditionVerdict
    chaining: ConditionVerdict
    adjacency: ConditionVerdict
    inconclusive: bool = False
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.cover.passed and self.chaining.passed and self.adjacency.passed

    def condition(self, which: str) -> ConditionVerdict:
        return {"i": self.cover, "ii": self.chaining, "iii": self.adjacency}[which]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conditions"] = {"i": d.pop("cover"), "ii": d.pop("chaining"), "iii": d.pop("adjacency")}
        d["passed"] = self.passed
        d["verdict_kind"] = f"verified at resolution eps={self.eps:g}"
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_jsonable)


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def _nearest(tree: cKDTree, pts: np.ndarray, bound: float = math.inf) -> np.ndarray:
    """Nearest-neighbour distances, inf beyond ``bound``."""
    return tree.query(pts, k=1, distance_upper_bound=bound)[0]


def _near_mask(tree: cKDTree, box, pts: np.ndarray, radius: float) -> np.ndarray:
    """Which points lie within ``radius`` of the cloud behind ``tree`` (box = its bbox)."""
    lo, hi = box
    mask = np.all((pts >= lo - radius) & (pts <= hi + radius), axis=1)
    if mask.any():
        idx = np.nonzero(mask)[0]
        mask[idx] = _nearest(tree, pts[idx], radius * (1 + 1e-12)) <= radius
    return mask


def _gap(tree: cKDTree, box, pts: np.ndarray, cap: float) -> float:
    """Cloud distance if below ``cap``; otherwise a lower bound (>= cap or the box gap)."""
    lo, hi = box
    outside = np.maximum(np.maximum(lo - pts, pts - hi), 0.0)
    box_gap = float(np.sqrt((outside ** 2).sum(axis=1)).min())
    if box_gap >= cap:
        return box_gap
    near = pts[np.all((pts >= lo - cap) & (pts <= hi + cap), axis=1)]
    if not len(near):
        return cap
    return float(min(_nearest(tree, near, cap).min(), cap))


class _Indexed:
    def __init__(self, pts: np.ndarray):
        self.points = pts
        self.tree = cKDTree(pts)
        self.box = (pts.min(axis=0), pts.max(axis=0))


def _diameter(pts: np.ndarray) -> float:
    if len(pts) < 2:
        return 0.0
    if len(pts) > 4000:  # the hull carries the diameter
        from scipy.spatial import ConvexHull

        try:
            pts = pts[ConvexHull(pts).vertices]
        except Exception:
            pass
    return float(pdist(pts).max())


def validate_zipper(sys: LinearCondensationSystem, eps: float = 1e-3, k: int = 5) -> ValidationReport:
    """Check conditions (i) cover, (ii) endpoint chaining, (iii) adjacency at resolution eps."""
    if k < 1:
        raise ValueError("level must be >= 1")
    if eps <= 0:
        raise ValueError("eps must be positive")
    diam = sys.bounding_region().diameter
    spacing = eps * diam
    zd = decompose(sys, spacing, k)
    children = zd.children
    notes = []

    # (ii): endpoints are computed exactly, so compare with a tight tolerance
    tol = ENDPOINT_TOL * max(1.0, diam)
    chain_fail = []
    if np.linalg.norm(children[0].start - zd.parent.start) > tol:
        chain_fail.append({"where": "a != a_1", "gap": float(np.linalg.norm(children[0].start - zd.parent.start))})
    for i in range(len(children) - 1):
        gap = float(np.linalg.norm(children[i].end - children[i + 1].start))
        if gap > tol:
            chain_fail.append({"where": f"b_{i + 1} != a_{i + 2} ({children[i].label} -> {children[i + 1].label})",
                               "gap": gap})
    if np.linalg.norm(children[-1].end - zd.parent.end) > tol:
        chain_fail.append({"where": "b_last != b", "gap": float(np.linalg.norm(children[-1].end - zd.parent.end))})
    chaining = ConditionVerdict(not chain_fail, f"tolerance {tol:g}", chain_fail)

    # (i): Hausdorff distance between the union of the children and the parent
    bound = 2 * COVER_FACTOR * spacing
    union = np.concatenate([c.points for c in children])
    h = max(_nearest(cKDTree(zd.parent.points), union, bound).max(),
            _nearest(cKDTree(union), zd.parent.points, bound).max())
    cover = ConditionVerdict(bool(h <= COVER_FACTOR * spacing),
                             f"Hausdorff distance {h:.3e} vs {COVER_FACTOR}*spacing = {COVER_FACTOR * spacing:.3e}")

    # (iii): neighbours meet in a small cluster, non-neighbours stay apart
    idx = [_Indexed(c.points) for c in children]
    cap = 0.1 * diam
    adj_fail = []
    max_cluster = 0.0
    min_far = math.inf
    for i, j in itertools.combinations(range(len(children)), 2):
        ci, cj = children[i], children[j]
        pair = [ci.label, cj.label]
        if j - i == 1:
            near_i = _near_mask(idx[j].tree, idx[j].box, ci.points, spacing)
            near_j = _near_mask(idx[i].tree, idx[i].box, cj.points, spacing)
            cluster = np.concatenate([ci.points[near_i], cj.points[near_j]])
            size = _diameter(cluster)
            max_cluster = max(max_cluster, size)
            if len(cluster) == 0:
                adj_fail.append({"pair": pair, "problem": "do not meet",
                                 "distance": _gap(idx[j].tree, idx[j].box, ci.points, cap)})
            elif size > CLUSTER_FACTOR * spacing:
                adj_fail.append({"pair": pair, "problem": "meet in more than one point", "cluster_diameter": size})
        else:
            d = _gap(idx[j].tree, idx[j].box, ci.points, cap)
            min_far = min(min_far, d)
            if d <= spacing:
                adj_fail.append({"pair": pair, "problem": "non-adjacent pieces intersect", "distance": d})
    adjacency = ConditionVerdict(not adj_fail, f"largest adjacent cluster {max_cluster:.3e}, "
                                 f"closest non-adjacent pair {min_far:.3e}"
                                 + (" (lower bound)" if min_far >= cap else ""), adj_fail)

    gap = sys.min_component_gap()
    inconclusive = gap < GAP_FACTOR * spacing
    if inconclusive:
        notes.append(f"components are {gap:.3e} apart, below {GAP_FACTOR}*spacing: resolution too coarse")
    return ValidationReport(sys.name, eps, k, spacing, diam, cover, chaining, adjacency, inconclusive, notes)


# ---------------------------------------------------------------- Hata graph


@dataclass(frozen=True)
class HataGraph:
    vertices: tuple
    edges: frozenset  # frozensets of two labels
    threshold: float

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.vertices)
        g.add_edges_from(tuple(e) for e in self.edges)
        return g

    def has_edge(self, u: str, v: str) -> bool:
        return frozenset((u, v)) in self.edges

    def components(self) -> list[set]:
        return [set(c) for c in nx.connected_components(self.to_networkx())]


def hata_graph(sys: LinearCondensationSystem, eps: float = 1e-3, k: int = 5) -> HataGraph:
    """Vertices C_j and phi_i(K); an edge wherever the clouds come closer than eps * diam."""
    spacing = eps * sys.bounding_region().diameter
    zd = decompose(sys, spacing, k)
    order = sorted(range(len(zd.children)), key=lambda p: (zd.assignment[p][0], zd.assignment[p][1]))
    children = [zd.children[p] for p in order]
    idx = [_Indexed(c.points) for c in children]
    edges = set()
    for i, j in itertools.combinations(range(len(children)), 2):
        if _gap(idx[i].tree, idx[i].box, children[j].points, 2 * spacing) < spacing:
            edges.add(frozenset((children[i].label, children[j].label)))
    return HataGraph(tuple(c.label for c in children), frozenset(edges), spacing)


def is_connected(g: HataGraph) -> bool:
    if not g.vertices:
        return True
    return nx.is_connected(g.to_networkx())


# ---------------------------------------------------------------- hypotheses


@dataclass
class HypothesisReport:
    theorem: str
    ends_are_components: bool
    dimension: float
    dimension_above_one: bool
    components_are_arcs: bool | None
    assumed: list
    notes: list

    @property
    def passed(self) -> bool:
        ok = self.ends_are_components and self.dimension_above_one
        if self.theorem == "T1":
            ok = ok and bool(self.components_are_arcs)
        return ok

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def check_theorem_hypotheses(sys: LinearCondensationSystem, which: str = "T2") -> HypothesisReport:
    """End pieces are components; dim_s of the maps exceeds 1; for T1, components are arcs."""
    which = which.upper()
    if which not in ("T1", "T2"):
        raise ValueError("which must be 'T1' or 'T2'")
    ends = sys.zipper[0][0] == "C" and sys.zipper[-1][0] == "C"
    try:
        s = similarity_dimension(sys.ratios)
    except DegenerateError:
        s = 0.0
    notes = [f"dim_s = {s!r} stands in for dim_H E; they agree under the open set condition",
             "cylinder weights are similarity-measure weights, equal to H^s proportions only under separation"]
    assumed = []
    arcs = None
    if which == "T1":
        arcs = all(c.shape in ("segment", "polyline") for c in sys.components)
        assumed.append("K is an arc (not decidable from samples; the zipper structure is checked instead)")
    if not ends:
        notes.append(f"zipper starts with {_label(sys.zipper[0])} and ends with {_label(sys.zipper[-1])}")
    return HypothesisReport(which, ends, s, s > 1.0, arcs, assumed, notes)
