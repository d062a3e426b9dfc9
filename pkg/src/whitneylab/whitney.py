"""k-level nodes, the Whitney function f, separation constants and the modulus check.

The level-k chain lists every level-k piece in zipper order: condensation
images phi_w(C_j) for |w| < k and cylinders phi_w(K) for |w| = k, children of
a reversed cylinder taken backwards.  Nodes are the piece endpoints; f at a
node is the total weight of the cylinders before it.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .dimension import MeasureWeights
from .errors import DomainError, PreconditionError, ResourceError
from .geometry import Similitude
from .systems import DEFAULT_PIECE_CAP, ENDPOINT_TOL, LinearCondensationSystem, cloud_distance, piece_count

CASES = ("1", "3.2-zero", "2", "3.1", "3.2-far", "unclassified")
ZERO_CASES = ("1", "3.2-zero")
_RANK = {c: i for i, c in enumerate(CASES)}
_NONE = 9  # rank of an impossible orientation


@dataclass(frozen=True, order=True)
class NodeAddress:
    """End ("end") or start ("start") of child ``position`` (1-based) of phi_word, in chain order.

    A shared point is named by the piece that precedes it along the chain.
    """

    word: tuple
    position: int
    side: str = "end"


# ---------------------------------------------------------------- the chain


@dataclass
class Chain:
    """All level-k pieces in chain order, their endpoints, and the k-level nodes."""

    system: LinearCondensationSystem
    weights: MeasureWeights
    k: int
    words: list  # prefix w of each piece
    positions: np.ndarray  # 0-based zipper position within phi_w
    is_map: np.ndarray
    flips: np.ndarray  # accumulated orientation of phi_w
    piece_weights: np.ndarray
    starts: np.ndarray
    ends: np.ndarray
    points: np.ndarray  # nodes, len(pieces) + 1
    f: np.ndarray

    @property
    def n_pieces(self) -> int:
        return len(self.words)

    @property
    def n_nodes(self) -> int:
        return len(self.points)

    def address(self, i: int) -> NodeAddress:
        if i == 0:
            return NodeAddress((), 1, "start")
        return NodeAddress(tuple(self.words[i - 1]), int(self.positions[i - 1]) + 1, "end")

    def addresses(self) -> list[NodeAddress]:
        return [self.address(i) for i in range(self.n_nodes)]

    def index_of(self, node: NodeAddress) -> int:
        lookup = self.__dict__.setdefault("_lookup", {})
        if not lookup:
            for i in range(self.n_pieces):
                w, p = tuple(self.words[i]), int(self.positions[i]) + 1
                lookup[(w, p, "end")] = i + 1
                lookup[(w, p, "start")] = i
        key = (tuple(node.word), node.position, node.side)
        if key not in lookup:
            raise KeyError(f"{node} is not a level-{self.k} node")
        return lookup[key]


def build_chain(sys: LinearCondensationSystem, k: int, weights: MeasureWeights | None = None,
                cap: int = DEFAULT_PIECE_CAP) -> Chain:
    if k < 1:
        raise ValueError("level must be >= 1")
    total = piece_count(sys.m, sys.n_maps, k)
    if total > cap:
        raise ResourceError(f"level {k} has {total} pieces, above the cap of {cap}", cap)
    weights = weights or MeasureWeights.from_ratios(sys.ratios)
    probs = weights.probabilities
    npos = sys.n_positions
    ends_local = np.array([sys.child_endpoints(p) for p in range(npos)])  # (npos, 2, d)
    kinds, idxs = zip(*sys.zipper)
    words, positions, is_map, flips, wts, starts, ends = [], [], [], [], [], [], []

    def walk(w, phi: Similitude, flip: bool, weight: float, depth: int):
        pts = phi(ends_local.reshape(-1, sys.dim)).reshape(npos, 2, sys.dim)
        order = range(npos - 1, -1, -1) if flip else range(npos)
        for p in order:
            s, e = (pts[p, 1], pts[p, 0]) if flip else (pts[p, 0], pts[p, 1])
            if kinds[p] == "C":
                words.append(w), positions.append(p), is_map.append(False), flips.append(flip)
                wts.append(0.0), starts.append(s), ends.append(e)
                continue
            i = idxs[p]
            child_flip = flip != sys.reversed_maps[i - 1]
            child_weight = weight * probs[i - 1]
            if depth + 1 == k:
                words.append(w), positions.append(p), is_map.append(True), flips.append(flip)
                wts.append(child_weight), starts.append(s), ends.append(e)
            else:
                walk(w + (i,), phi.compose(sys.maps[i - 1]), child_flip, child_weight, depth + 1)

    walk((), Similitude.identity(sys.dim), False, 1.0, 0)
    starts, ends = np.array(starts), np.array(ends)
    wts = np.array(wts)
    f = np.concatenate([[0.0], np.cumsum(wts)])
    points = np.concatenate([starts[:1], ends])
    return Chain(sys, weights, k, words, np.array(positions), np.array(is_map), np.array(flips),
                 wts, starts, ends, points, f)


def chain(sys: LinearCondensationSystem, k: int, weights: MeasureWeights | None = None,
          cap: int = DEFAULT_PIECE_CAP) -> Chain:
    """Cached build_chain (default weights only)."""
    if weights is not None:
        return build_chain(sys, k, weights, cap)
    key = ("chain", k)
    if key not in sys._cache:
        sys._cache[key] = build_chain(sys, k, None, cap)
    return sys._cache[key]


def nodes(sys: LinearCondensationSystem, k: int, cap: int = DEFAULT_PIECE_CAP) -> list[tuple[NodeAddress, np.ndarray]]:
    """The k-level nodes in zipper order, one entry per distinct point."""
    ch = chain(sys, k, cap=cap)
    return [(ch.address(i), ch.points[i]) for i in range(ch.n_nodes)]


# ---------------------------------------------------------------- f


def _position_weights(sys: LinearCondensationSystem, weights: MeasureWeights) -> list[float]:
    return [weights.probabilities[i - 1] if kind == "M" else 0.0 for kind, i in sys.zipper]


def f_at_node(sys: LinearCondensationSystem, weights: MeasureWeights, node: NodeAddress) -> float:
    """Tail weight at a node, by recursion through the word.

    With F(w) = f(phi_w(a)) and sigma_w = -1 when phi_w runs backwards along the chain,
    f(phi_w(x)) = F(w) + sigma_w * weight(w) * f(x) for every node x of K.
    """
    pw = _position_weights(sys, weights)
    before = [math.fsum(pw[:p]) for p in range(len(pw))]

    def f_local(position: int, at_b: bool) -> float:
        # f on K at a_position (or b_position), positions 0-based
        return before[position] + (pw[position] if at_b else 0.0)

    value, sign, mass = 0.0, 1.0, 1.0
    for i in node.word:
        pos = sys.map_position(i)
        rev = sys.reversed_maps[i - 1]
        value += sign * mass * f_local(pos, rev)  # phi_i(a) is b_pos when phi_i is reversed
        mass *= weights.probabilities[i - 1]
        if rev:
            sign = -sign
    flip = sign < 0
    at_b = (node.side == "end") != flip
    return value + sign * mass * f_local(node.position - 1, at_b)


@dataclass(frozen=True)
class PointValue:
    value: float
    lower: float
    upper: float
    exact: bool
    depth: int

    @property
    def error(self) -> float:
        return self.upper - self.lower


def f_at_point(sys: LinearCondensationSystem, weights: MeasureWeights, p, kmax: int = 12,
               tol: float | None = None) -> PointValue:
    """f at an arbitrary point of K.

    On a condensation image f is constant and the value is exact.  Otherwise
    the point is followed into nested cylinders down to depth kmax and the
    value is bracketed by f at the cylinder's chain endpoints.
    """
    p = np.asarray(p, dtype=float)
    box = sys.bounding_region()
    tol = ENDPOINT_TOL * max(1.0, box.diameter) if tol is None else tol
    lo, hi = np.array(box.lo), np.array(box.hi)
    pw = _position_weights(sys, weights)
    npos = sys.n_positions

    def search(phi: Similitude, entry: float, flip: bool, mass: float, depth: int):
        order = range(npos - 1, -1, -1) if flip else range(npos)
        acc = entry
        for pos in order:
            kind, idx = sys.zipper[pos]
            if kind == "C":
                comp = sys.components[idx - 1]
                local = _inverse(phi, p)
                if comp.distance_to(local)[0] * phi.ratio <= tol:
                    return PointValue(acc, acc, acc, True, depth)
                continue
            w = mass * pw[pos]
            child = phi.compose(sys.maps[idx - 1])
            local = _inverse(child, p)
            start_pt = child(np.array(sys.b if flip != sys.reversed_maps[idx - 1] else sys.a))
            if np.linalg.norm(start_pt - p) <= tol:
                return PointValue(acc, acc, acc, True, depth + 1)
            slack = tol / child.ratio
            if np.all(local >= lo - slack) and np.all(local <= hi + slack):
                if depth + 1 >= kmax:
                    return PointValue(acc + w / 2, acc, acc + w, False, depth + 1)
                found = search(child, acc, flip != sys.reversed_maps[idx - 1], w, depth + 1)
                if found is not None:
                    return found
            acc += w
        return None

    if np.linalg.norm(p - np.array(sys.a)) <= tol:
        return PointValue(0.0, 0.0, 0.0, True, 0)
    found = search(Similitude.identity(sys.dim), 0.0, False, 1.0, 0)
    if found is None:
        raise DomainError(f"point {p.tolist()} is not within {tol:g} of the attractor")
    return found


def _inverse(phi: Similitude, p: np.ndarray) -> np.ndarray:
    return np.linalg.solve(phi._linear, p - phi.offset)


# ---------------------------------------------------------------- candidate paths


@dataclass
class _Candidates:
    """Per (piece, side) data: prefix codes, zipper path and log-ratio prefixes.

    Row 2*i + side describes piece i entered from its start (side 0) or end (side 1).
    """

    codes: np.ndarray  # (rows, k): rank of the first j+1 word letters, -1 past the word
    paths: np.ndarray  # (rows, k + 2): zipper position at each depth, -1 past the end
    logr: np.ndarray  # (rows, k + 1): log rho of the first j letters
    node_rows: np.ndarray  # (nodes, 2): candidate rows, -1 if absent
    packed: np.ndarray | None = None  # letters packed ``bits`` apiece, first letter highest
    lengths: np.ndarray | None = None
    bits: int = 0


def _candidates(ch: Chain) -> _Candidates:
    sys, k = ch.system, ch.k
    npos, n = sys.n_positions, sys.n_maps
    map_pos = np.array([sys.map_position(i) for i in range(1, n + 1)])
    first, last = 0, npos - 1
    logs = np.log(sys.ratios)
    rows = 2 * ch.n_pieces
    codes = np.full((rows, k), -1, dtype=np.int64)
    paths = np.full((rows, k + 2), -1, dtype=np.int64)
    logr = np.zeros((rows, k + 1))
    for piece, (w, pos, is_map, flip) in enumerate(zip(ch.words, ch.positions, ch.is_map, ch.flips)):
        letters = list(w)
        if is_map:
            letters.append(sys.zipper[pos][1])
        code = 0
        lr = 0.0
        for j, letter in enumerate(letters):
            code = code * n + (letter - 1)
            codes[2 * piece:2 * piece + 2, j] = code
            lr += logs[letter - 1]
            logr[2 * piece:2 * piece + 2, j + 1] = lr
            paths[2 * piece:2 * piece + 2, j] = map_pos[letter - 1]
        logr[2 * piece:2 * piece + 2, len(letters) + 1:] = lr
        depth = len(letters)
        if not is_map:
            paths[2 * piece:2 * piece + 2, depth] = pos
            continue
        # a cylinder's chain endpoint lies in its first or last child
        rev = sys.reversed_maps[sys.zipper[pos][1] - 1]
        for side in (0, 1):
            at_b = (side == 1) ^ bool(flip) ^ bool(rev)  # zipper end of the child, then through phi_i
            paths[2 * piece + side, depth] = last if at_b else first
    node_rows = np.full((ch.n_nodes, 2), -1, dtype=np.int64)
    node_rows[1:, 0] = 2 * np.arange(ch.n_pieces) + 1  # preceding piece, at its end
    node_rows[:-1, 1] = 2 * np.arange(ch.n_pieces)  # following piece, at its start
    cand = _Candidates(codes, paths, logr, node_rows)
    bits = max(1, int(n).bit_length())
    if bits * k <= 52:
        # letter + 1 per digit (0 past the word), so the first differing digit is the leading bit of the xor
        lengths = (codes >= 0).sum(axis=1)
        packed = np.zeros(rows, dtype=np.int64)
        prev = np.zeros(rows, dtype=np.int64)
        for j in range(k):
            digit = np.where(codes[:, j] >= 0, codes[:, j] - prev * n + 1, 0)
            prev = np.where(codes[:, j] >= 0, codes[:, j], prev)
            packed = (packed << bits) | digit
        cand.packed, cand.lengths, cand.bits = packed, lengths, bits
    return cand


def candidates(ch: Chain) -> _Candidates:
    if "_cand" not in ch.__dict__:
        ch.__dict__["_cand"] = _candidates(ch)
    return ch.__dict__["_cand"]


def _lcp(cand: _Candidates, r1: np.ndarray, r2: np.ndarray) -> np.ndarray:
    """Common prefix length of the words of two candidate rows."""
    if cand.packed is None:
        c1, c2 = cand.codes[r1], cand.codes[r2]
        return ((c1 == c2) & (c1 >= 0)).sum(axis=1)
    k = cand.codes.shape[1]
    diff = (cand.packed[r1] ^ cand.packed[r2]).astype(np.float64)
    top = np.frexp(diff)[1]  # bit length, 0 for equal words
    same = (k * cand.bits - top) // cand.bits
    return np.minimum(same, np.minimum(cand.lengths[r1], cand.lengths[r2]))


def meet_word(sys: LinearCondensationSystem, z1: NodeAddress, z2: NodeAddress, k: int | None = None) -> tuple:
    """Longest w with both nodes in phi_w(K); a shared endpoint belongs to both neighbours."""
    if k is None:
        k = max(len(z1.word), len(z2.word)) + 1
    ch = chain(sys, k)
    i1, i2 = ch.index_of(z1), ch.index_of(z2)
    return meet_word_index(ch, i1, i2)


def meet_word_index(ch: Chain, i1: int, i2: int) -> tuple:
    cand = candidates(ch)
    best, word = -1, ()
    for r1 in cand.node_rows[i1]:
        for r2 in cand.node_rows[i2]:
            if r1 < 0 or r2 < 0:
                continue
            t = int(_lcp(cand, np.array([r1]), np.array([r2]))[0])
            if t > best:
                best = t
                word = _word_of_row(ch, r1)[:t]
    return tuple(word)


def _word_of_row(ch: Chain, row: int) -> tuple:
    piece = row // 2
    w = tuple(ch.words[piece])
    if ch.is_map[piece]:
        w += (ch.system.zipper[ch.positions[piece]][1],)
    return w


# ---------------------------------------------------------------- separation constants


@dataclass
class SeparationConstants:
    """Lower bounds for the three separation distances and M_i = 1/xi_i.

    xi2 and xi3 are cloud distances minus twice the sampling spacing.  A value
    of inf means no qualifying pair exists (then M = 0).
    """

    xi1: float
    xi2: float
    xi3: float
    M1: float
    M2: float
    M3: float
    eps: float
    spacing: float
    xi1_cloud: float = math.nan
    xi2_cloud: float = math.nan
    xi3_cloud: float = math.nan
    pairs: dict = field(default_factory=dict)
    argmin: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def M(self) -> dict:
        return {"2": self.M1, "3.1": self.M2, "3.2-far": self.M3}

    @property
    def valid(self) -> bool:
        return all(x > 0 for x in (self.xi1, self.xi2, self.xi3))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["valid"] = self.valid
        return d


@dataclass
class _Touch:
    """Which level-2 pieces meet: phi_u(A_l') vs A_l'' and phi_u(A_l) vs phi_u'(A_l')."""

    two: np.ndarray  # (N, P, P)
    three: np.ndarray  # (N, P, N, P)


def _touch_tables(sys: LinearCondensationSystem) -> _Touch:
    # In a valid zipper, level-2 pieces meet exactly when they are equal or consecutive.
    ch = build_chain(sys, 2, cap=math.inf)
    n, npos = sys.n_maps, sys.n_positions
    sub = np.zeros((n, npos), dtype=np.int64)
    top_lo = np.zeros(npos, dtype=np.int64)
    top_hi = np.zeros(npos, dtype=np.int64)
    first_letter = np.array([w[0] if w else 0 for w in ch.words])
    for piece, (w, pos) in enumerate(zip(ch.words, ch.positions)):
        if len(w) == 1:
            sub[w[0] - 1, pos] = piece
        elif not ch.is_map[piece]:
            top_lo[pos] = top_hi[pos] = piece
    for pos, (kind, i) in enumerate(sys.zipper):
        if kind == "M":
            idx = np.nonzero(first_letter == i)[0]
            top_lo[pos], top_hi[pos] = idx.min(), idx.max()
    two = (sub[:, :, None] <= top_hi[None, None, :] + 1) & (top_lo[None, None, :] <= sub[:, :, None] + 1)
    three = np.abs(sub[:, :, None, None] - sub[None, None, :, :]) <= 1
    return _Touch(two, three)


def touch_tables(sys: LinearCondensationSystem) -> _Touch:
    if "touch" not in sys._cache:
        sys._cache["touch"] = _touch_tables(sys)
    return sys._cache["touch"]


class _Cloud:
    def __init__(self, pts: np.ndarray):
        from scipy.spatial import cKDTree

        self.points = pts
        self.tree = cKDTree(pts)
        self.lo, self.hi = pts.min(axis=0), pts.max(axis=0)


def _box_gap(a: _Cloud, b: _Cloud) -> float:
    gap = np.maximum(np.maximum(a.lo - b.hi, b.lo - a.hi), 0.0)
    return float(np.sqrt((gap ** 2).sum()))


def _cloud_gap(a: _Cloud, b: _Cloud, cap: float) -> float:
    """min(cloud distance, cap), querying the smaller cloud against the larger."""
    small, big = (a, b) if len(a.points) <= len(b.points) else (b, a)
    pts = small.points
    if math.isfinite(cap):
        near = np.all((pts >= big.lo - cap) & (pts <= big.hi + cap), axis=1)
        pts = pts[near]
        if not len(pts):
            return cap
    d = big.tree.query(pts, k=1, distance_upper_bound=cap)[0]
    return float(min(d.min(), cap))


def _min_pair(pairs: list, clouds_a, clouds_b) -> tuple[float, object]:
    """Branch and bound over (key_a, key_b, label) triples, smallest bbox gap first."""
    order = sorted(pairs, key=lambda p: _box_gap(clouds_a[p[0]], clouds_b[p[1]]))
    best, arg = math.inf, None
    for ka, kb, label in order:
        if _box_gap(clouds_a[ka], clouds_b[kb]) >= best:
            break
        d = _cloud_gap(clouds_a[ka], clouds_b[kb], best)
        if d < best:
            best, arg = d, label
    return best, arg


def separation_constants(sys: LinearCondensationSystem, eps: float = 1e-3, k: int = 2,
                         validated: bool = False) -> SeparationConstants:
    """xi1 over component pairs, xi2 over disjoint (phi_u(A_l'), A_l''), xi3 over disjoint
    (phi_u(A_e), phi_u'(A_l)) with A_e the first or the last child."""
    if not validated:
        from .zipper import validate_zipper

        report = validate_zipper(sys, eps)
        if not report.passed:
            failed = [c for c in ("i", "ii", "iii") if not report.condition(c).passed]
            raise PreconditionError(f"zipper validation failed (conditions {', '.join(failed)})")
    diam = sys.bounding_region().diameter
    spacing = eps * diam
    notes = []
    n, npos = sys.n_maps, sys.n_positions
    touch = touch_tables(sys)

    # xi1: exact distances between components, cross-checked on clouds
    comp_pairs = list(itertools.combinations(range(sys.m), 2))
    if comp_pairs:
        dists = [sys.components[i].distance_to_component(sys.components[j]) for i, j in comp_pairs]
        xi1 = float(min(dists))
        i, j = comp_pairs[int(np.argmin(dists))]
        xi1_arg = f"C{i + 1}-C{j + 1}"
        samples = [c.sample(spacing) for c in sys.components]
        xi1_cloud = min(cloud_distance(samples[i], samples[j]) for i, j in comp_pairs)
        if abs(xi1_cloud - xi1) > 2 * spacing:
            notes.append(f"xi1 cloud cross-check off by {abs(xi1_cloud - xi1):.3e}")
    else:
        xi1, xi1_arg, xi1_cloud = math.inf, None, math.inf

    top = {p: _Cloud(sys.child_cloud(p, spacing, k)) for p in range(npos)}
    img = {}
    for u in range(n):
        phi = sys.maps[u]
        for p in range(npos):
            img[(u, p)] = _Cloud(phi(sys.child_cloud(p, spacing / phi.ratio, max(0, k - 1))))

    def label(pos):
        kind, i = sys.zipper[pos]
        return f"{kind}{i}"

    pairs2 = [((u, p1), p2, f"phi{u + 1}({label(p1)})-{label(p2)}")
              for u in range(n) for p1 in range(npos) for p2 in range(npos) if not touch.two[u, p1, p2]]
    xi2_cloud, xi2_arg = _min_pair(pairs2, img, top)

    ends = sorted({0, npos - 1})
    pairs3 = [((u, e), (v, p), f"phi{u + 1}({label(e)})-phi{v + 1}({label(p)})")
              for u in range(n) for e in ends for v in range(n) for p in range(npos)
              if not touch.three[u, e, v, p]]
    xi3_cloud, xi3_arg = _min_pair(pairs3, img, img)

    def lower(d):
        return d - 2 * spacing if math.isfinite(d) else math.inf

    xi2, xi3 = lower(xi2_cloud), lower(xi3_cloud)
    for name, xi in (("xi1", xi1), ("xi2", xi2), ("xi3", xi3)):
        if xi <= 0:
            notes.append(f"{name} lower bound {xi:.3e} is not positive: refine eps")
        elif math.isinf(xi):
            notes.append(f"{name}: no qualifying pair, M = 0")

    def inv(xi):
        if math.isinf(xi):
            return 0.0
        return 1.0 / xi if xi > 0 else math.inf

    return SeparationConstants(
        xi1, xi2, xi3, inv(xi1), inv(xi2), inv(xi3), eps, spacing,
        xi1_cloud, xi2_cloud, xi3_cloud,
        {"xi1": len(comp_pairs), "xi2": len(pairs2), "xi3": len(pairs3)},
        {"xi1": xi1_arg, "xi2": xi2_arg, "xi3": xi3_arg}, notes)


# ---------------------------------------------------------------- classification


@dataclass
class _Tables:
    is_map: np.ndarray  # (P,)
    map_at: np.ndarray  # (P,) 0-based map index, -1 for components
    rev: np.ndarray  # (N + 1,) last entry False, so map_at == -1 indexes it
    first: int
    last: int
    touch: _Touch
    combo: tuple | None = None


def _tables(sys: LinearCondensationSystem) -> _Tables:
    is_map = np.array([kind == "M" for kind, _ in sys.zipper])
    map_at = np.array([i - 1 if kind == "M" else -1 for kind, i in sys.zipper])
    rev = np.array(list(sys.reversed_maps) + [False])
    return _Tables(is_map, map_at, rev, 0, sys.n_positions - 1, touch_tables(sys))


def _orient(tb: _Tables, la, qa, lb, qb):
    """Rank and touching flag for z1 in the cylinder at la (child qa), z2 in the piece at lb."""
    d = lb - la
    rev_a = tb.rev[tb.map_at[la]]
    rev_b = tb.rev[tb.map_at[lb]]
    after = d == 1
    adj_end = np.where(after, np.where(rev_a, tb.first, tb.last), np.where(rev_a, tb.last, tb.first))
    adj_start = np.where(after, np.where(rev_b, tb.last, tb.first), np.where(rev_b, tb.first, tb.last))
    far = (np.abs(d) > 1) | (qa != adj_end)
    b_map = tb.is_map[lb]
    zero = ~b_map | (qb == adj_start)
    rank = np.where(far, _RANK["3.1"], np.where(zero, _RANK["3.2-zero"], _RANK["3.2-far"]))
    u = np.maximum(tb.map_at[la], 0)
    qa_ok, qb_ok = qa >= 0, qb >= 0
    t2 = tb.touch.two[u, np.maximum(qa, 0), lb]
    t3 = tb.touch.three[u, np.maximum(qa, 0), np.maximum(tb.map_at[lb], 0), np.maximum(qb, 0)]
    flag = ~qa_ok | (b_map & ~qb_ok)
    flag |= np.where(rank == _RANK["3.1"], t2, False)
    flag |= np.where(rank == _RANK["3.2-far"], t3, False)
    return rank, flag


def _combo_table(tb: _Tables) -> tuple[np.ndarray, np.ndarray]:
    """Rank and flag for every (l1, q1, l2, q2); q = -1 is stored at index 0."""
    npos = len(tb.is_map)
    l1, q1, l2, q2 = (g.ravel() for g in np.meshgrid(np.arange(npos), np.arange(-1, npos),
                                                     np.arange(npos), np.arange(-1, npos), indexing="ij"))
    m1, m2 = tb.is_map[l1], tb.is_map[l2]
    ra, fa = _orient(tb, l1, q1, l2, q2)
    rb, fb = _orient(tb, l2, q2, l1, q1)
    ra, rb = np.where(m1, ra, _NONE), np.where(m2, rb, _NONE)
    use_a = ra <= rb
    rank = np.where(m1 | m2, np.where(use_a, ra, rb), _RANK["unclassified"])
    flag = (m1 | m2) & np.where(use_a, fa, fb)
    rank = np.where(~m1 & ~m2 & (l1 != l2), _RANK["2"], rank)
    rank = np.where(~m1 & (l1 == l2), _RANK["1"], rank)
    return rank.astype(np.int8), flag


def _classify(cand: _Candidates, tb: _Tables, i1: np.ndarray, i2: np.ndarray):
    """Meet length, case rank, chosen rows and flags for node pairs (i1, i2)."""
    if tb.combo is None:
        tb.combo = _combo_table(tb)
    rank_tab, flag_tab = tb.combo
    side = len(tb.is_map) + 1
    size = len(i1)
    best_t = np.full(size, -1, dtype=np.int64)
    best_rank = np.full(size, _RANK["unclassified"], dtype=np.int8)
    best_key = np.zeros(size, dtype=np.int64)
    best_row = np.zeros(size, dtype=np.int64)
    width = cand.paths.shape[1]
    for a in (0, 1):
        r1 = cand.node_rows[i1, a]
        for b in (0, 1):
            r2 = cand.node_rows[i2, b]
            ok = (r1 >= 0) & (r2 >= 0)
            if not ok.any():
                continue
            s1, s2 = np.where(ok, r1, 0), np.where(ok, r2, 0)
            t = np.where(ok, _lcp(cand, s1, s2), -1)
            tt = np.maximum(t, 0)
            nxt = np.minimum(tt + 1, width - 1)
            key = ((cand.paths[s1, tt] * side + cand.paths[s1, nxt] + 1) * (side - 1)
                   + cand.paths[s2, tt]) * side + cand.paths[s2, nxt] + 1
            rank = np.where(ok, rank_tab[key], _RANK["unclassified"])
            better = (t > best_t) | ((t == best_t) & (rank < best_rank))
            best_t = np.where(better, t, best_t)
            best_rank = np.where(better, rank, best_rank)
            best_key = np.where(better, key, best_key)
            best_row = np.where(better, s1, best_row)
    return best_t, best_rank.astype(np.int64), best_row, flag_tab[best_key]


def classify_pair(sys: LinearCondensationSystem, z1: NodeAddress, z2: NodeAddress, k: int) -> str:
    """Case label of a single pair of k-level nodes."""
    ch = chain(sys, k)
    i1, i2 = ch.index_of(z1), ch.index_of(z2)
    _, rank, _, _ = _classify(candidates(ch), _tables(sys), np.array([i1]), np.array([i2]))
    return CASES[int(rank[0])]


# ---------------------------------------------------------------- modulus report

BLOCK = 500_000
BUCKETS = 5
CSV_FIELDS = ("i1", "i2", "z1", "z2", "z1_point", "z2_point", "distance", "f1", "f2", "quotient",
              "nu", "rho_nu", "case", "bound", "satisfied", "flagged")


def _fmt_word(w) -> str:
    return ".".join(str(x) for x in w) if w else "e"


def _fmt_node(a: NodeAddress) -> str:
    return f"{_fmt_word(a.word)}:{a.position}:{a.side}"


@dataclass
class ModulusReport:
    system: str
    k: int
    s: float
    constants: SeparationConstants
    records: list
    summary: dict

    @property
    def passed(self) -> bool:
        return bool(self.summary["passed"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\r\n")
        writer.writeheader()
        for rec in self.records:
            row = dict(rec)
            for key in ("distance", "f1", "f2", "quotient", "rho_nu", "bound"):
                row[key] = repr(float(row[key]))
            row["satisfied"] = "true" if rec["satisfied"] else "false"
            row["flagged"] = "true" if rec["flagged"] else "false"
            writer.writerow(row)
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"system": self.system, "k": self.k, "s": self.s,
                "constants": self.constants.to_dict(), "summary": self.summary}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default) + "\n"

    def write(self, csv_path, json_path=None) -> None:
        from .config import atomic_write

        atomic_write(csv_path, self.to_csv())
        if json_path is not None:
            atomic_write(json_path, self.to_json())


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def _finite(x: float):
    """JSON has no inf or nan; report them as strings."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


class _Evaluator:
    def __init__(self, ch: Chain, consts: SeparationConstants, s: float, flag_all: bool):
        sys = ch.system
        self.ch = ch
        self.cand = candidates(ch)
        self.tb = _tables(sys)
        self.s = s
        self.flag_all = flag_all
        self.M = np.array([0.0, 0.0, consts.M1, consts.M2, consts.M3, math.nan])

    def __call__(self, i1: np.ndarray, i2: np.ndarray) -> dict:
        ch = self.ch
        t, rank, row, flag = _classify(self.cand, self.tb, i1, i2)
        if self.flag_all:
            flag = np.ones_like(flag)
        df = np.abs(ch.f[i2] - ch.f[i1])
        dist = np.linalg.norm(ch.points[i2] - ch.points[i1], axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            quotient = np.where(dist > 0, df / dist, np.where(df > 0, math.inf, 0.0))
            rho = np.exp(self.cand.logr[row, t])
            bound = self.M[rank] * rho ** (self.s - 1.0)
            zero = rank <= _RANK["3.2-zero"]
            satisfied = np.where(zero, df == 0.0, quotient <= bound * (1 + 1e-12))
            tight = np.where(zero, np.where(df > 0, math.inf, 0.0),
                             np.where(bound > 0, quotient / bound, np.where(quotient > 0, math.inf, 0.0)))
        satisfied &= rank != _RANK["unclassified"]
        return {"i1": i1, "i2": i2, "t": t, "rank": rank, "row": row, "flag": flag, "df": df, "dist": dist,
                "quotient": quotient, "rho": rho, "bound": bound, "satisfied": satisfied, "tight": tight}


def _exhaustive_blocks(n: int, block: int):
    i = 0
    while i < n - 1:
        j, total = i, 0
        while j < n - 1 and total + (n - 1 - j) <= block or j == i:
            total += n - 1 - j
            j += 1
        rows = np.arange(i, j)
        counts = n - 1 - rows
        i1 = np.repeat(rows, counts)
        starts = np.cumsum(counts) - counts
        i2 = np.arange(len(i1)) - np.repeat(starts, counts) + i1 + 1
        yield i1, i2
        i = j


def _cylinder_ranges(ch: Chain, cand: _Candidates, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Node index ranges [lo, hi] of the cylinders phi_w, |w| = depth, indexed by word rank."""
    n = ch.system.n_maps
    col = cand.codes[::2, depth - 1]
    lo = np.full(n ** depth, -1, dtype=np.int64)
    hi = np.full(n ** depth, -1, dtype=np.int64)
    valid = np.nonzero(col >= 0)[0]
    codes = col[valid]
    lo[codes[::-1]] = valid[::-1]  # last write wins: keep the first piece
    hi[codes] = valid + 1
    return lo, hi


def _stratum_sizes(sys: LinearCondensationSystem, k: int) -> list[int]:
    """Exact number of node pairs whose meet word has length j, j = 0..k."""
    n = sys.n_maps
    nodes_at = [piece_count(sys.m, n, L) + 1 if L > 0 else 2 for L in range(k + 1)]

    def pairs(L):
        return math.comb(nodes_at[L], 2) if L >= 0 else 0

    within = [pairs(L) - (n * pairs(L - 1) if L > 0 else 0) for L in range(k + 1)]
    return [n ** j * within[k - j] for j in range(k + 1)]


def _stratified_blocks(ch: Chain, cand: _Candidates, budget: int, seed: int):
    """Pairs stratified by meet length: small strata in full, the rest sampled uniformly."""
    sys, k = ch.system, ch.k
    n = sys.n_maps
    sizes = _stratum_sizes(sys, k)
    rng = np.random.default_rng(seed)
    quota = {}
    remaining, open_ = budget, list(range(k + 1))
    while open_:
        share = remaining // len(open_)
        small = [j for j in open_ if sizes[j] <= share]
        if not small:
            for j in open_:
                quota[j] = share
            break
        for j in small:
            quota[j] = sizes[j]
            remaining -= sizes[j]
            open_.remove(j)
    info = []
    for j in range(k + 1):
        if j == 0:
            lo, hi = np.array([0]), np.array([ch.n_nodes - 1])
        else:
            lo, hi = _cylinder_ranges(ch, cand, j)
        exhaustive = quota[j] >= sizes[j]
        info.append({"meet_length": j, "pairs": sizes[j], "evaluated": min(quota[j], sizes[j]),
                     "exhaustive": exhaustive})
        if exhaustive:
            for w in range(len(lo)):
                m = hi[w] - lo[w] + 1
                a, b = np.triu_indices(m, 1)
                i1, i2 = a + lo[w], b + lo[w]
                keep = _meet_length(cand, i1, i2) == j
                if keep.any():
                    yield j, i1[keep], i2[keep]
            continue
        need = quota[j]
        while need > 0:
            draw = min(BLOCK, 2 * need + 16)
            w = rng.integers(0, n ** j, draw) if j else np.zeros(draw, dtype=np.int64)
            span = hi[w] - lo[w] + 1
            a = (rng.random(draw) * span).astype(np.int64)
            b = (rng.random(draw) * span).astype(np.int64)
            i1, i2 = np.minimum(a, b) + lo[w], np.maximum(a, b) + lo[w]
            keep = (i1 != i2)
            i1, i2 = i1[keep], i2[keep]
            keep = _meet_length(cand, i1, i2) == j
            i1, i2 = i1[keep][:need], i2[keep][:need]
            need -= len(i1)
            yield j, i1, i2
    _stratified_blocks.info = info


def _meet_length(cand: _Candidates, i1: np.ndarray, i2: np.ndarray) -> np.ndarray:
    best = np.full(len(i1), -1, dtype=np.int64)
    for a in (0, 1):
        r1 = cand.node_rows[i1, a]
        for b in (0, 1):
            r2 = cand.node_rows[i2, b]
            ok = (r1 >= 0) & (r2 >= 0)
            t = _lcp(cand, np.where(ok, r1, 0), np.where(ok, r2, 0))
            best = np.maximum(best, np.where(ok, t, -1))
    return best


class _Accumulator:
    def __init__(self, quota: int, cap: int, ratio: float, s: float):
        self.quota, self.cap = quota, cap
        self.ratio, self.s = ratio, s
        self.top = {r: (np.empty(0), np.empty(0, np.int64), np.empty(0, np.int64)) for r in range(len(CASES))}
        self.bad = []
        self.n_bad = 0
        self.counts = np.zeros(len(CASES), dtype=np.int64)
        self.violations = np.zeros(len(CASES), dtype=np.int64)
        self.flagged_violations = 0
        self.flagged = 0
        self.zero_nonzero = 0
        self.max_tight = np.zeros(len(CASES))
        self.sup_bucket = np.zeros(BUCKETS)
        self.n_bucket = np.zeros(BUCKETS, dtype=np.int64)
        self.sup_quotient = 0.0
        self.evaluated = 0
        self.by_length = {}

    def add(self, r: dict, length: int | None = None):
        self.evaluated += len(r["i1"])
        rank, flag, ok = r["rank"], r["flag"], r["satisfied"]
        self.counts += np.bincount(rank, minlength=len(CASES))
        bad = ~ok & ~flag
        self.violations += np.bincount(rank[bad], minlength=len(CASES))
        self.flagged += int(flag.sum())
        self.flagged_violations += int((~ok & flag).sum())
        self.zero_nonzero += int(((rank <= _RANK["3.2-zero"]) & (r["df"] != 0) & ~flag).sum())
        if len(rank):
            self.sup_quotient = max(self.sup_quotient, float(r["quotient"].max()))
        for j in range(1, BUCKETS + 1):
            mask = r["rho"] <= self.ratio ** j * (1 + 1e-9)
            self.n_bucket[j - 1] += int(mask.sum())
            if mask.any():
                self.sup_bucket[j - 1] = max(self.sup_bucket[j - 1], float(r["quotient"][mask].max()))
        if length is not None:
            self.by_length[length] = self.by_length.get(length, 0) + len(rank)
        idx = np.nonzero(bad)[0]
        self.n_bad += len(idx)
        room = self.cap - sum(len(b[0]) for b in self.bad)
        if room > 0 and len(idx):
            idx = idx[:room]
            self.bad.append((r["i1"][idx], r["i2"][idx]))
        for c in range(len(CASES)):
            m = rank == c
            if not m.any():
                continue
            tight = r["tight"][m]
            self.max_tight[c] = max(self.max_tight[c], float(tight.max()))
            old_t, old_1, old_2 = self.top[c]
            tt = np.concatenate([old_t, tight])
            a1 = np.concatenate([old_1, r["i1"][m]])
            a2 = np.concatenate([old_2, r["i2"][m]])
            if len(tt) > self.quota:
                keep = np.argpartition(-tt, self.quota - 1)[:self.quota]
                tt, a1, a2 = tt[keep], a1[keep], a2[keep]
            self.top[c] = (tt, a1, a2)

    def retained(self) -> tuple[np.ndarray, np.ndarray]:
        parts1 = [self.top[c][1] for c in self.top] + [b[0] for b in self.bad]
        parts2 = [self.top[c][2] for c in self.top] + [b[1] for b in self.bad]
        i1, i2 = np.concatenate(parts1), np.concatenate(parts2)
        pairs = np.unique(np.stack([i1, i2], axis=1), axis=0) if len(i1) else np.empty((0, 2), np.int64)
        return pairs[:, 0], pairs[:, 1]


def modulus_report(sys: LinearCondensationSystem, weights: MeasureWeights | None = None, k: int = 6,
                   pair_budget: int | None = 5_000_000, cap_records: int = 100_000, threads: int = 1,
                   seed: int = 0, eps: float = 1e-3, constants: SeparationConstants | None = None,
                   validated: bool = False, piece_cap: int = DEFAULT_PIECE_CAP) -> ModulusReport:
    """Difference quotients of f over pairs of k-level nodes, checked against the case bounds.

    All pairs are evaluated when their number is within ``pair_budget`` (None means no
    limit); otherwise pairs are sampled per meet-word length.  The CSV keeps the tightest
    records of each case and every violation, at most ``cap_records`` rows.
    """
    from .dimension import similarity_dimension
    from .zipper import check_theorem_hypotheses

    if constants is None:
        constants = separation_constants(sys, eps, validated=validated)
    s = similarity_dimension(sys.ratios)
    ch = chain(sys, k, cap=piece_cap) if weights is None else build_chain(sys, k, weights, piece_cap)
    hyp = check_theorem_hypotheses(sys, "T2")
    notes = []
    if not hyp.ends_are_components:
        notes.append("end pieces are not components: every record is flagged")
    assert_bounds = s > 1.0
    if not assert_bounds:
        notes.append(f"s = {s:.6g} <= 1: bounds are reported but not asserted")
    if not constants.valid:
        notes.append("separation constants are not positive at this resolution")
    ev = _Evaluator(ch, constants, s, not hyp.ends_are_components)
    ratio = max(sys.ratios)
    acc = _Accumulator(max(1, cap_records // len(CASES)), cap_records, ratio, s)
    total = math.comb(ch.n_nodes, 2)
    exhaustive = pair_budget is None or total <= pair_budget
    strata = None
    if exhaustive:
        blocks = ((None, i1, i2) for i1, i2 in _exhaustive_blocks(ch.n_nodes, BLOCK))
    else:
        blocks = _stratified_blocks(ch, candidates(ch), int(pair_budget), seed)

    def run(item):
        j, i1, i2 = item
        return j, ev(i1, i2)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            for j, r in pool.map(run, blocks):
                acc.add(r, j)
    else:
        for item in blocks:
            j, r = run(item)
            acc.add(r, j)
    if not exhaustive:
        strata = _stratified_blocks.info

    i1, i2 = acc.retained()
    records = _records(ch, ev(i1, i2)) if len(i1) else []
    bucket_bound = max(constants.M1, constants.M2, constants.M3)
    buckets = []
    for j in range(1, BUCKETS + 1):
        bound = bucket_bound * ratio ** (j * (s - 1.0))
        sup = float(acc.sup_bucket[j - 1])
        buckets.append({"j": j, "rho_at_most": ratio ** j, "pairs": int(acc.n_bucket[j - 1]),
                        "sup_quotient": sup, "bound": _finite(bound), "satisfied": bool(sup <= bound)})
    # buckets finer than the level hold no pairs and carry no information
    sups = [b["sup_quotient"] for b in buckets if b["pairs"]]
    decreasing = all(b < a for a, b in zip(sups, sups[1:]))
    violations = int(acc.violations.sum())
    passed = (assert_bounds and constants.valid and violations == 0 and acc.zero_nonzero == 0
              and all(b["satisfied"] for b in buckets) and decreasing)
    summary = {
        "mode": "exhaustive" if exhaustive else "stratified",
        "nodes": ch.n_nodes,
        "pairs_total": total,
        "pairs_evaluated": acc.evaluated,
        "case_counts": {c: int(n) for c, n in zip(CASES, acc.counts)},
        "violations": {c: int(n) for c, n in zip(CASES, acc.violations)},
        "violations_total": violations,
        "zero_case_nonzero": acc.zero_nonzero,
        "flagged": acc.flagged,
        "flagged_violations": acc.flagged_violations,
        "max_tightness": {c: _finite(x) for c, x in zip(CASES, acc.max_tight)},
        "sup_quotient": acc.sup_quotient,
        "buckets": buckets,
        "buckets_decreasing": decreasing,
        "bounds_asserted": assert_bounds,
        "records_written": len(records),
        "records_truncated": acc.n_bad > cap_records,
        "strata": strata,
        "weights": "similarity-measure weights rho^s",
        "notes": notes,
        "passed": bool(passed),
    }
    return ModulusReport(sys.name, k, s, constants, records, summary)


def _records(ch: Chain, r: dict) -> list[dict]:
    out = []
    for n in range(len(r["i1"])):
        i1, i2 = int(r["i1"][n]), int(r["i2"][n])
        t = int(r["t"][n])
        out.append({
            "i1": i1, "i2": i2,
            "z1": _fmt_node(ch.address(i1)), "z2": _fmt_node(ch.address(i2)),
            "z1_point": " ".join(repr(float(x)) for x in ch.points[i1]),
            "z2_point": " ".join(repr(float(x)) for x in ch.points[i2]),
            "distance": r["dist"][n], "f1": ch.f[i1], "f2": ch.f[i2], "quotient": r["quotient"][n],
            "nu": _fmt_word(_word_of_row(ch, int(r["row"][n]))[:t]), "rho_nu": r["rho"][n],
            "case": CASES[int(r["rank"][n])], "bound": r["bound"][n],
            "satisfied": bool(r["satisfied"][n]), "flagged": bool(r["flag"][n]),
        })
    return out
