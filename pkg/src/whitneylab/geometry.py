"""Similitudes in R^d and the word calculus on top of them.

Words are tuples of 1-based map indices; the empty tuple is the empty word.
``compose_word(maps, (i, j))`` is ``maps[i-1] o maps[j-1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, ShapeError

Word = tuple

# word_ratio switches to log-domain products beyond this length
LOG_DOMAIN_LENGTH = 64


def _rotation(angle: float, reflect: bool) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    if reflect:
        rot = rot @ np.diag([1.0, -1.0])
    return rot


@dataclass(frozen=True)
class Similitude:
    """x -> ratio * O x + translation.

    In the plane O is kept as (angle, reflect) meaning R(angle) @ diag(1, -1)**reflect,
    so long compositions only add angles. Other dimensions pass ``orthogonal``
    explicitly (or nothing, for O = I).
    """

    ratio: float
    translation: tuple
    angle: float = 0.0
    reflect: bool = False
    orthogonal: tuple | None = None
    _linear: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = tuple(float(v) for v in np.ravel(self.translation))
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "ratio", float(self.ratio))
        object.__setattr__(self, "angle", float(self.angle))
        object.__setattr__(self, "reflect", bool(self.reflect))
        if not (self.ratio > 0.0 and self.ratio <= 1.0):
            raise DomainError(f"similitude ratio must lie in (0, 1], got {self.ratio}")
        d = len(t)
        if d < 1:
            raise ShapeError("translation must have at least one coordinate")
        if self.orthogonal is not None:
            o = np.asarray(self.orthogonal, dtype=float)
            if o.shape != (d, d):
                raise ShapeError(f"orthogonal part has shape {o.shape}, expected {(d, d)}")
            if not np.allclose(o.T @ o, np.eye(d), atol=1e-12):
                raise DomainError("orthogonal part is not orthogonal")
            object.__setattr__(self, "orthogonal", tuple(tuple(float(x) for x in row) for row in o))
        elif d != 2 and (self.angle != 0.0 or self.reflect):
            raise ShapeError("angle/reflect form is only available in the plane")
        object.__setattr__(self, "_linear", self.ratio * self.orthogonal_matrix)

    @property
    def dim(self) -> int:
        return len(self.translation)

    @property
    def orthogonal_matrix(self) -> np.ndarray:
        if self.orthogonal is not None:
            return np.array(self.orthogonal, dtype=float)
        if self.dim == 2:
            return _rotation(self.angle, self.reflect)
        return np.eye(self.dim)

    @property
    def linear(self) -> np.ndarray:
        """ratio * O as a fresh array."""
        return self._linear.copy()

    @property
    def offset(self) -> np.ndarray:
        return np.array(self.translation)

    @property
    def preserves_orientation(self) -> bool:
        return bool(np.linalg.det(self._linear) > 0)

    @classmethod
    def identity(cls, dim: int = 2) -> "Similitude":
        return cls(1.0, (0.0,) * dim)

    @classmethod
    def from_matrix(cls, matrix, translation) -> "Similitude":
        """Build from a linear part rho*O; in the plane it is stored as angle/reflect."""
        m = np.asarray(matrix, dtype=float)
        d = m.shape[0]
        if m.shape != (d, d):
            raise ShapeError(f"matrix must be square, got {m.shape}")
        ratio = abs(np.linalg.det(m)) ** (1.0 / d)
        o = m / ratio
        if d == 2:
            reflect = np.linalg.det(o) < 0
            if reflect:
                o = o @ np.diag([1.0, -1.0])
            return cls(ratio, translation, math.atan2(o[1, 0], o[0, 0]), bool(reflect))
        return cls(ratio, translation, orthogonal=o)

    def __call__(self, points) -> np.ndarray:
        return apply(self, points)

    def compose(self, other: "Similitude") -> "Similitude":
        """self o other."""
        if self.dim != other.dim:
            raise ShapeError(f"cannot compose maps of dimension {self.dim} and {other.dim}")
        t = self._linear @ other.offset + self.offset
        ratio = self.ratio * other.ratio
        if self.orthogonal is None and other.orthogonal is None:
            if self.dim != 2:
                return Similitude(ratio, t)
            sign = -1.0 if self.reflect else 1.0
            angle = math.remainder(self.angle + sign * other.angle, 2 * math.pi)
            return Similitude(ratio, t, angle, self.reflect != other.reflect)
        o = self.orthogonal_matrix @ other.orthogonal_matrix
        return Similitude(ratio, t, orthogonal=o)

    __matmul__ = compose

    def fixed_point(self) -> np.ndarray:
        a = np.eye(self.dim) - self._linear
        return np.linalg.solve(a, self.offset)


def apply(map: Similitude, p) -> np.ndarray:
    """Apply a similitude to one point (shape (d,)) or a batch (shape (n, d))."""
    arr = np.asarray(p, dtype=float)
    if arr.shape[-1:] != (map.dim,):
        raise ShapeError(f"point of shape {arr.shape} does not match map dimension {map.dim}")
    return arr @ map._linear.T + map.offset


def _check_word(n_maps: int, w: Sequence[int]) -> None:
    for letter in w:
        if not 1 <= letter <= n_maps:
            raise IndexError(f"letter {letter} outside 1..{n_maps}")


def compose_word(maps: Sequence[Similitude], w: Word) -> Similitude:
    _check_word(len(maps), w)
    if not maps:
        raise ValueError("empty map list")
    result = Similitude.identity(maps[0].dim)
    for letter in w:
        result = result.compose(maps[letter - 1])
    return result


def word_ratio(maps: Sequence[Similitude], w: Word) -> float:
    _check_word(len(maps), w)
    if len(w) > LOG_DOMAIN_LENGTH:
        return math.exp(math.fsum(math.log(maps[i - 1].ratio) for i in w))
    return math.prod(maps[i - 1].ratio for i in w)


def stack_maps(maps: Sequence[Similitude]) -> tuple[np.ndarray, np.ndarray]:
    """Linear parts (N, d, d) and offsets (N, d) of a map list."""
    lin = np.stack([m._linear for m in maps])
    off = np.stack([m.offset for m in maps])
    return lin, off


def expand_level(lin: np.ndarray, off: np.ndarray, maps_lin: np.ndarray, maps_off: np.ndarray):
    """Compose every word map with every generator, children of a parent kept adjacent.

    With parents in lexicographic order the result is lexicographic too.
    """
    n, nmaps = len(lin), len(maps_lin)
    new_lin = np.einsum("pij,cjk->pcik", lin, maps_lin).reshape(n * nmaps, *lin.shape[1:])
    new_off = (np.einsum("pij,cj->pci", lin, maps_off) + off[:, None, :]).reshape(n * nmaps, -1)
    return new_lin, new_off


def level_words(n_maps: int, k: int) -> np.ndarray:
    """All words of length k as an (n_maps**k, k) array of 1-based letters, lexicographic."""
    if k == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices((n_maps,) * k).reshape(k, -1).T
    return grids + 1


def level_maps(maps: Sequence[Similitude], k: int):
    """Linear parts, offsets and ratios of phi_w for every |w| = k, lexicographic."""
    d = maps[0].dim
    lin = np.eye(d)[None]
    off = np.zeros((1, d))
    mlin, moff = stack_maps(maps)
    logr = np.zeros(1)
    mlog = np.log([m.ratio for m in maps])
    for _ in range(k):
        lin, off = expand_level(lin, off, mlin, moff)
        logr = (logr[:, None] + mlog[None, :]).ravel()
    return lin, off, np.exp(logr)


def transform_points(lin: np.ndarray, off: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Apply many maps to one point set: result (n_maps, n_pts, d)."""
    return np.einsum("mij,pj->mpi", lin, pts) + off[:, None, :]
