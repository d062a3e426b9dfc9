"""JSON system configs: parsing with complete error lists, serialization, round trip."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, WhitneyLabError
from .geometry import Similitude
from .systems import CondensationComponent, LinearCondensationSystem

VERSION = "whitney-lab/1"
KINDS = ("linear", "arc")


@dataclass(frozen=True)
class ComponentConfig:
    label: int
    shape: str
    vertices: tuple
    a: tuple
    b: tuple


@dataclass(frozen=True)
class MapConfig:
    ratio: float
    translation: tuple
    angle: float = 0.0
    reflect: bool = False
    matrix: tuple | None = None  # orthogonal part, for d != 2

    def to_similitude(self) -> Similitude:
        if self.matrix is not None:
            return Similitude(self.ratio, self.translation, orthogonal=self.matrix)
        return Similitude(self.ratio, self.translation, self.angle, self.reflect)

    @classmethod
    def from_similitude(cls, m: Similitude) -> "MapConfig":
        return cls(m.ratio, tuple(m.translation), m.angle, m.reflect, m.orthogonal)


@dataclass(frozen=True)
class SystemConfig:
    name: str
    kind: str
    dimension: int
    maps: tuple
    a: tuple
    b: tuple
    components: tuple = ()
    zipper: tuple = ()
    orientation: tuple = ()
    eps: float = 1e-3
    level: int = 5
    version: str = VERSION

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def n_maps(self) -> int:
        return len(self.maps)


# ---------------------------------------------------------------- to/from dicts

def _tup(v):
    return tuple(_tup(x) for x in v) if isinstance(v, (list, tuple)) else v


def config_to_dict(cfg: SystemConfig) -> dict:
    maps = []
    for m in cfg.maps:
        entry = {"ratio": m.ratio, "translation": list(m.translation)}
        if m.matrix is not None:
            entry["matrix"] = [list(r) for r in m.matrix]
        else:
            entry["angle"] = m.angle
            entry["reflect"] = m.reflect
        maps.append(entry)
    out = {
        "version": cfg.version,
        "name": cfg.name,
        "kind": cfg.kind,
        "dimension": cfg.dimension,
        "endpoints": {"a": list(cfg.a), "b": list(cfg.b)},
        "components": [
            {"label": c.label, "shape": c.shape, "vertices": [list(v) for v in c.vertices],
             "a": list(c.a), "b": list(c.b)}
            for c in cfg.components
        ],
        "maps": maps,
        "zipper": list(cfg.zipper),
        "orientation": list(cfg.orientation),
        "tolerances": {"eps": cfg.eps, "level": cfg.level},
    }
    return out


class _Collector:
    def __init__(self):
        self.errors = []

    def get(self, obj, key, where, kind=None, default=...):
        if not isinstance(obj, dict) or key not in obj:
            if default is not ...:
                return default
            self.errors.append(f"{where}.{key}: missing")
            return None
        val = obj[key]
        if kind is not None and not _is_kind(val, kind):
            self.errors.append(f"{where}.{key}: expected {kind}, got {type(val).__name__}")
            return None
        return val

    def point(self, obj, key, where, dim):
        val = self.get(obj, key, where, "list")
        if val is None:
            return None
        if not all(_is_kind(x, "number") for x in val):
            self.errors.append(f"{where}.{key}: coordinates must be numbers")
            return None
        if dim is not None and len(val) != dim:
            self.errors.append(f"{where}.{key}: expected {dim} coordinates, got {len(val)}")
            return None
        return tuple(float(x) for x in val)


def _is_kind(val, kind) -> bool:
    if kind == "number":
        return isinstance(val, (int, float)) and not isinstance(val, bool)
    if kind == "int":
        return isinstance(val, int) and not isinstance(val, bool)
    if kind == "list":
        return isinstance(val, list)
    if kind == "dict":
        return isinstance(val, dict)
    if kind == "str":
        return isinstance(val, str)
    if kind == "bool":
        return isinstance(val, bool)
    raise ValueError(kind)


def config_from_dict(data: dict) -> SystemConfig:
    """Validate a decoded config; every problem found is reported at once."""
    col = _Collector()
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    version = col.get(data, "version", "config", "str")
    if version is not None and version != VERSION:
        col.errors.append(f"config.version: expected {VERSION!r}, got {version!r}")
    name = col.get(data, "name", "config", "str", default="unnamed")
    kind = col.get(data, "kind", "config", "str", default="linear")
    if kind not in KINDS:
        col.errors.append(f"config.kind: expected one of {KINDS}, got {kind!r}")
    dim = col.get(data, "dimension", "config", "int", default=2)
    if dim is not None and dim < 1:
        col.errors.append("config.dimension: must be >= 1")
        dim = None
    ends = col.get(data, "endpoints", "config", "dict")
    a = col.point(ends, "a", "config.endpoints", dim) if ends is not None else None
    b = col.point(ends, "b", "config.endpoints", dim) if ends is not None else None

    maps = []
    for i, entry in enumerate(col.get(data, "maps", "config", "list") or [], 1):
        where = f"config.maps[{i}]"
        ratio = col.get(entry, "ratio", where, "number")
        if ratio is not None and not 0.0 < ratio < 1.0:
            col.errors.append(f"{where}.ratio: must lie in (0, 1), got {ratio}")
            ratio = None
        t = col.point(entry, "translation", where, dim)
        matrix = col.get(entry, "matrix", where, "list", default=None)
        angle = col.get(entry, "angle", where, "number", default=0.0)
        reflect = col.get(entry, "reflect", where, "bool", default=False)
        if matrix is not None:
            matrix = _tup(matrix)
        if ratio is not None and t is not None:
            maps.append(MapConfig(float(ratio), t, float(angle or 0.0), bool(reflect), matrix))
    if not maps and not any(e.startswith("config.maps") for e in col.errors):
        col.errors.append("config.maps: at least one map is required")

    comps = []
    for j, entry in enumerate(col.get(data, "components", "config", "list", default=[]) or [], 1):
        where = f"config.components[{j}]"
        label = col.get(entry, "label", where, "int", default=j)
        shape = col.get(entry, "shape", where, "str")
        verts = col.get(entry, "vertices", where, "list")
        ca = col.point(entry, "a", where, dim)
        cb = col.point(entry, "b", where, dim)
        if verts is not None:
            if not all(isinstance(v, list) and len(v) == dim for v in verts):
                col.errors.append(f"{where}.vertices: each vertex needs {dim} coordinates")
                verts = None
        if None not in (shape, verts, ca, cb):
            comps.append(ComponentConfig(label, shape, _tup(verts), ca, cb))

    zipper = tuple(col.get(data, "zipper", "config", "list", default=[]) or [])
    orientation = tuple(col.get(data, "orientation", "config", "list", default=[]) or [])
    tol = col.get(data, "tolerances", "config", "dict", default={})
    eps = col.get(tol, "eps", "config.tolerances", "number", default=1e-3)
    level = col.get(tol, "level", "config.tolerances", "int", default=5)

    if kind == "linear":
        n_comp = len(col.get(data, "components", "config", "list", default=[]) or [])
        if n_comp < 2:
            col.errors.append(f"config.components: need m >= 2 components, got {n_comp}")
        n_maps = len(data.get("maps", []) or []) if isinstance(data.get("maps"), list) else 0
        expected = sorted([f"C{j}" for j in range(1, n_comp + 1)] + [f"M{i}" for i in range(1, n_maps + 1)])
        if sorted(str(z).upper() for z in zipper) != expected:
            col.errors.append("config.zipper: not a rearrangement of the components and maps")
    if orientation and len(orientation) != len(maps):
        col.errors.append(f"config.orientation: {len(orientation)} flags for {len(maps)} maps")
    if col.errors:
        raise ConfigError(col.errors)
    cfg = SystemConfig(name=name, kind=kind, dimension=dim, maps=tuple(maps), a=a, b=b,
                       components=tuple(comps), zipper=tuple(str(z).upper() for z in zipper),
                       orientation=tuple(bool(o) for o in orientation), eps=float(eps),
                       level=int(level), version=version)
    # semantic checks that need geometry (endpoints on shapes, m >= 2, contractivity)
    try:
        build(cfg)
    except ConfigError:
        raise
    except WhitneyLabError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


# ---------------------------------------------------------------- files

def loads_config(text: str) -> SystemConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(data)


def dumps_config(cfg: SystemConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"


def load_config(path) -> SystemConfig:
    """Load a config file, or a built-in by name (``whitney-1935``, ``koch`` ...)."""
    from . import builtins

    p = Path(path)
    if not p.exists() and str(path) in builtins.BUILTINS:
        return builtins.get(str(path))
    if not p.exists() and p.stem in builtins.BUILTINS and p.suffix == ".json":
        return builtins.get(p.stem)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return loads_config(text)


def atomic_write(path, data, mode: str = "w") -> None:
    """Write via a temp file in the same directory and rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, encoding=None if "b" in mode else "utf-8", newline="" if "b" not in mode else None) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_config(cfg: SystemConfig, path) -> None:
    atomic_write(path, dumps_config(cfg))


# ---------------------------------------------------------------- systems

def build(cfg: SystemConfig):
    """The LinearCondensationSystem or SelfSimilarArcIFS described by a config."""
    maps = [m.to_similitude() for m in cfg.maps]
    if cfg.kind == "arc":
        from .arclift import SelfSimilarArcIFS

        return SelfSimilarArcIFS(tuple(maps), cfg.a, cfg.b, cfg.orientation or (False,) * len(maps), cfg.name)
    comps = [CondensationComponent(c.shape, c.vertices, c.a, c.b, c.label) for c in cfg.components]
    return LinearCondensationSystem(tuple(comps), tuple(maps), cfg.a, cfg.b, cfg.zipper,
                                    cfg.orientation, cfg.name)


def from_system(system, eps: float = 1e-3, level: int = 5) -> SystemConfig:
    from .arclift import SelfSimilarArcIFS

    maps = tuple(MapConfig.from_similitude(m) for m in system.maps)
    if isinstance(system, SelfSimilarArcIFS):
        return SystemConfig(system.name, "arc", system.dim, maps, tuple(system.a), tuple(system.b),
                            orientation=tuple(system.reversed_maps), eps=eps, level=level)
    comps = tuple(ComponentConfig(c.label, c.shape, c.vertices, c.start, c.end) for c in system.components)
    zipper = tuple(f"{k}{i}" for k, i in system.zipper)
    return SystemConfig(system.name, "linear", system.dim, maps, tuple(system.a), tuple(system.b),
                        comps, zipper, tuple(system.reversed_maps), eps, level)
