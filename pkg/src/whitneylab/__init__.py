"""Linear IFS with condensation, zipper decompositions and Whitney functions.

The package builds attractors of iterated function systems with condensation,
checks their zipper structure, evaluates the Whitney function on k-level nodes
and verifies its modulus of continuity pair by pair.
"""

from .arclift import (LevelDecomposition, LiftReport, SelfSimilarArcIFS, inner_dimension, lift,
                      order_cylinders, smallest_whitney_level, validate_arc)
from .builtins import BUILTINS, FIXTURES, system
from .config import SystemConfig, build, dumps_config, from_system, load_config, loads_config, save_config
from .dimension import MeasureWeights, cylinder_weight, moran_value, similarity_dimension, solve_moran
from .errors import (ConfigError, DegenerateError, DomainError, GeometryError, LevelTooSmallError,
                     NotFoundError, PreconditionError, ResourceError, ShapeError,
                     UnsupportedDimensionError, WhitneyLabError)
from .geometry import Similitude, compose_word, word_ratio
from .render import RenderSpec, render_svg
from .systems import (Box, CondensationComponent, CondensationSystem, LinearCondensationSystem, Piece, PieceSet,
                      approximate_attractor, approximate_inner_attractor, piece_count)
from .whitney import (Chain, ModulusReport, NodeAddress, PointValue, SeparationConstants, build_chain,
                      classify_pair, f_at_node, f_at_point, meet_word, modulus_report, nodes,
                      separation_constants)
from .zipper import (HataGraph, HypothesisReport, ValidationReport, check_theorem_hypotheses, hata_graph,
                     is_connected, validate_zipper)

__version__ = "0.1.0"

__all__ = [
    "BUILTINS",
    "Box",
    "Chain",
    "CondensationComponent",
    "CondensationSystem",
    "ConfigError",
    "DegenerateError",
    "DomainError",
    "FIXTURES",
    "GeometryError",
    "HataGraph",
    "HypothesisReport",
    "LevelDecomposition",
    "LevelTooSmallError",
    "LiftReport",
    "LinearCondensationSystem",
    "MeasureWeights",
    "ModulusReport",
    "NodeAddress",
    "NotFoundError",
    "Piece",
    "PieceSet",
    "PointValue",
    "PreconditionError",
    "RenderSpec",
    "ResourceError",
    "SelfSimilarArcIFS",
    "SeparationConstants",
    "ShapeError",
    "Similitude",
    "SystemConfig",
    "UnsupportedDimensionError",
    "ValidationReport",
    "WhitneyLabError",
    "approximate_attractor",
    "approximate_inner_attractor",
    "build",
    "build_chain",
    "check_theorem_hypotheses",
    "classify_pair",
    "compose_word",
    "cylinder_weight",
    "dumps_config",
    "f_at_node",
    "f_at_point",
    "from_system",
    "hata_graph",
    "inner_dimension",
    "is_connected",
    "lift",
    "load_config",
    "loads_config",
    "meet_word",
    "modulus_report",
    "moran_value",
    "nodes",
    "order_cylinders",
    "piece_count",
    "render_svg",
    "save_config",
    "separation_constants",
    "similarity_dimension",
    "smallest_whitney_level",
    "solve_moran",
    "system",
    "validate_arc",
    "validate_zipper",
    "word_ratio",
]
