"""Draw the linear built-ins at a few levels as SVG files."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

from _common import parse

from whitneylab import builtins
from whitneylab.config import atomic_write
from whitneylab.render import RenderSpec, count_elements, render_svg

log = logging.getLogger("render")


@dataclass
class RenderConfig:
    systems: list = field(default_factory=lambda: ["whitney-1935", "whitney-rhombus", "diag-toy", "koch"])
    levels: list = field(default_factory=lambda: [1, 2, 3, 4])
    color_by: str = "kind"
    size: int = 800
    out_dir: str = "figures"


def run(cfg: RenderConfig) -> list[Path]:
    written = []
    for name in cfg.systems:
        system = builtins.system(name)
        for k in cfg.levels:
            svg = render_svg(system, RenderSpec(level=k, size=cfg.size, color_by=cfg.color_by))
            path = Path(cfg.out_dir) / f"{name}-k{k}.svg"
            atomic_write(path, svg)
            log.info("%s: %d pieces", path, count_elements(svg))
            written.append(path)
    return written


if __name__ == "__main__":
    run(parse(RenderConfig, __doc__))
