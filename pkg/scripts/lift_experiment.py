"""Lift each arc built-in, then validate and check the lifted system."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

from _common import dump, parse

from whitneylab import builtins
from whitneylab.arclift import interior_separation, lift, smallest_whitney_level
from whitneylab.config import atomic_write, from_system, save_config
from whitneylab.errors import NotFoundError
from whitneylab.whitney import modulus_report
from whitneylab.zipper import check_theorem_hypotheses, validate_zipper

log = logging.getLogger("lift")


@dataclass
class LiftConfig:
    arcs: list = field(default_factory=lambda: ["koch", "tent", "tent-reversed", "segment"])
    kmax: int = 5
    eps: float = 1e-3
    modulus_level: int = 4
    pair_budget: int | None = 1_000_000
    out_dir: str = "results"


def run(cfg: LiftConfig) -> dict:
    out = {}
    for name in cfg.arcs:
        arc = builtins.system(name)
        try:
            k, d, rep = smallest_whitney_level(arc, cfg.kmax)
        except NotFoundError as exc:
            log.info("%s: %s", name, exc)
            out[name] = {"found": False, "report": exc.report.to_dict() if exc.report else None}
            continue
        system = lift(arc, k)
        save_config(from_system(system), Path(cfg.out_dir) / f"{system.name}.json")
        valid = validate_zipper(system, cfg.eps, 3)
        hyp = check_theorem_hypotheses(system, "T2")
        mod = modulus_report(system, k=cfg.modulus_level, pair_budget=cfg.pair_budget, eps=cfg.eps)
        out[name] = {"found": True, "level": k, "inner_dimension": d, "maps": system.n_maps,
                     "report": rep.to_dict(), "valid": valid.passed, "hypotheses": hyp.passed,
                     "interior": interior_separation(system, cfg.eps),
                     "modulus_passed": mod.passed, "modulus_mode": mod.summary["mode"]}
        log.info("%s: k=%d d=%.6f maps=%d valid=%s modulus=%s", name, k, d, system.n_maps, valid.passed, mod.passed)
    atomic_write(Path(cfg.out_dir) / "lift-experiment.json", dump(out) + "\n")
    return out


if __name__ == "__main__":
    run(parse(LiftConfig, __doc__))
