"""Modulus-of-continuity runs over several levels, with a summary table.

Each row reports the pair count, the worst ratio quotient / bound per case
and the bucket suprema, so the decay in rho_nu can be read off directly.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from _common import dump, parse

from whitneylab import builtins
from whitneylab.config import atomic_write
from whitneylab.whitney import modulus_report, separation_constants

log = logging.getLogger("modulus")


@dataclass
class ModulusConfig:
    system: str = "whitney-1935"
    levels: list = field(default_factory=lambda: [3, 4, 5, 6])
    pair_budget: int | None = 5_000_000
    eps: float = 1e-3
    seed: int = 0
    out_dir: str = "results"
    write_records: bool = False


def run(cfg: ModulusConfig) -> dict:
    system = builtins.system(cfg.system)
    constants = separation_constants(system, cfg.eps)
    log.info("constants: %s", {k: v for k, v in constants.to_dict().items() if k.startswith(("xi", "M"))})
    rows = []
    for k in cfg.levels:
        t0 = time.perf_counter()
        r = modulus_report(system, k=k, pair_budget=cfg.pair_budget, seed=cfg.seed, constants=constants)
        s = r.summary
        rows.append({"k": k, "mode": s["mode"], "pairs": s["pairs_evaluated"], "total": s["pairs_total"],
                     "violations": s["violations_total"], "max_tightness": s["max_tightness"],
                     "bucket_sups": [b["sup_quotient"] for b in s["buckets"]],
                     "passed": r.passed, "seconds": round(time.perf_counter() - t0, 2)})
        log.info("k=%d %s pairs=%d passed=%s (%.1f s)", k, s["mode"], s["pairs_evaluated"], r.passed,
                 rows[-1]["seconds"])
        if cfg.write_records:
            base = Path(cfg.out_dir) / f"{cfg.system}-k{k}"
            r.write(base.with_suffix(".csv"), base.with_suffix(".json"))
    result = {"config": cfg.__dict__, "constants": constants.to_dict(), "runs": rows}
    atomic_write(Path(cfg.out_dir) / f"{cfg.system}-modulus.json", dump(result) + "\n")
    return result


if __name__ == "__main__":
    out = run(parse(ModulusConfig, __doc__))
    for row in out["runs"]:
        print(f"k={row['k']:<2} {row['mode']:<11} pairs={row['pairs']:>10} violations={row['violations']} "
              f"passed={row['passed']}")
