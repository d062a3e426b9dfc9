"""Command-line entry point: ``whitneylab <command> <config> [options]``.

Exit codes: 0 when every check passed, 1 when a check failed, 2 for usage or
config errors.  A config argument may be a JSON file or a built-in name.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import builtins
from .config import atomic_write, build, dumps_config, from_system, load_config
from .errors import ConfigError, NotFoundError, WhitneyLabError

OK, FAILED, USAGE = 0, 1, 2


class _UsageError(Exception):
    pass


def _pairs(text: str):
    if text.lower() in ("all", "none", "exhaustive"):
        return None
    try:
        value = int(float(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a pair count or 'all', got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("pair count must be positive")
    return value


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="whitneylab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add(name, help_, **defaults):
        c = sub.add_parser(name, help=help_)
        c.add_argument("config", help="JSON config path or built-in name (" + ", ".join(builtins.BUILTINS) + ")")
        for flag in defaults:
            _FLAGS[flag](c, defaults[flag])
        return c

    add("validate", "zipper conditions, Hata graph and theorem hypotheses", eps=1e-3, level=5, out=None)
    add("dimension", "solve the Moran equation", out=None)
    add("nodes", "list the k-level nodes with f", level=2, out=None, cap=None)
    add("whitney", "modulus-of-continuity report (CSV and JSON)", level=6, eps=1e-3, pairs=5_000_000,
        out=None, cap=None, threads=1)
    add("lift", "lift a self-similar arc to a linear system with condensation", kmax=5, eps=1e-3, out=None)
    add("render", "SVG drawing of the level-k pieces", level=3, out=None, cap=None)
    return p


_FLAGS = {
    "level": lambda c, d: c.add_argument("-k", "--level", type=int, default=d, help=f"level k (default {d})"),
    "eps": lambda c, d: c.add_argument("--eps", type=float, default=d, help=f"resolution (default {d:g})"),
    "pairs": lambda c, d: c.add_argument("--pairs", type=_pairs, default=d,
                                         help=f"pair budget or 'all' (default {d})"),
    "kmax": lambda c, d: c.add_argument("--kmax", type=int, default=d, help=f"largest level tried (default {d})"),
    "out": lambda c, d: c.add_argument("-o", "--out", default=d, help="output path"),
    "cap": lambda c, d: c.add_argument("--cap", type=int, default=d, help="piece cap"),
    "threads": lambda c, d: c.add_argument("--threads", type=int, default=d, help=f"worker threads (default {d})"),
}


def _emit(data: dict, out=None) -> None:
    text = json.dumps(data, indent=2, sort_keys=True, default=_plain) + "\n"
    if out:
        atomic_write(out, text)
    sys.stdout.write(text)


def _plain(x):
    import numpy as np

    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def _load(args):
    cfg = load_config(args.config)
    return cfg, build(cfg)


def _linear(cfg, command):
    if cfg.kind != "linear":
        raise _UsageError(f"{command} needs a linear system with condensation; run 'lift' on arc configs")


def _cap(args):
    from .systems import DEFAULT_PIECE_CAP

    return args.cap if getattr(args, "cap", None) else DEFAULT_PIECE_CAP


# ---------------------------------------------------------------- commands


def cmd_validate(args) -> int:
    cfg, system = _load(args)
    if cfg.kind == "arc":
        from .arclift import validate_arc

        v = validate_arc(system, args.eps)
        s = system.dimension()
        data = {"system": cfg.name, "kind": "arc", "chain": v.__dict__ | {"passed": v.passed},
                "dimension": s, "dimension_above_one": s > 1}
        _emit(data, args.out)
        return OK if v.passed and s > 1 else FAILED
    from .zipper import check_theorem_hypotheses, hata_graph, is_connected, validate_zipper

    report = validate_zipper(system, args.eps, args.level)
    graph = hata_graph(system, args.eps, args.level)
    hyp = check_theorem_hypotheses(system, "T2")
    connected = is_connected(graph)
    data = {
        "system": cfg.name,
        "zipper": report.to_dict(),
        "hata": {"connected": connected, "edges": sorted(sorted(e) for e in graph.edges)},
        "hypotheses": hyp.to_dict(),
        "passed": report.passed and connected and hyp.passed,
    }
    _emit(data, args.out)
    return OK if data["passed"] else FAILED


def cmd_dimension(args) -> int:
    from .dimension import solve_moran

    cfg, system = _load(args)
    sol = solve_moran(system.ratios)
    _emit({"system": cfg.name, "ratios": list(system.ratios), "dimension": sol.dimension,
           "residual": sol.residual, "iterations": sol.iterations}, args.out)
    return OK


def cmd_nodes(args) -> int:
    import csv
    import io

    from .whitney import chain

    cfg, system = _load(args)
    _linear(cfg, "nodes")
    ch = chain(system, args.level, cap=_cap(args))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["index", "word", "position", "side"] + [f"x{i}" for i in range(system.dim)] + ["f"])
    for i in range(ch.n_nodes):
        a = ch.address(i)
        w.writerow([i, ".".join(map(str, a.word)) or "e", a.position, a.side]
                   + [repr(float(x)) for x in ch.points[i]] + [repr(float(ch.f[i]))])
    if args.out:
        atomic_write(args.out, buf.getvalue())
        sys.stdout.write(f"{ch.n_nodes} nodes written to {args.out}\n")
    else:
        sys.stdout.write(buf.getvalue())
    return OK


def cmd_whitney(args) -> int:
    from .whitney import modulus_report

    cfg, system = _load(args)
    _linear(cfg, "whitney")
    report = modulus_report(system, k=args.level, pair_budget=args.pairs, eps=args.eps,
                            threads=max(1, args.threads), piece_cap=_cap(args))
    csv_path = Path(args.out or f"{cfg.name}-k{args.level}.csv")
    json_path = csv_path.with_suffix(".json")
    report.write(csv_path, json_path)
    sys.stdout.write(report.to_json())
    sys.stdout.write(f"records: {csv_path}\nsummary: {json_path}\n")
    return OK if report.passed else FAILED


def cmd_lift(args) -> int:
    from .arclift import lift, smallest_whitney_level
    from .zipper import validate_zipper

    cfg, arc = _load(args)
    if cfg.kind != "arc":
        raise _UsageError("lift needs an arc config (kind 'arc')")
    try:
        k, _, report = smallest_whitney_level(arc, args.kmax)
    except NotFoundError as exc:
        _emit({"system": cfg.name, "found": False, "report": exc.report.to_dict() if exc.report else None})
        return FAILED
    lifted = lift(arc, k)
    valid = validate_zipper(lifted, args.eps)
    out = args.out or f"{lifted.name}.json"
    atomic_write(out, dumps_config(from_system(lifted)))
    _emit({"system": cfg.name, "found": True, "level": k, "maps": lifted.n_maps, "components": lifted.m,
           "config": str(out), "lifted_validation_passed": valid.passed, "report": report.to_dict()})
    return OK if valid.passed else FAILED


def cmd_render(args) -> int:
    from .render import RenderSpec, count_elements, render_svg

    cfg, system = _load(args)
    svg = render_svg(system, RenderSpec(level=args.level), cap=_cap(args))
    out = args.out or f"{cfg.name}-k{args.level}.svg"
    atomic_write(out, svg)
    sys.stdout.write(f"{count_elements(svg)} elements written to {out}\n")
    return OK


COMMANDS = {"validate": cmd_validate, "dimension": cmd_dimension, "nodes": cmd_nodes,
            "whitney": cmd_whitney, "lift": cmd_lift, "render": cmd_render}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code) if exc.code is not None else OK
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, _UsageError) as exc:
        errors = exc.errors if isinstance(exc, ConfigError) else [str(exc)]
        for e in errors:
            sys.stderr.write(f"error: {e}\n")
        return USAGE
    except WhitneyLabError as exc:
        sys.stderr.write(f"failed: {exc}\n")
        return FAILED


if __name__ == "__main__":
    raise SystemExit(main())
