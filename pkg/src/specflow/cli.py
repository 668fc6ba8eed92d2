"""Command-line front end.

Exit codes: 0 computed (mathematical obstructions included), 2 user error,
3 resolution failure, 4 internal defect.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .deform import chern_number, separate, separation_report
from .errors import (
    AmbiguousClustering,
    AnchorMiss,
    DomainError,
    IndexCollision,
    InconsistentOffset,
    LevelCollision,
    OutsideComplex,
    PatchUnderResolved,
    RefinementUnsupported,
    ResolutionBudgetExceeded,
    SpecflowError,
    ToleranceError,
    WindowUnsafe,
)
from .exhaustion import Exhaustion, exhaust, find_gap_section, spectral_flow_crossings
from .families import OperatorFamily, SampledFamily, refine, sample
from .mickelsson import UnitaryMatrix, mickelsson_spectrum
from .spaces import star_cover
from .specio import SpecError, analysis_options, build_family, load_spec
from .spectral import components, spectral_graph

log = logging.getLogger("specflow")

USER_ERRORS = (SpecError, WindowUnsafe, LevelCollision, AmbiguousClustering, ToleranceError, AnchorMiss,
               OutsideComplex, DomainError, IndexCollision, RefinementUnsupported)
RESOLUTION_ERRORS = (ResolutionBudgetExceeded, PatchUnderResolved, InconsistentOffset)


class UsageError(Exception):
    pass


def _clean(x: Any) -> Any:
    """JSON-safe, rounded copy so reports are byte-stable."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
        return float(f"{x:.12g}") + 0.0
    return x


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def _load(args) -> tuple[dict, OperatorFamily, dict]:
    spec = load_spec(args.spec)
    opts = analysis_options(spec)
    if getattr(args, "window", None):
        lo, hi = args.window
        if not lo < hi:
            raise SpecError("--window: lo must be below hi")
        opts["window"] = (lo, hi)
    if getattr(args, "tol", None) is not None:
        if not args.tol > 0:
            raise SpecError("--tol must be positive")
        opts["cluster_tol"] = args.tol
    if getattr(args, "level", None) is not None:
        opts["level"] = args.level
    if getattr(args, "seed", None) is not None and spec["generator"]["name"] == "mickelsson_loop":
        spec["generator"].setdefault("parameters", {})["basis_seed"] = args.seed
    fam = build_family(spec, Path(args.spec).parent)
    return spec, fam, opts


def _sample(fam: OperatorFamily, opts: dict) -> SampledFamily:
    s = sample(fam, opts["cluster_tol"])
    if opts["refine"] and not s.resolution_ok:
        s = refine(fam, s)
    return s


def analyze(spec: dict, fam: OperatorFamily, opts: dict) -> dict:
    s = _sample(fam, opts)
    g = spectral_graph(s, opts["window"])
    comps = components(g)
    result, cocycle = exhaust(g, star_cover(s.space))
    report: dict[str, Any] = {
        "inputs": spec,
        "sampling": {
            "n_vertices": s.space.n_vertices,
            "dim": fam.dim,
            "resolution_ok": s.resolution_ok,
            "max_step": s.max_step,
            "gap_floor": s.gap_floor,
            "unresolved_edges": len(s.unresolved_edges),
        },
        "window": list(g.window),
        "boundary_safe": g.boundary_safe,
        "components": [
            {
                "nodes": len(c.nodes),
                "vertices": len(c.vertices),
                "is_covering": c.is_covering,
                "sheet_count": c.sheet_count,
                "multiplicities": sorted(set(c.multiplicity_profile.values())),
                "touches_boundary": c.touches_boundary,
            }
            for c in comps
        ],
        "spectral_flow": {"loop_sums": list(cocycle.loop_sums), "class_is_zero": cocycle.class_is_zero},
    }
    if s.space.kind == "loop":
        report["spectral_flow"]["crossings"] = spectral_flow_crossings(s, opts["level"])
        report["spectral_flow"]["level"] = opts["level"]
    if isinstance(result, Exhaustion):
        lo, hi = result.label_range
        report["exhaustion"] = {"present": True, "labels": [lo, hi], "min_gaps": result.min_gaps}
        sec = find_gap_section(result)
        report["gap_section"] = (None if not hasattr(sec, "sigma") else
                                 {"n": sec.n, "min_gap": sec.min_gap, "continuity_modulus": sec.continuity_modulus})
    else:
        report["exhaustion"] = {"present": False}
        report["gap_section"] = None
    if s.space.kind == "sphere_grid":
        cherns = []
        for c in comps:
            if c.is_covering and c.sheet_count == 1 and set(c.multiplicity_profile.values()) == {1}:
                cherns.append(chern_number(g, c))
        report["obstructions"] = {"chern": cherns}
    report["status"] = "computed" if cocycle.class_is_zero else "obstructed"
    return report


def _loop_order(fam: OperatorFamily) -> list[tuple[float, int]]:
    space = fam.space
    if space.kind == "loop":
        pts = [(space.loop_parameter(v), v) for v in range(space.n_vertices)]
    elif space.dimension == 1 and space.coords.shape[1] == 1:
        pts = [(float(space.coords[v, 0]), v) for v in range(space.n_vertices)]
    else:
        raise UsageError("bands needs a loop or a path")
    return sorted(pts)


def bands(fam: OperatorFamily, s: SampledFamily, window: tuple[float, float], out: Path) -> int:
    order = _loop_order(fam)
    lo, hi = window
    rows = []
    for t, v in order:
        w = s.spectra[v].eigenvalues
        for p in np.flatnonzero((w > lo) & (w < hi)):
            rows.append((v, t, int(p), float(w[p])))
    if out.suffix.lower() == ".csv":
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["sample_id", "parameter", "branch", "eigenvalue"])
        for v, t, p, x in rows:
            wr.writerow([v, f"{t:.12g}", p, f"{x:.12g}"])
        out.write_text(buf.getvalue())
    elif out.suffix.lower() == ".svg":
        out.write_text(_svg(order, rows, window))
    else:
        raise UsageError("--out must end in .csv or .svg")
    return len(rows)


def _svg(order, rows, window) -> str:
    width, height, pad = 640, 400, 20
    t0, t1 = order[0][0], order[-1][0]
    ys = [x for *_, x in rows]
    y0, y1 = (min(ys), max(ys)) if ys else window
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 1, y1 + 1

    def px(t, x):
        u = pad + (width - 2 * pad) * (t - t0) / ((t1 - t0) or 1.0)
        w = height - pad - (height - 2 * pad) * (x - y0) / (y1 - y0)
        return f"{u:.2f},{w:.2f}"

    branches: dict[int, list[list[str]]] = {}
    last_idx: dict[int, int] = {}
    index = {v: i for i, (_, v) in enumerate(order)}
    for v, t, p, x in rows:
        segs = branches.setdefault(p, [])
        if not segs or last_idx.get(p) != index[v] - 1:
            segs.append([])
        segs[-1].append(px(t, x))
        last_idx[p] = index[v]
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']
    for p in sorted(branches):
        for seg in branches[p]:
            if len(seg) > 1:
                lines.append(f'<polyline class="branch" data-branch="{p}" fill="none" stroke="black" '
                             f'stroke-width="1" points="{" ".join(seg)}"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", required=True, help="family specification JSON")
    common.add_argument("--window", nargs=2, type=float, metavar=("LO", "HI"))
    common.add_argument("--tol", type=float, help="cluster tolerance")
    common.add_argument("--seed", type=int, help="basis seed for randomized generators")
    common.add_argument("--level", type=float, help="level for crossing counts")
    p = argparse.ArgumentParser(prog="specflow", description="Spectral flow and band separation for Hermitian families.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="full report as JSON")
    sub.add_parser("flow", parents=[common], help="spectral flow of a loop")
    c = sub.add_parser("chern", parents=[common], help="Chern number of a band over a sphere grid")
    c.add_argument("--band", type=int, default=0)
    sp = sub.add_parser("separate", parents=[common], help="try to separate a pair of branches")
    sp.add_argument("--band", type=int, help="lower label of the pair")
    b = sub.add_parser("bands", parents=[common], help="band diagram as CSV or SVG")
    b.add_argument("--out", required=True)
    sub.add_parser("mickelsson-spectrum", parents=[common], help="closed-form spectra of a unitary loop")
    return p


def run(argv: list[str]) -> tuple[int, str]:
    args = _parser().parse_args(argv)
    spec, fam, opts = _load(args)
    if args.command == "analyze":
        return 0, dumps(analyze(spec, fam, opts))
    if args.command == "flow":
        if fam.space.kind != "loop":
            raise UsageError("flow needs a loop")
        s = _sample(fam, opts)
        crossings = spectral_flow_crossings(s, opts["level"])
        g = spectral_graph(s, opts["window"])
        _, cocycle = exhaust(g, star_cover(s.space))
        if cocycle.loop_sums[0] != crossings:
            raise AssertionError(f"cocycle loop sum {cocycle.loop_sums[0]} != crossing count {crossings}")
        return 0, f"{crossings}\n"
    if args.command == "chern":
        if fam.space.kind != "sphere_grid":
            raise UsageError("chern needs a sphere_grid space")
        s = _sample(fam, opts)
        g = spectral_graph(s, opts["window"])
        good = [c for c in components(g)
                if c.is_covering and c.sheet_count == 1 and set(c.multiplicity_profile.values()) == {1}]
        if not 0 <= args.band < len(good):
            raise UsageError(f"--band must be in 0..{len(good) - 1}")
        return 0, f"{chern_number(g, good[args.band])}\n"
    if args.command == "separate":
        s = _sample(fam, opts)
        pair = opts["pair"] if args.band is None else args.band
        outcome = separate(s, pair, window=opts["window"])
        return 0, dumps({"inputs": spec, "separation": separation_report(outcome)})
    if args.command == "bands":
        s = _sample(fam, opts)
        g = spectral_graph(s, opts["window"])
        n = bands(fam, s, g.window, Path(args.out))
        return 0, f"{n}\n"
    if args.command == "mickelsson-spectrum":
        if fam.name != "mickelsson_loop":
            raise UsageError("mickelsson-spectrum needs a mickelsson_loop generator")
        M = fam.params["M"]
        window = opts["window"] or (-M + 1.0, M - 1.0)
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["vertex", "value", "multiplicity"])
        for t, v in _loop_order(fam):
            U = UnitaryMatrix(fam.unitary_at(t))
            for x, m in mickelsson_spectrum(U, window):
                wr.writerow([v, f"{x:.12g}", m])
        return 0, buf.getvalue()
    raise UsageError(f"unknown command {args.command}")


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    argv = sys.argv[1:] if argv is None else argv
    try:
        code, out = run(argv)
    except SystemExit as exc:  # argparse
        return int(exc.code or 0)
    except (UsageError, *USER_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RESOLUTION_ERRORS as exc:
        print(f"resolution failure: {exc}", file=sys.stderr)
        return 3
    except (SpecflowError, AssertionError, Exception) as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    sys.stdout.write(out)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
