"""Command-line entry point.

Every report is a JSON object (stable key order, UTF-8) that embeds the
resolved parameters, or CSV with '\\n' line ends.  Exit codes: 0 success,
2 invalid input, 3 capacity exceeded.

CSV columns by command:
  best-approx   i,p1,p2,q,quality,exact
  systole       t,systole,m1,m2,m3
  di            T,ok
  tree-build    level,q,p1,p2,tau1,tau2,x1lo,x1hi,x2lo,x2hi,parent  (no header)
  tree-verify   level,count
  count         convention,count,ratio
  dim           closed: dim,degenerate; seq: n,expression; box: log_inv_scale,log_count
  cover         p1,p2,q,r_u,D_size,E_size,D_sum,E_sum
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from .errors import CapacityExceeded, SingvecError
from .lattice import Box3, LatticeRep, Weight


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _point(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 2:
        raise UsageError(f"expected 'x1,x2', got {text!r}")
    out = []
    for p in parts:
        p = p.strip()
        try:
            out.append(Fraction(p) if "/" in p else float(p))
        except (ValueError, ZeroDivisionError):
            raise UsageError(f"bad coordinate {p!r}")
    return tuple(out)


def _ints(text: str, n: int) -> tuple:
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"expected {n} integers, got {text!r}")
    if len(vals) != n:
        raise UsageError(f"expected {n} integers, got {text!r}")
    return vals


def _floats(text: str, n: int) -> tuple:
    try:
        vals = tuple(float(Fraction(v.strip())) for v in text.split(","))
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"expected {n} numbers, got {text!r}")
    if len(vals) != n:
        raise UsageError(f"expected {n} numbers, got {text!r}")
    return vals


def _num(v):
    """JSON-safe scalar."""
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return _num(obj)


class Report:
    def __init__(self, data: dict, header=None, rows=None):
        self.data = data
        self.header = header
        self.rows = rows or []

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return json.dumps(_clean(self.data), indent=2, ensure_ascii=False) + "\n"
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        if self.header:
            wr.writerow(self.header)
        for row in self.rows:
            wr.writerow([_csv_cell(v) for v in row])
        return buf.getvalue()


def _csv_cell(v):
    v = _num(v)
    if isinstance(v, float):
        return repr(v)
    return v


def _weight(args) -> Weight:
    return Weight.parse(args.w)


# ---- commands ---------------------------------------------------------------

def cmd_best_approx(args) -> Report:
    from .approx import best_approx_sequence
    w = _weight(args)
    x = _point(args.x)
    seq = best_approx_sequence(x, w, args.qmax, precision=args.precision)
    params = {"command": "best-approx", "x": [str(v) for v in x], "w": str(w), "qmax": args.qmax,
              "precision": args.precision}
    recs = [{"u": list(r.u), "quality": r.quality, "exact": r.exact} for r in seq.records]
    rows = [(i, *r.u, r.quality, r.exact) for i, r in enumerate(seq.records)]
    return Report({"params": params, "count": len(recs), "exact": seq.exact, "records": recs},
                  ["i", "p1", "p2", "q", "quality", "exact"], rows)


def _grid(lo: float, hi: float, steps: int, geometric: bool = False) -> list:
    if steps < 1:
        raise UsageError("steps must be positive")
    if steps == 1:
        return [lo]
    if geometric:
        return np.geomspace(lo, hi, steps).tolist()
    return np.linspace(lo, hi, steps).tolist()


def cmd_systole(args) -> Report:
    from .flow import systole_profile
    w = _weight(args)
    x = _point(args.x)
    grid = _grid(args.tmin, args.tmax, args.steps)
    s = systole_profile(x, w, grid)
    params = {"command": "systole", "x": [str(v) for v in x], "w": str(w), "tmin": args.tmin,
              "tmax": args.tmax, "steps": args.steps}
    pts = [{"t": t, "systole": v, "coords": list(c)} for t, v, c in zip(s.grid, s.values, s.witnesses)]
    rows = [(t, v, *c) for t, v, c in zip(s.grid, s.values, s.witnesses)]
    return Report({"params": params, "series": pts}, ["t", "systole", "m1", "m2", "m3"], rows)


def cmd_di(args) -> Report:
    from .flow import di_profile
    w = _weight(args)
    x = _point(args.x)
    grid = _grid(args.Tmin, args.Tmax, args.steps, geometric=True)
    prof = di_profile(x, w, args.eps, grid)
    params = {"command": "di", "x": [str(v) for v in x], "w": str(w), "eps": args.eps,
              "Tmin": args.Tmin, "Tmax": args.Tmax, "steps": args.steps}
    return Report({"params": params, "threshold": prof.threshold,
                   "grid": list(prof.grid), "ok": list(prof.results)},
                  ["T", "ok"], list(zip(prof.grid, prof.results)))


def _tree_params(args):
    from .tree import TreeParams
    try:
        et = Fraction(args.et)
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"bad --et {args.et!r}")
    return TreeParams(_weight(args), args.eps, args.r, et, args.depth, strict_regime=args.strict_regime,
                      cap=args.cap)


def cmd_tree_build(args) -> Report:
    from .tree import build_tree
    P = _tree_params(args)
    tree = build_tree(P, refined=args.refined, on_empty=args.on_empty)
    lines = tree.export_lines()
    params = {"command": "tree-build", **P.as_dict(), "refined": args.refined, "on_empty": args.on_empty}
    fields = ["level", "q", "p1", "p2", "tau1", "tau2", "x1lo", "x1hi", "x2lo", "x2hi", "parent"]
    nodes = [dict(zip(fields, ln.split(","))) for ln in lines]
    rep = Report({"params": params, "counts": tree.counts,
                  "childless": [[n.level, n.p1, n.p2, n.q] for n in tree.childless], "nodes": nodes})
    rep.rows = [ln.split(",") for ln in lines]
    return rep


def cmd_tree_verify(args) -> Report:
    from .tree import build_tree, verify_cardinality, verify_invariants, verify_separation
    P = _tree_params(args)
    tree = build_tree(P, refined=args.refined, on_empty=args.on_empty)
    inv = verify_invariants(tree, numeric_sample=args.sample, seed=args.seed)
    card = verify_cardinality(tree)
    out = {"params": {"command": "tree-verify", **P.as_dict(), "refined": args.refined,
                      "on_empty": args.on_empty, "sample": args.sample, "seed": args.seed},
           "counts": tree.counts,
           "invariants": {"ok": inv.ok, "nesting_checked": inv.nesting_checked,
                          "nesting_failures": inv.nesting_failures,
                          "denominators_checked": inv.denominators_checked,
                          "denominator_failures": inv.denominator_failures,
                          "l3_checked": inv.l3_checked, "l3_numeric_checked": inv.l3_numeric_checked,
                          "l3_failures": inv.l3_failures},
           "cardinality": card.rows}
    if args.refined and P.depth >= 2:
        sep = verify_separation(tree)
        out["separation"] = {k: v for k, v in vars(sep).items()}
    return Report(out, ["level", "count"], list(enumerate(tree.counts)))


def cmd_count(args) -> Report:
    from .counting import primitive_density
    K = Box3(*_floats(args.box, 3))
    L = LatticeRep.diagonal(_floats(args.diag, 3)) if args.diag else LatticeRep.standard(3)
    rep = primitive_density(K, L, primitive=not args.all, tol=args.tol, convention=args.convention)
    params = {"command": "count", "box": list(K.radii), "diag": args.diag, "primitive": not args.all,
              "tol": args.tol, "convention": args.convention}
    counts = rep.extra["counts"]
    rows = [(c, n, n / rep.theta) for c, n in counts.items()]
    return Report({"params": params, **rep.to_json()}, ["convention", "count", "ratio"], rows)


def cmd_dim(args) -> Report:
    from . import dimension as dm
    w = _weight(args)
    params = {"command": "dim", "w": str(w), "mode": args.mode}
    if args.mode == "closed":
        res = dm.closed_form_dim(w)
        val = round(float(res.dim), 10)
        exact = str(res.dim) if isinstance(res.dim, Fraction) else None
        return Report({"dim": val, "degenerate": res.degenerate, "exact": exact, "params": params},
                      ["dim", "degenerate"], [(val, res.degenerate)])
    if args.mode == "seq":
        args.eps = 0.01 if args.eps is None else args.eps
        seq = dm.tree_sequences(w, args.nmax, eps=args.eps)
        grid = np.round(np.arange(args.smin, args.smax + args.sstep / 2, args.sstep), 12).tolist()
        lb = dm.lower_bound_s(seq, grid, args.n_threshold)
        loc = dm.local_dim_cor(seq)
        params.update({"nmax": args.nmax, "eps": args.eps, "n_threshold": lb.n_threshold,
                       "s_grid": [args.smin, args.smax, args.sstep]})
        target = dm.closed_form_dim(w).dim
        s_eval = lb.s if lb.s is not None else grid[0]
        ns = [n for n in range(lb.n_threshold, lb.horizon) if not lb.saturated[n]]
        rows = list(zip(ns, lb.series[s_eval]))
        return Report({"params": params, "lower_bound": lb.as_dict(), "local_dim": loc.dim,
                       "closed_form": float(target), "series_s": s_eval}, ["n", "expression"], rows)
    # box counting on sampled tree points
    from .tree import TreeParams, build_tree, sample_points
    args.eps = 0.5 if args.eps is None else args.eps
    P = TreeParams(w, args.eps, args.r, Fraction(args.et), args.depth)
    tree = build_tree(P, refined=True, on_empty="record")
    pts = sample_points(tree, per_leaf=args.per_leaf, seed=args.seed)
    scales = np.geomspace(args.dmin, args.dmax, args.nscales).tolist()
    fit = dm.box_counting_dim(pts, scales)
    params.update({**P.as_dict(), "per_leaf": args.per_leaf, "seed": args.seed,
                   "scales": [args.dmin, args.dmax, args.nscales]})
    return Report({"params": params, "points": len(pts), "dim": fit.dim, "r2": fit.r2,
                   "intercept": fit.intercept},
                  ["log_inv_scale", "log_count"], list(zip(fit.log_inv_scale, fit.log_count)))


def cmd_cover(args) -> Report:
    from .dimension import cover_relation, q_eps_mask
    w = _weight(args)
    if args.u:
        us = [_ints(args.u, 3)]
    else:
        rng = np.random.default_rng(args.seed)
        us = []
        while len(us) < args.sample:
            q = rng.integers(args.qmin, args.qmax, 4096)
            V = np.column_stack([rng.integers(0, q), rng.integers(0, q), q])
            for v in V[q_eps_mask(V, w, args.eps)].tolist():
                if tuple(v) not in us and len(us) < args.sample:
                    us.append(tuple(v))
    items, rows = [], []
    for u in us:
        c = cover_relation(u, w, args.eps, args.vmax)
        d = {"u": list(u), "u_prime": list(c.u_prime), "r_u": c.r_u, "D_size": len(c.D),
             "E_size": c.E_count(), "D_sum": c.D_sum(args.t), "E_sum": c.E_sum(args.t)}
        items.append(d)
        rows.append((*u, c.r_u, d["D_size"], d["E_size"], d["D_sum"], d["E_sum"]))
    params = {"command": "cover", "w": str(w), "eps": args.eps, "vmax": args.vmax, "t": args.t,
              "u": args.u, "sample": args.sample, "qmin": args.qmin, "qmax": args.qmax, "seed": args.seed}
    return Report({"params": params, "items": items,
                   "D_sum": sum(d["D_sum"] for d in items), "E_sum": sum(d["E_sum"] for d in items)},
                  ["p1", "p2", "q", "r_u", "D_size", "E_size", "D_sum", "E_sum"], rows)


# ---- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="singvec", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, default_format="json"):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--format", choices=["json", "csv"], default=default_format)
        sp.add_argument("--output", default="-", help="path, or - for stdout")

    sp = sub.add_parser("best-approx", help="w-best approximation records")
    sp.add_argument("--x", required=True)
    sp.add_argument("--w", required=True)
    sp.add_argument("--qmax", type=int, required=True)
    sp.add_argument("--precision", choices=["double", "quad"], default="double")
    common(sp)
    sp.set_defaults(func=cmd_best_approx)

    sp = sub.add_parser("systole", help="shortest vector along the diagonal flow")
    sp.add_argument("--x", required=True)
    sp.add_argument("--w", required=True)
    sp.add_argument("--tmin", type=float, default=0.0)
    sp.add_argument("--tmax", type=float, required=True)
    sp.add_argument("--steps", type=int, default=11)
    common(sp)
    sp.set_defaults(func=cmd_systole)

    sp = sub.add_parser("di", help="Dirichlet-improvability profile over a geometric T grid")
    sp.add_argument("--x", required=True)
    sp.add_argument("--w", required=True)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--Tmin", type=float, default=2.0)
    sp.add_argument("--Tmax", type=float, required=True)
    sp.add_argument("--steps", type=int, default=20)
    common(sp)
    sp.set_defaults(func=cmd_di)

    for name, func, fmt, helptext in (("tree-build", cmd_tree_build, "csv", "build the rational tree"),
                                      ("tree-verify", cmd_tree_verify, "json", "build and check the tree")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--w", required=True)
        sp.add_argument("--et", required=True, help="e^t, rational or integer")
        sp.add_argument("--eps", type=float, required=True)
        sp.add_argument("--r", type=float, default=0.2)
        sp.add_argument("--depth", type=int, default=1)
        sp.add_argument("--refined", action="store_true", help="apply the lattice refinement tests")
        sp.add_argument("--strict-regime", action="store_true")
        sp.add_argument("--on-empty", choices=["raise", "record"], default="raise")
        sp.add_argument("--cap", type=int, default=10 ** 8)
        if name == "tree-verify":
            sp.add_argument("--sample", type=int, default=200, help="nodes re-checked numerically per level")
        common(sp, fmt)
        sp.set_defaults(func=func)

    sp = sub.add_parser("count", help="(primitive) lattice points in a box")
    sp.add_argument("--box", required=True, help="half-widths R1,R2,R3")
    sp.add_argument("--diag", help="diagonal lattice d1,d2,d3 (default Z^3)")
    sp.add_argument("--all", action="store_true", help="count all points, not only primitive ones")
    sp.add_argument("--convention", choices=["closed", "open", "half-open"], default="half-open")
    sp.add_argument("--tol", type=float, default=0.02)
    common(sp)
    sp.set_defaults(func=cmd_count)

    sp = sub.add_parser("dim", help="dimension: closed form, sequence evaluator or box counting")
    sp.add_argument("--w", required=True)
    sp.add_argument("--mode", choices=["closed", "seq", "box"], default="closed")
    sp.add_argument("--nmax", type=int, default=40)
    sp.add_argument("--eps", type=float, default=None, help="seq default 0.01, box default 0.5")
    sp.add_argument("--smin", type=float, default=1.0)
    sp.add_argument("--smax", type=float, default=2.0)
    sp.add_argument("--sstep", type=float, default=0.001)
    sp.add_argument("--n-threshold", type=int, default=None, help="seq mode: first n of the trend fit")
    sp.add_argument("--et", default="16")
    sp.add_argument("--r", type=float, default=0.2)
    sp.add_argument("--depth", type=int, default=2)
    sp.add_argument("--per-leaf", type=int, default=0)
    sp.add_argument("--dmin", type=float, default=1e-3)
    sp.add_argument("--dmax", type=float, default=1e-1)
    sp.add_argument("--nscales", type=int, default=6)
    common(sp)
    sp.set_defaults(func=cmd_dim)

    sp = sub.add_parser("cover", help="covering-relation sums D and E")
    sp.add_argument("--w", required=True)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--vmax", type=int, default=5000)
    sp.add_argument("--t", type=float, default=2.5)
    sp.add_argument("--u", help="p1,p2,q; otherwise --sample vectors are drawn with --seed")
    sp.add_argument("--sample", type=int, default=20)
    sp.add_argument("--qmin", type=int, default=3)
    sp.add_argument("--qmax", type=int, default=60)
    common(sp)
    sp.set_defaults(func=cmd_cover)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "nscales", 6) < 1 or getattr(args, "depth", 1) < 1:
            raise UsageError("counts must be positive")
        text = args.func(args).render(args.format)
    except CapacityExceeded as exc:
        print(f"singvec: capacity exceeded: {exc}", file=sys.stderr)
        return 3
    except (UsageError, SingvecError, ValueError, ZeroDivisionError) as exc:
        msg = " ".join(str(exc).split())
        print(f"singvec: error: {msg}", file=sys.stderr)
        return 2
    if args.output == "-":
        sys.stdout.write(text)
    else:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
