"""Command-line driver.

Exit codes: 0 success, 2 numerical validation failure, 3 usage error,
4 capacity or box-size error.  The worker count for sweeps defaults to the
``FACETLAB_WORKERS`` environment variable.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import hamiltonian as ham
from . import solver
from .errors import FacetLabError, UsageError
from .io import ExperimentConfig, csv_text, read_grid, support_image, write_grid, write_pgm
from .lattice import SiteSet, Slope, as_int_vector, primitive_vectors

WORKERS_ENV = "FACETLAB_WORKERS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -------------------------------------------------------------------- parsing


def parse_vector(text: str) -> tuple[int, ...]:
    try:
        return as_int_vector(int(c) for c in text.replace(" ", "").split(",") if c != "")
    except ValueError as exc:
        raise UsageError(f"cannot parse integer vector {text!r}") from exc


def parse_rational_vector(text: str) -> tuple:
    out = []
    for c in text.replace(" ", "").split(","):
        try:
            out.append(Fraction(c) if "/" in c else int(c))
        except ValueError:
            try:
                out.append(float(c))
            except ValueError as exc:
                raise UsageError(f"cannot parse {c!r}") from exc
    return tuple(out)


def _check_dim(vec, dim):
    if dim is not None and len(vec) != dim:
        raise UsageError(f"vector {vec} does not have dimension {dim}")


def _read_rows(path: Path) -> list[list[float]]:
    rows = []
    for line in path.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append([float(c) for c in line.replace(",", " ").split()])
    return rows


def parse_wetted(spec: str, h: float, d: int) -> SiteSet:
    """``ball:RHO`` (radius ``RHO h``), ``poly:FILE`` (rows ``a_1 .. a_d b`` for
    ``a.x <= b h``) or ``sites:FILE`` / ``sites:X;Y;...`` (explicit sites)."""
    kind, _, arg = spec.partition(":")
    if kind == "ball":
        return solver.lattice_ball(float(arg) * h, d)
    if kind == "poly":
        rows = np.array(_read_rows(Path(arg)))
        if rows.ndim != 2 or rows.shape[1] != d + 1:
            raise UsageError(f"polytope rows must have {d + 1} entries")
        return solver.lattice_polytope(rows[:, :d], rows[:, d], scale=h)
    if kind == "sites":
        path = Path(arg)
        rows = _read_rows(path) if path.is_file() else [parse_vector(s) for s in arg.split(";") if s]
        pts = np.array(rows, dtype=float)
        if pts.size == 0 or pts.shape[1] != d or not np.all(pts == np.round(pts)):
            raise UsageError(f"sites must be integer {d}-vectors")
        return SiteSet(pts.astype(np.int64), d=d)
    raise UsageError(f"unknown wetted spec {spec!r}; use ball:, poly: or sites:")


def _workers(args) -> int:
    if getattr(args, "workers", None):
        return max(1, int(args.workers))
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise UsageError(f"{WORKERS_ENV} must be an integer") from exc
    return 1


def _ordered_map(func, items, workers):
    # Results come back in input order whatever the pool size.
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=max(1, len(items) // (4 * workers))))


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _echo_config(args, out_dir: Path | None) -> ExperimentConfig:
    params = {k: v for k, v in vars(args).items() if k not in ("func", "config", "command")}
    cfg = ExperimentConfig(args.command, params)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        cfg.save(out_dir / "config.txt")
    return cfg


def _p_cols(p) -> str:
    return " ".join(str(int(c)) for c in p)


# ------------------------------------------------------------------- commands


def _scaled_estimate(p: tuple[int, ...], method: str, **kw) -> ham.HEstimate:
    # H(t p) = t H(p) for the reduced direction p.
    t = math.gcd(*(abs(c) for c in p))
    prim = tuple(c // t for c in p)
    est = ham.estimate(prim, method, **kw)
    return ham.HEstimate(p, t * est.value, est.method, t * est.err)


def cmd_ham(args) -> int:
    p = parse_vector(args.slope)
    _check_dim(p, args.dim)
    if not any(p):
        raise UsageError("slope must be nonzero")
    methods = list(ham.FORMULA_METHODS) if args.all else [args.method]
    rows, ests = [], []
    for m in methods:
        kw = {"R": args.radius} if m == "lattice_sum" and args.radius is not None else {}
        est = _scaled_estimate(p, m, **kw)
        ests.append(est)
    if args.halfspace:
        _, est = solver.halfspace_profile(p, args.halfspace)
        ests.append(est)
    for e in ests:
        rows.append([_p_cols(p), e.method, e.value, e.err])
    text = csv_text(["p", "method", "H", "err"], rows)
    status = 0
    if len(ests) > 1:
        raw = max(abs(a.value - b.value) for i, a in enumerate(ests) for b in ests[i + 1:])
        excess = max(abs(a.value - b.value) - a.err - b.err for i, a in enumerate(ests) for b in ests[i + 1:])
        text += f"# max_discrepancy={raw:.17g} max_excess_over_err={excess:.17g}\n"
        if args.strict and excess > args.strict_tol:
            status = 2
    _emit(text, args.out)
    return status


def _sweep_row(job):
    coords, method = job
    p = Slope(coords)
    try:
        est = ham.estimate(p, method)
        return [*coords, p.norm, est.value, est.value / p.norm, ham.h_dual(p, est), method, est.err, "ok"]
    except FacetLabError as exc:
        return [*coords, p.norm, None, None, None, method, None, f"failed: {type(exc).__name__}"]


def cmd_ham_sweep(args) -> int:
    if args.max_coord < 1:
        raise UsageError("max-coord must be >= 1")
    slopes = ham.canonical_slopes(args.dim, args.max_coord)
    jobs = [(s.coords, args.method) for s in slopes]
    rows = _ordered_map(_sweep_row, jobs, _workers(args))
    header = [f"p{k + 1}" for k in range(args.dim)] + ["norm", "H", "H_over_norm", "Hbar", "method", "err", "status"]
    _emit(csv_text(header, rows), args.out)
    status = 0 if all(r[-1] == "ok" for r in rows) else 2
    if args.check_generic and args.dim >= 2:
        g, gerr = ham.generic_constant(args.dim, with_err=True)
        bad = [r for r in rows if r[-1] == "ok" and r[args.dim + 2] > g + gerr]
        if bad:
            print(f"{len(bad)} slopes exceed the generic constant {g:.10g}", file=sys.stderr)
            status = 2
    return status


def _problem_from_args(args) -> solver.Problem:
    if args.h < 0:
        raise UsageError("h must be nonnegative")
    wet = parse_wetted(args.wetted, args.h, args.dim)
    box = None
    if args.box_half_width is not None:
        from .lattice import LatticeBox
        box = LatticeBox.centered(args.box_half_width, args.dim)
    return solver.Problem(wet, args.h, box)


def _run_solver(args, method: str) -> tuple[solver.Problem, solver.SolveReport]:
    prob = _problem_from_args(args)
    kw = {"eps": args.eps}
    if method == "active_set":
        kw["omega"] = "auto" if args.omega == "auto" else float(args.omega)
    retries = 0 if args.no_retry else args.retries
    rep = solver.solve_with_retry(prob, method, retries=retries, **kw)
    return prob, rep


def _write_solve_outputs(rep: solver.SolveReport, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_grid(out_dir / "field.grid", rep.u)
    write_pgm(out_dir / "support.pgm", support_image(rep.u))
    rec = ExperimentConfig("report", {
        "method": rep.method, "iterations": int(rep.iterations), "outer_iterations": int(rep.outer_iterations),
        "support_size": len(rep.support), "residual_harmonic": rep.residual_harmonic,
        "residual_boundary": rep.residual_boundary, "box_lo": list(rep.u.box.lo), "box_hi": list(rep.u.box.hi),
        **{f"validator_{k}": v for k, v in rep.validators.as_dict().items()},
    })
    rec.save(out_dir / "report.txt")


def _solve_command(args, method: str) -> int:
    out_dir = Path(args.out_dir) if args.out_dir else None
    _echo_config(args, out_dir)
    _, rep = _run_solver(args, method)
    if out_dir is not None:
        _write_solve_outputs(rep, out_dir)
    v = rep.validators
    print(f"method={rep.method} iterations={rep.iterations} support={len(rep.support)} "
          f"residual_harmonic={rep.residual_harmonic:.3g} residual_boundary={rep.residual_boundary:.3g} "
          f"validators={'pass' if v.passed else 'FAIL'}")
    return 0 if v.passed else 2


def cmd_flow(args) -> int:
    return _solve_command(args, "flow")


def cmd_solve(args) -> int:
    return _solve_command(args, args.method)


def cmd_halfspace(args) -> int:
    p = parse_vector(args.slope)
    _check_dim(p, args.dim)
    u, est = solver.halfspace_profile(p, args.radius, estimate_err=args.estimate_err, refine=args.refine)
    if args.out_dir:
        out = Path(args.out_dir)
        _echo_config(args, out)
        write_grid(out / "field.grid", u)
    _emit(csv_text(["p", "R", "H", "err"], [[_p_cols(p), args.radius, est.value, est.err]]), args.out)
    return 0


def cmd_limit_halfspace(args) -> int:
    zetas = [parse_rational_vector(z) for z in args.zeta]
    u, lap0 = solver.limit_halfspace_profile(zetas, args.radius)
    if args.out_dir:
        out = Path(args.out_dir)
        _echo_config(args, out)
        write_grid(out / "field.grid", u)
    label = ";".join(",".join(str(c) for c in z) for z in zetas)
    _emit(csv_text(["zetas", "R", "laplacian_at_0"], [[label, args.radius, lap0]]), args.out)
    return 0


def _report_from_field(args) -> solver.SolveReport:
    u = read_grid(args.field)
    supp = SiteSet.from_mask(u.box, u.values > 0)
    wet = parse_wetted(args.wetted, args.h, u.d)
    verd = solver.first_variation(u.values, wet.to_mask(u.box), args.h, args.tol)
    return solver.SolveReport(u, supp, "loaded", 0, verd.harmonic, verd.outer, verd, h=args.h)


def cmd_facets(args) -> int:
    if args.field:
        rep = _report_from_field(args)
    else:
        _, rep = _run_solver(args, "active_set")
    d = rep.u.d
    if args.directions:
        dirs = [Slope(parse_vector(s)) for s in args.directions.split(";") if s]
    else:
        dirs = primitive_vectors(d, args.max_coord)
    rows = []
    for p in dirs:
        f = solver.facet_length(rep, p, args.slack)
        rows.append([_p_cols(p.coords), f.face_offset, len(f.face_sites), f.extent, f.extent_over_h])
    _emit(csv_text(["p", "face_offset", "face_sites", "extent", "extent_over_h"], rows), args.out)
    return 0


def cmd_levelset(args) -> int:
    if args.dim != 2:
        raise UsageError("levelset supports d = 2 only")
    s = ham.level_set_boundary(args.max_coord, 2, args.method)
    rows = []
    for kind, pts in (("black", s.black), ("gray", s.gray)):
        for p, xy in zip(s.slopes, pts):
            rows.append([kind, int(p[0]), int(p[1]), xy[0], xy[1], float(np.hypot(*xy))])
    rows.append(["generic_black", None, None, None, None, s.generic_black_radius])
    rows.append(["generic_gray", None, None, None, None, s.generic_gray_radius])
    _emit(csv_text(["kind", "p1", "p2", "x", "y", "radius"], rows), args.out)
    radii = np.hypot(s.black[:, 0], s.black[:, 1])
    if np.any(radii < s.generic_black_radius * (1 - 1e-9)):
        print("a black boundary point lies inside the generic circle", file=sys.stderr)
        return 2
    return 0


def cmd_validate(args) -> int:
    if args.field:
        if not args.wetted or args.h is None:
            raise UsageError("--field needs --wetted and --h")
        rep = _report_from_field(args)
        print(" ".join(f"{k}={v}" for k, v in rep.validators.as_dict().items()))
        return 0 if rep.validators.passed else 2
    worst = 0.0
    for d in (2, 3):
        for p in primitive_vectors(d, args.max_coord, canonical=True):
            vals = [ham.estimate(p, m).value for m in ("roots", "integral", "hitting")]
            worst = max(worst, (max(vals) - min(vals)) / vals[0])
    ok = worst <= 1e-8
    print(f"cross_method_max_rel_discrepancy={worst:.3g} {'pass' if ok else 'FAIL'}")
    return 0 if ok else 2


# --------------------------------------------------------------------- parser


def _add_solve_args(sp, with_method: bool):
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--wetted", default="ball:0.05", help="ball:RHO, poly:FILE or sites:FILE|X;Y")
    sp.add_argument("--h", type=float, default=16.0)
    sp.add_argument("--eps", type=float, default=None)
    sp.add_argument("--box-half-width", type=int, default=None)
    sp.add_argument("--omega", default=str(solver.DEFAULT_OMEGA))
    sp.add_argument("--no-retry", action="store_true")
    sp.add_argument("--retries", type=int, default=3)
    sp.add_argument("--out-dir", default=None)
    if with_method:
        sp.add_argument("--method", choices=sorted(solver.SOLVERS), default="active_set")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="facetlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", default=None, help="key=value file supplying defaults")
        sp.set_defaults(func=func)
        return sp

    sp = add("ham", cmd_ham, "H(p) for one slope")
    sp.add_argument("--dim", type=int, default=None)
    sp.add_argument("--slope", required=True)
    sp.add_argument("--method", choices=ham.FORMULA_METHODS, default="roots")
    sp.add_argument("--all", action="store_true")
    sp.add_argument("--halfspace", type=int, default=0, metavar="R", help="also solve the half-space at radius R")
    sp.add_argument("--radius", type=float, default=None, help="lattice-sum radius")
    sp.add_argument("--strict", action="store_true")
    sp.add_argument("--strict-tol", type=float, default=1e-8)
    sp.add_argument("--out", default=None)

    sp = add("ham-sweep", cmd_ham_sweep, "H(p) over all slope orbits with max|p_k| <= N")
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--max-coord", type=int, required=True)
    sp.add_argument("--method", choices=ham.FORMULA_METHODS, default="roots")
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--check-generic", action="store_true")
    sp.add_argument("--out", default=None)

    _add_solve_args(add("flow", cmd_flow, "least supersolution by sandpile flow"), False)
    _add_solve_args(add("solve", cmd_solve, "least supersolution (active set by default)"), True)

    sp = add("halfspace", cmd_halfspace, "numerical half-space profile")
    sp.add_argument("--dim", type=int, default=None)
    sp.add_argument("--slope", required=True)
    sp.add_argument("--radius", type=int, default=64)
    sp.add_argument("--estimate-err", action="store_true")
    sp.add_argument("--refine", action="store_true")
    sp.add_argument("--out-dir", default=None)
    sp.add_argument("--out", default=None)

    sp = add("limit-halfspace", cmd_limit_halfspace, "profile on a nested half-space union")
    sp.add_argument("--zeta", action="append", required=True, help="repeat for zeta^1, zeta^2, ...")
    sp.add_argument("--radius", type=int, default=64)
    sp.add_argument("--out-dir", default=None)
    sp.add_argument("--out", default=None)

    sp = add("facets", cmd_facets, "facet extents of a solved support")
    _add_solve_args(sp, False)
    sp.add_argument("--field", default=None, help="saved float grid instead of solving")
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--directions", default=None, help="p;q;... (default: all with max|p_k| <= --max-coord)")
    sp.add_argument("--max-coord", type=int, default=3)
    sp.add_argument("--slack", type=int, default=None)
    sp.add_argument("--out", default=None)

    sp = add("levelset", cmd_levelset, "boundary samples of {H <= 1} and {Hbar >= 1}")
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--max-coord", type=int, default=10)
    sp.add_argument("--method", choices=ham.FORMULA_METHODS, default="roots")
    sp.add_argument("--out", default=None)

    sp = add("validate", cmd_validate, "check a saved field, or run a quick self-check")
    sp.add_argument("--field", default=None)
    sp.add_argument("--wetted", default=None)
    sp.add_argument("--h", type=float, default=None)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--max-coord", type=int, default=3)
    return parser


def _apply_config(parser, argv):
    # Config values become defaults of the chosen subcommand; flags still win.
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    cfg = ExperimentConfig.load(args.config)
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sp = sub.choices[args.command]
    known = {a.dest for a in sp._actions}
    unknown = set(cfg.params) - known
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    sp.set_defaults(**cfg.params)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        return int(args.func(args))
    except FacetLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
