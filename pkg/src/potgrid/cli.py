"""Command-line entry point.

Exit codes: 0 success, 2 verdict failure (reports are still written),
1 runtime error, 64 usage error.  Every run writes ``config.resolved`` in
its output directory; ``potgrid --config <dir>/config.resolved`` replays it.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .counterexample import (
    DEFAULT_LADDER,
    S_KINDS,
    UncertifiedLayerWarning,
    build_counterexample,
    charge_free,
    tensor_assemble,
    write_build_report,
)
from .envelope import (
    FunctionFamily,
    extract_singular_set,
    report_from_masks,
    sup_envelope,
    validate_singular_report,
    witness_ladder,
    write_report_bundle,
)
from .expr import Expr
from .geometry import DomainMask, GridFunction, hausdorff
from .harmonic import BoundaryData, DirichletError, dumps_model, fit_harmonic_on_compact, solve_dirichlet
from .masks import named_domain
from .separately import (
    ProductGridFunction,
    distinguished_boundary_check,
    format_slice_verdict,
    partial_max,
    rectangle_singular,
    slice_check,
    tensor_windows,
)
from .subharmonic import format_verdict, submean_test

EX_OK, EX_ERROR, EX_VERDICT, EX_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _point(text: str) -> tuple[float, float]:
    v = _floats(text)
    if len(v) != 2:
        raise argparse.ArgumentTypeError("expected 'x,y'")
    return (v[0], v[1])


def _ladder(text: str):
    out = []
    for rung in text.split(","):
        deg, nq = rung.split(":")
        out.append((int(deg), int(nq)))
    return tuple(out)


def _ladder_str(ladder) -> str:
    return ",".join(f"{d}:{q}" for d, q in ladder)


# ---------------------------------------------------------------- helpers


def _domain(args, res=None) -> DomainMask:
    return named_domain(args.domain, args.res if res is None else res, args.margin)


def _function_from(args, domain: DomainMask) -> GridFunction:
    if args.input:
        grid = io.read_grid(Path(args.input).with_name("grid.txt")) if args.grid is None else io.read_grid(args.grid)
        return io.read_function(args.input, grid)
    if not args.fn:
        raise UsageError("give --fn or --input")
    return GridFunction.from_callable(domain, Expr(args.fn).plane())


def _write_verdict(out: Path, stem: str, v) -> None:
    (out / f"{stem}.txt").write_text(format_verdict(v))
    rows = ["ix,iy,rho,margin"] + [f"{i},{j},{io.fmt(r)},{io.fmt(m)}" for i, j, r, m in v.witnesses]
    (out / f"{stem}_witness.csv").write_text("\n".join(rows) + "\n")


def _read_family_dir(d: Path):
    meta = io.read_kv(d / "family.txt")
    grid = io.read_grid(d / "grid.txt")
    return meta, grid


# ---------------------------------------------------------------- commands


def cmd_mask(args, out: Path) -> int:
    text = Path(args.spec_file).read_text() if args.spec_file else args.spec
    if not text:
        raise UsageError("give --spec or --spec-file")
    m = named_domain(text.replace(";", "\n"), args.res, args.margin)
    io.write_grid(out / "grid.txt", m.grid)
    io.write_both(out, "mask", m)
    io.write_kv(out / "summary.txt", [("cells", m.count()), ("interior", m.interior.count()), ("boundary", m.boundary.count())])
    return EX_OK


def cmd_dirichlet(args, out: Path) -> int:
    dom = _domain(args)
    bd = BoundaryData.from_callable(dom, Expr(args.bc).plane())
    u, info = solve_dirichlet(bd, tol=args.tol, max_iter=args.max_iter)
    b = bd.values[dom.boundary.cells]
    inside = u.values[dom.cells]
    slack = 10 * args.tol
    ok = inside.min() >= b.min() - slack and inside.max() <= b.max() + slack
    io.write_grid(out / "grid.txt", dom.grid)
    io.write_both(out, "u", u)
    io.write_kv(
        out / "info.txt",
        [("iterations", info["iterations"]), ("residual", io.fmt(info["residual"])), ("max_principle", ok)],
    )
    return EX_OK if ok else EX_VERDICT


def cmd_approx(args, out: Path) -> int:
    K = _domain(args)
    target = GridFunction.from_callable(K, Expr(args.fn).plane())
    charges = [tuple(_floats(c)) for c in args.charges.split(";") if c.strip()] if args.charges else []
    model, err, resid = fit_harmonic_on_compact(K, target, max_degree=args.degree, charge_locations=charges, ridge=args.ridge, return_residuals=True)
    (out / "model.txt").write_text(dumps_model(model))
    vals = np.zeros(K.grid.shape)
    vals[K.cells] = resid
    io.write_grid(out / "grid.txt", K.grid)
    io.write_both(out, "residual", GridFunction(K, vals))
    ok = args.budget is None or err < args.budget
    io.write_kv(out / "fit.txt", [("sup_error", io.fmt(err)), ("budget", args.budget), ("within_budget", ok)])
    return EX_OK if ok else EX_VERDICT


def cmd_check_subharmonic(args, out: Path) -> int:
    dom = _domain(args)
    u = _function_from(args, dom)
    h = u.grid.h
    radii = [k * h for k in _floats(args.radii_h)]
    v = submean_test(u, radii, args.tol)
    io.write_grid(out / "grid.txt", u.grid)
    io.write_both(out, "u", u)
    _write_verdict(out, "verdict", v)
    return EX_OK if v.passed else EX_VERDICT


def cmd_envelope(args, out: Path) -> int:
    dom = _domain(args)
    fns = [f for f in args.fns.split(";") if f.strip()]
    if not fns:
        raise UsageError("--fns needs at least one expression")
    fam = FunctionFamily([GridFunction.from_callable(dom, Expr(f).plane()) for f in fns])
    env = sup_envelope(fam)
    io.write_grid(out / "grid.txt", dom.grid)
    io.write_both(out, "envelope", env)
    for k, u in enumerate(fam, 1):
        io.write_csv(out / f"u_{k}.csv", u)
    verdict = submean_test(env, tol=args.tol) if args.check else None
    if verdict is not None:
        _write_verdict(out, "envelope_verdict", verdict)
    return EX_OK if verdict is None or verdict.passed else EX_VERDICT


def _levels(arg: str, default):
    if arg == "default":
        return None
    if arg == "witness":
        return default
    return _floats(arg)


def cmd_singular_set(args, out: Path) -> int:
    if args.family:
        d = Path(args.family)
        meta, grid = _read_family_dir(d)
        omega = io.read_mask(d / "omega.csv", grid)
        nu = int(meta["nu_max"])
        power = 2 if meta.get("kind") == "tensor" else 1
        truth = io.read_mask(d / "ground_truth_S.csv", grid) if (d / "ground_truth_S.csv").exists() else None
        stem = "M" if power == 2 else "u"
        members = [io.read_function(d / f"{stem}_{k}.csv", grid).restrict(omega) for k in range(1, nu + 1)]
        fam = FunctionFamily(members, is_monotone=True)
        levels = _levels(args.levels, witness_ladder(nu, power))
    else:
        dom = _domain(args)
        fns = [f for f in (args.fns or "").split(";") if f.strip()]
        if not fns:
            raise UsageError("give --family or --fns")
        fam = FunctionFamily([GridFunction.from_callable(dom, Expr(f).plane()) for f in fns])
        grid, truth = dom.grid, None
        levels = _levels(args.levels, None)
    r = args.r_h * grid.h
    rep = extract_singular_set(fam, levels, r)
    ok = write_report_bundle(rep, out)
    items = [("valid", ok)]
    if truth is not None:
        dist = hausdorff(rep.S, truth & rep.omega)
        bound = 2 * grid.h + r
        items += [("hausdorff", io.fmt(dist)), ("bound", io.fmt(bound)), ("within_bound", dist <= bound)]
        ok = ok and dist <= bound
    io.write_kv(out / "recovery.txt", items)
    return EX_OK if ok else EX_VERDICT


def _build(args, s_kind):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UncertifiedLayerWarning)
        return build_counterexample(s_kind, args.res, args.nu, args.xi0, args.R, args.ladder, args.d_cap, args.depth)


def _layer_checks(rep, tol_sub: float) -> list[tuple[str, bool]]:
    checks = []
    for l in rep.layers:
        kp, an = l.spec.Kp.cells, l.spec.An.cells
        sub = submean_test(l.v.restrict(rep.omega - l.charge_zone), tol=tol_sub)
        checks += [
            (f"layer_{l.n}_certified", l.certified),
            (f"layer_{l.n}_zero_on_Kp", bool(np.all(l.v.values[kp] == 0.0))),
            (f"layer_{l.n}_high_on_An", bool(np.all(l.v.values[an] >= l.n - 0.5))),
            (f"layer_{l.n}_submean", sub.passed),
        ]
    ws = [w.value for w in rep.witnesses]
    checks.append(("witness_bound", all(w.value >= w.n - 0.5 for w in rep.witnesses)))
    checks.append(("witness_monotone", all(b >= a for a, b in zip(ws, ws[1:]))))
    checks.append(("tail_vanishing", abs(rep.M_off - rep.M_off_1) <= 1e-12))
    return checks


def cmd_build_wiegerinck(args, out: Path) -> int:
    rep = _build(args, args.s)
    write_build_report(rep, out)
    checks = _layer_checks(rep, args.tol_sub)
    io.write_kv(out / "checks.txt", checks)
    return EX_OK if all(ok for _, ok in checks) else EX_VERDICT


def cmd_build_tensor(args, out: Path) -> int:
    rep1 = _build(args, args.s1)
    rep2 = rep1 if args.s2 == args.s1 else _build(args, args.s2)
    nu = args.nu
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UncertifiedLayerWarning)
        u = tensor_assemble(rep1.layers, rep2.layers, nu)
        partial = [tensor_assemble(rep1.layers, rep2.layers, k) for k in range(1, nu + 1)]
    grid1 = rep1.omega.grid
    io.write_grid(out / "grid.txt", grid1)
    io.write_csv(out / "omega.csv", rep1.omega)
    io.write_both(out, "ground_truth_S", rep1.ground_truth_S)
    io.write_both(out, "ground_truth_S2", rep2.ground_truth_S)
    for k, uk in enumerate(partial, 1):
        io.write_csv(out / f"M_{k}.csv", partial_max(uk, 1))
        io.write_csv(out / f"N_{k}.csv", partial_max(uk, 2))
    io.write_kv(out / "family.txt", [("kind", "tensor"), ("nu_max", nu)])

    zone1 = charge_free(rep1.layers[:nu], rep1.omega)
    zone2 = charge_free(rep2.layers[:nu], rep2.omega)
    S1_anchor = [tuple(rep1.ground_truth_S.indices()[len(rep1.ground_truth_S.indices()) // 2])]
    S2_anchor = [tuple(rep2.ground_truth_S.indices()[len(rep2.ground_truth_S.indices()) // 2])]
    vx, vy = slice_check(u, args.slices, tol=args.tol_sub, seed=args.seed, extra_x=S2_anchor, extra_y=S1_anchor, region1=zone1, region2=zone2)
    (out / "slices.txt").write_text(format_slice_verdict("x", vx) + format_slice_verdict("y", vy))

    w1, w2 = rep1.witnesses[nu - 1], rep2.witnesses[nu - 1]
    wval = u.value(w1.cell, w2.cell)
    wbound = (nu - 0.5) ** 2

    levels = witness_ladder(nu, 2)
    rect = rectangle_singular(lambda k: partial[k - 1], nu, levels, args.r_h * grid1.h)
    io.write_both(out, "S1", rect.S1)
    io.write_both(out, "S2", rect.S2)
    bound = 2 * grid1.h + args.r_h * grid1.h
    h1 = hausdorff(rect.S1, rep1.ground_truth_S)
    h2 = hausdorff(rect.S2, rep2.ground_truth_S)

    db_rows = ["window,passed,M_db,max_product,argmax1_ix,argmax1_iy,argmax2_ix,argmax2_iy,constant_case"]
    db_ok = True
    for k, (W1, W2) in enumerate(tensor_windows(rep1.ground_truth_S, rep2.ground_truth_S, args.windows, 0.5, 0.5, args.seed), 1):
        res = distinguished_boundary_check(u.restrict(W1, W2))
        db_ok &= res.passed
        (a, b) = res.argmax
        db_rows.append(f"{k},{res.passed},{io.fmt(res.M_db)},{io.fmt(res.max_product)},{a[0]},{a[1]},{b[0]},{b[1]},{res.constant_case}")
    (out / "distinguished_boundary.csv").write_text("\n".join(db_rows) + "\n")

    checks = [
        ("layers_certified", rep1.all_certified and rep2.all_certified),
        ("slices_x", vx.passed),
        ("slices_y", vy.passed),
        ("witness_pair", wval >= wbound),
        ("S1_recovered", h1 <= bound),
        ("S2_recovered", h2 <= bound),
        ("distinguished_boundary", bool(db_ok)),
    ]
    io.write_kv(
        out / "tensor.txt",
        [("witness_value", io.fmt(wval)), ("witness_bound", io.fmt(wbound)), ("hausdorff_S1", io.fmt(h1)), ("hausdorff_S2", io.fmt(h2)), ("bound", io.fmt(bound))] + checks,
    )
    return EX_OK if all(ok for _, ok in checks) else EX_VERDICT


def cmd_check_product(args, out: Path) -> int:
    d1 = named_domain(args.domain1, args.res, args.margin)
    d2 = named_domain(args.domain2, args.res, args.margin)
    fn = Expr(args.fn, variables=("x1", "x2", "y1", "y2"))
    u = ProductGridFunction.from_callable(d1, d2, lambda X1, X2, Y1, Y2: fn(x1=X1, x2=X2, y1=Y1, y2=Y2))
    vx, vy = slice_check(u, args.slices, tol=args.tol, seed=args.seed)
    (out / "slices.txt").write_text(format_slice_verdict("x", vx) + format_slice_verdict("y", vy))
    io.write_grid(out / "grid.txt", d1.grid)
    io.write_csv(out / "M.csv", partial_max(u, 1))
    io.write_csv(out / "N.csv", partial_max(u, 2))
    db = distinguished_boundary_check(u)
    (a, b) = db.argmax
    io.write_kv(
        out / "distinguished_boundary.txt",
        [("passed", db.passed), ("M_db", io.fmt(db.M_db)), ("max_product", io.fmt(db.max_product)), ("argmax", f"{a[0]} {a[1]} {b[0]} {b[1]}"), ("constant_case", db.constant_case)],
    )
    return EX_OK if vx.passed and vy.passed and db.passed else EX_VERDICT


def cmd_validate(args, out: Path) -> int:
    d = Path(args.report)
    grid = io.read_grid(d / "grid.txt")
    omega = io.read_mask(d / "omega.csv", grid)
    S = io.read_mask(d / "S.csv", grid)
    rep = report_from_masks(S, omega, args.r_h * grid.h)
    flags = validate_singular_report(rep, omega)
    io.write_kv(out / "validation.txt", list(zip(("closed_ok", "nowhere_dense_ok", "components_ok"), flags)))
    return EX_OK if all(flags) else EX_VERDICT


# ---------------------------------------------------------------- parser


def _common(p, res):
    p.add_argument("--config", help="key = value file; flags override its entries")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--res", type=int, default=res, help="cells per axis")


def _domain_opts(p, default="disk"):
    p.add_argument("--domain", default=default, help="disk, square, annulus or a mask expression")
    p.add_argument("--margin", type=float, default=0.0, help="frame padding around [-1, 1]^2")


def _builder_opts(p, res):
    _common(p, res)
    p.add_argument("--nu", type=int, default=4)
    p.add_argument("--xi0", type=_point, default=(0.0, 0.0))
    p.add_argument("--R", type=float, default=None, help="cap radius (default: half the width)")
    p.add_argument("--d-cap", type=float, default=2.0)
    p.add_argument("--depth", type=int, default=2, help="Cantor depth")
    p.add_argument("--ladder", type=_ladder, default=DEFAULT_LADDER, help="degree:charges,...")
    p.add_argument("--tol-sub", type=float, default=1e-4)


def build_parser() -> Parser:
    top = Parser(prog="potgrid", description="Potential theory on planar lattices.")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mask", help="rasterise a mask spec")
    _common(p, 129)
    p.add_argument("--spec", help="mask expression(s), ';' separated")
    p.add_argument("--spec-file")
    p.add_argument("--margin", type=float, default=0.0)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("dirichlet", help="discrete Dirichlet problem")
    _common(p, 129)
    _domain_opts(p, "square")
    p.add_argument("--bc", required=True, help="boundary data expression in x, y")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=10**6)
    p.set_defaults(func=cmd_dirichlet)

    p = sub.add_parser("approx", help="harmonic fit on a compact mask")
    _common(p, 129)
    _domain_opts(p, "annulus")
    p.add_argument("--fn", required=True)
    p.add_argument("--degree", type=int, default=12)
    p.add_argument("--charges", default="", help="x,y;x,y;...")
    p.add_argument("--ridge", type=float, default=None)
    p.add_argument("--budget", type=float, default=None)
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("check-subharmonic", help="sub-mean-value verdict")
    _common(p, 129)
    _domain_opts(p)
    p.add_argument("--fn")
    p.add_argument("--input", help="function CSV (grid.txt alongside unless --grid)")
    p.add_argument("--grid")
    p.add_argument("--radii-h", default="4,8,16", help="radii in units of h")
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=cmd_check_subharmonic)

    p = sub.add_parser("envelope", help="upper envelope of a finite family")
    _common(p, 129)
    _domain_opts(p)
    p.add_argument("--fns", required=True, help="expressions separated by ';'")
    p.add_argument("--check", action="store_true", help="also run the submean test on the envelope")
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=cmd_envelope)

    p = sub.add_parser("singular-set", help="Baire singular-set extraction")
    _common(p, 129)
    _domain_opts(p)
    p.add_argument("--family", help="build-wiegerinck or build-tensor output directory")
    p.add_argument("--fns")
    p.add_argument("--levels", default="witness", help="'default', 'witness' or a comma list")
    p.add_argument("--r-h", type=float, default=2.0, help="morphology radius in units of h")
    p.set_defaults(func=cmd_singular_set)

    p = sub.add_parser("build-wiegerinck", help="layered blow-up counterexample")
    _builder_opts(p, 256)
    p.add_argument("--s", choices=S_KINDS, default="segment")
    p.set_defaults(func=cmd_build_wiegerinck)

    p = sub.add_parser("build-tensor", help="separately subharmonic tensor counterexample")
    _builder_opts(p, 256)
    p.add_argument("--s1", choices=S_KINDS, default="segment")
    p.add_argument("--s2", choices=S_KINDS, default="segment")
    p.add_argument("--slices", type=int, default=7)
    p.add_argument("--windows", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--r-h", type=float, default=2.0)
    p.set_defaults(func=cmd_build_tensor)

    p = sub.add_parser("check-product", help="slice and distinguished-boundary checks")
    _common(p, 65)
    p.add_argument("--fn", required=True, help="expression in x1, x2, y1, y2")
    p.add_argument("--domain1", default="disk")
    p.add_argument("--domain2", default="disk")
    p.add_argument("--margin", type=float, default=0.0)
    p.add_argument("--slices", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=cmd_check_product)

    p = sub.add_parser("validate", help="re-validate a singular-set bundle")
    _common(p, 129)
    p.add_argument("--report", required=True)
    p.add_argument("--r-h", type=float, default=2.0)
    p.set_defaults(func=cmd_validate)
    return top


def _subparser(top: Parser, name: str) -> Parser:
    for action in top._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    raise UsageError(f"unknown command {name!r}")


def _config_value(action, text: str):
    if text == "None":
        return None
    if isinstance(action, argparse._StoreTrueAction):
        return text == "True"
    if action.type is _point:
        return _point(text)
    if action.type is _ladder:
        return _ladder(text)
    return action.type(text) if action.type else text


def _render(value) -> str:
    if isinstance(value, float):
        return io.fmt(value)
    if isinstance(value, tuple) and value and isinstance(value[0], tuple):
        return _ladder_str(value)
    if isinstance(value, tuple):
        return ",".join(io.fmt(v) for v in value)
    return str(value)


# options whose values may start with '-' (expressions)
_EXPR_OPTS = ("--fn", "--fns", "--bc", "--spec", "--xi0", "--charges", "--levels")


def _glue(argv: list[str]) -> list[str]:
    out, i = [], 0
    while i < len(argv):
        if argv[i] in _EXPR_OPTS and i + 1 < len(argv):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def _resolve(argv: list[str]):
    top = build_parser()
    argv = _glue(argv)
    if argv and argv[0] == "--config":
        if len(argv) < 2:
            top.error("--config needs a file")
        command = io.read_kv(argv[1]).get("command")
        if not command:
            top.error("config file has no 'command' entry")
        argv = [command] + argv
    if not argv or argv[0].startswith("-"):
        if argv and argv[0] in ("-h", "--help"):
            top.parse_args(argv)
        top.error("a command is required")
    pre = Parser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv[1:])
    if known.config:
        sp = _subparser(top, argv[0])
        actions = {a.dest: a for a in sp._actions}
        defaults = {}
        for key, text in io.read_kv(known.config).items():
            if key == "command":
                continue
            if key not in actions:
                top.error(f"unknown config key {key!r}")
            defaults[key] = _config_value(actions[key], text)
        sp.set_defaults(**defaults)
    return top.parse_args(argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _resolve(argv)
    except SystemExit as e:
        return int(e.code or 0)
    except UsageError as e:
        print(f"potgrid: error: {e}", file=sys.stderr)
        return EX_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = [("command", args.command)]
    resolved += [(k, _render(v)) for k, v in sorted(vars(args).items()) if k not in ("command", "func", "config")]
    io.write_kv(out / "config.resolved", resolved)
    try:
        return args.func(args, out)
    except UsageError as e:
        print(f"potgrid: error: {e}", file=sys.stderr)
        return EX_USAGE
    except (ValueError, DirichletError, OSError, KeyError) as e:
        print(f"potgrid: error: {e}", file=sys.stderr)
        return EX_ERROR


if __name__ == "__main__":
    sys.exit(main())
