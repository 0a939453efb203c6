"""Blow-up counterexample builder: layered harmonic bumps summing to an envelope
that is locally unbounded exactly along a prescribed thin set ``S``.

Geometry is expressed in builder units: the grid spans 8 units, so the shells
``1/n <= d(x, S) <= 2`` and the bands ``d(x, S) = 1/(n+1)`` keep their
absolute sizes inside any resolution.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .geometry import EPS, DomainMask, GridFunction, GridSpec, distance_to_set, morph_interior
from .harmonic import HarmonicModel, dumps_model, eval_model, fit_harmonic_on_compact
from .masks import parse_mask

WIDTH = 8.0
ERROR_BUDGET = 0.5
DEFAULT_LADDER = ((8, 4), (12, 8), (16, 16), (24, 32))
S_KINDS = ("segment", "cross", "cantor")


class UncertifiedLayerWarning(UserWarning):
    pass


def builder_grid(res: int) -> GridSpec:
    return GridSpec.centered(WIDTH, res)


def s_mask(kind: str, grid: GridSpec, depth: int = 2) -> DomainMask:
    """Whitelisted singular sets, each meeting the frame of the grid."""
    x0, y0 = grid.origin
    x1, y1 = x0 + (grid.nx - 1) * grid.h, y0 + (grid.ny - 1) * grid.h
    if kind == "segment":
        spec = f"segment(0, {y0!r}, 0, {y1!r})"
    elif kind == "cross":
        spec = f"segment(0, {y0!r}, 0, {y1!r})\nsegment({x0!r}, 0, {x1!r}, 0)"
    elif kind == "cantor":
        spec = f"cantor_bars({int(depth)}, -1, 1, {y0!r}, {y1!r})"
    else:
        raise ValueError(f"S must be one of {', '.join(S_KINDS)}")
    return parse_mask(spec, grid)


@dataclass
class LayerSpec:
    n: int
    Kp: DomainMask
    An: DomainMask
    target_low: float = 0.0
    target_high: float = 0.0
    error_budget: float = ERROR_BUDGET

    @property
    def K(self) -> DomainMask:
        return self.Kp | self.An

    def target(self) -> GridFunction:
        return GridFunction(self.K, np.where(self.An.cells, self.target_high, self.target_low))


def plan_layers(S: DomainMask, xi0, nu_max: int, omega: DomainMask, R: float, d_cap: float = 2.0) -> list[LayerSpec]:
    grid = S.grid
    h = grid.h
    if S.is_empty():
        raise ValueError("S is empty")
    if not morph_interior(S, 2 * h).is_empty():
        raise ValueError("S is not nowhere dense at resolution")
    if not S.cells[grid.nearest_cell(*xi0)]:
        raise ValueError("xi0 does not lie on S")
    if nu_max < 1:
        raise ValueError("nu_max must be at least 1")
    if 1.0 / (nu_max + 1) < 2 * h * (1 - EPS):
        raise ValueError("increase resolution or lower ν_max")
    dist = distance_to_set(S, DomainMask.full(grid)).values
    if np.any((dist <= 3.0) & ~omega.cells):
        raise ValueError("Omega must contain {d(x, S) <= 3}")
    X, Y = grid.coords()
    ball = np.hypot(X - xi0[0], Y - xi0[1]) <= R + EPS * h
    top = min(2.0, d_cap)
    specs = []
    for n in range(1, nu_max + 1):
        kp = (dist >= 1.0 / n - EPS * h) & (dist <= top + EPS * h) & ball & omega.cells
        an = (np.abs(dist - 1.0 / (n + 1)) <= h * (1 + EPS)) & ball & omega.cells
        if not an.any():
            raise ValueError(f"band A_{n} is empty")
        if not kp.any():
            raise ValueError(f"shell K'_{n} is empty")
        if np.any(kp & an):
            raise ValueError("increase resolution or lower ν_max")
        specs.append(LayerSpec(n, DomainMask(grid, kp), DomainMask(grid, an), 0.0, float(n + 1)))
    return specs


def charge_sites(S: DomainMask, count: int, xi0=None, reach=None) -> np.ndarray:
    """``count`` equispaced S cells (raster order), nudged by h/2 in y off the lattice."""
    pts = S.points()
    if xi0 is not None and reach is not None:
        near = np.hypot(pts[:, 0] - xi0[0], pts[:, 1] - xi0[1]) <= reach
        if near.any():
            pts = pts[near]
    idx = np.unique(np.rint(np.linspace(0, len(pts) - 1, min(count, len(pts)))).astype(int))
    out = pts[idx].copy()
    out[:, 1] += 0.5 * S.grid.h
    return out


@dataclass
class Layer:
    spec: LayerSpec
    model: HarmonicModel
    v: GridFunction
    achieved_sup_error: float
    certified: bool
    attempts: list = field(default_factory=list)  # (degree, charges, sup_error)
    charge_zone: DomainMask | None = None

    @property
    def n(self):
        return self.spec.n


def bump(model: HarmonicModel, omega: DomainMask) -> GridFunction:
    vals = np.zeros(omega.grid.shape)
    H = eval_model(model, omega.points())
    vals[omega.cells] = np.maximum(np.abs(H) - 1.0, 0.0)
    return GridFunction(omega, vals)


def charge_zone(omega: DomainMask, charges, radius: float) -> DomainMask:
    X, Y = omega.grid.coords()
    near = np.zeros(omega.grid.shape, bool)
    for px, py in charges:
        near |= np.hypot(X - px, Y - py) < radius - EPS * omega.grid.h
    return DomainMask(omega.grid, near & omega.cells)


def charge_free(layers, omega: DomainMask) -> DomainMask:
    """Cells of omega at distance >= 2h from every charge of every layer."""
    out = omega
    for l in layers:
        out = out - l.charge_zone
    return out


def build_layer(spec: LayerSpec, S: DomainMask, omega: DomainMask, ladder=DEFAULT_LADDER, xi0=None, reach=None) -> Layer:
    """Fit ``H_n`` up the escalation ladder; stop at the first certified rung."""
    K, target = spec.K, spec.target()
    best = None
    attempts = []
    for degree, nq in ladder:
        sites = charge_sites(S, nq, xi0, reach)
        model, err = fit_harmonic_on_compact(K, target, max_degree=degree, charge_locations=sites)
        attempts.append((degree, len(sites), err))
        if best is None or err < best[1]:
            best = (model, err, sites)
        if err < spec.error_budget:
            break
    model, err, sites = best
    return Layer(
        spec=spec,
        model=model,
        v=bump(model, omega),
        achieved_sup_error=err,
        certified=err < spec.error_budget,
        attempts=attempts,
        charge_zone=charge_zone(omega, sites, 2 * omega.grid.h),  # cells closer than 2h
    )


def assemble(layers, nu: int, omega: DomainMask | None = None, report=None) -> GridFunction:
    """Partial sum ``u_nu = v_1 + ... + v_nu``."""
    if nu < 0 or nu > len(layers):
        raise ValueError(f"nu must lie in 0..{len(layers)}")
    if omega is None:
        if not layers:
            raise ValueError("omega required when there are no layers")
        omega = layers[0].v.support
    u = GridFunction(omega, np.zeros(omega.grid.shape))
    for layer in layers[:nu]:
        if not layer.certified:
            msg = f"layer {layer.n} is uncertified (sup error {layer.achieved_sup_error:.4g})"
            warnings.warn(msg, UncertifiedLayerWarning, stacklevel=2)
            if report is not None and msg not in report.warnings:
                report.warnings.append(msg)
        u = u + layer.v
    return u


@dataclass
class Witness:
    n: int
    cell: tuple
    point: tuple
    distance: float
    value: float
    certified: bool
    contributions: list = field(default_factory=list)


def witness_sequence(S: DomainMask, x1, layers, nu=None) -> list[Witness]:
    """Nearest ``A_n`` cell to ``x1`` and the partial sum ``u_n`` there, for n <= nu."""
    grid = S.grid
    if not S.cells[grid.nearest_cell(*x1)]:
        raise ValueError("x1 does not lie on S")
    nu = len(layers) if nu is None else nu
    out = []
    partial = np.zeros(grid.shape)
    for layer in layers[:nu]:
        n = layer.n
        partial = partial + layer.v.values
        idx = layer.spec.An.indices()
        pts = layer.spec.An.points()
        r = np.hypot(pts[:, 0] - x1[0], pts[:, 1] - x1[1])
        k = int(np.argmin(r))
        if abs(r[k] - 1.0 / (n + 1)) > grid.h * (1 + EPS):
            raise ValueError(f"no A_{n} cell at distance 1/{n + 1} from x1")
        ix, iy = int(idx[k, 0]), int(idx[k, 1])
        contrib = [float(l.v.values[ix, iy]) for l in layers[:n]]
        out.append(Witness(n, (ix, iy), tuple(map(float, pts[k])), float(r[k]), float(partial[ix, iy]), layer.certified, contrib))
    return out


def off_region(S: DomainMask, xi0, R: float, omega: DomainMask) -> DomainMask:
    """{1/2 <= d(x, S) <= 2} inside the cap, where only layer 1 may be non-zero."""
    grid = S.grid
    d = distance_to_set(S, omega).values
    X, Y = grid.coords()
    ball = np.hypot(X - xi0[0], Y - xi0[1]) <= R + EPS * grid.h
    return DomainMask(grid, (d >= 0.5 - EPS * grid.h) & (d <= 2 + EPS * grid.h) & ball & omega.cells)


@dataclass
class BuildReport:
    layers: list
    u_partial: list  # u_0 .. u_nu_max
    witnesses: list
    ground_truth_S: DomainMask
    omega: DomainMask
    off: DomainMask
    M_off: float
    M_off_1: float
    xi0: tuple
    R: float
    warnings: list = field(default_factory=list)

    @property
    def all_certified(self) -> bool:
        return all(l.certified for l in self.layers)


def build_counterexample(
    s_kind: str = "segment",
    res: int = 256,
    nu_max: int = 4,
    xi0=(0.0, 0.0),
    R: float | None = None,
    ladder=DEFAULT_LADDER,
    d_cap: float = 2.0,
    depth: int = 2,
) -> BuildReport:
    grid = builder_grid(res)
    omega = DomainMask.full(grid)
    S = s_mask(s_kind, grid, depth)
    R = WIDTH / 2 if R is None else float(R)
    xi0 = tuple(map(float, xi0))
    specs = plan_layers(S, xi0, nu_max, omega, R, d_cap)
    reach = R + min(2.0, d_cap) + 2 * grid.h
    layers = [build_layer(s, S, omega, ladder, xi0, reach) for s in specs]
    rep = BuildReport(layers, [], [], S, omega, DomainMask.empty(grid), 0.0, 0.0, xi0, R)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UncertifiedLayerWarning)
        rep.u_partial = [assemble(layers, nu, omega, rep) for nu in range(nu_max + 1)]
    rep.witnesses = witness_sequence(S, xi0, layers)
    rep.off = off_region(S, xi0, R, omega)
    rep.M_off = rep.u_partial[-1].values[rep.off.cells].max()
    rep.M_off_1 = rep.u_partial[1].values[rep.off.cells].max()
    return rep


def tensor_assemble(layers_x, layers_y, nu: int):
    """``u(x, y) = sum_{n <= nu} v'_n(x) v''_n(y)`` as a lazy product function."""
    from .separately import ProductGridFunction

    if nu < 0 or nu > len(layers_x) or nu > len(layers_y):
        raise ValueError("nu exceeds one of the layer stacks")
    s1 = layers_x[0].v.support
    s2 = layers_y[0].v.support
    for l in list(layers_x[:nu]) + list(layers_y[:nu]):
        if not l.certified:
            warnings.warn(f"layer {l.n} is uncertified", UncertifiedLayerWarning, stacklevel=2)
    return ProductGridFunction.from_terms(s1, s2, [(lx.v, ly.v) for lx, ly in zip(layers_x[:nu], layers_y[:nu])])


def certification_log(rep: BuildReport) -> str:
    lines = []
    for l in rep.layers:
        for deg, nq, err in l.attempts:
            lines.append(f"layer {l.n} degree {deg} charges {nq} sup_error {io.fmt(err)} budget {io.fmt(l.spec.error_budget)}")
        lines.append(f"layer {l.n} certified {l.certified} sup_error {io.fmt(l.achieved_sup_error)}")
    lines += [f"warning {w}" for w in rep.warnings]
    return "\n".join(lines) + "\n"


def diagnostics_text(rep: BuildReport) -> str:
    lines = [
        f"nu_max = {len(rep.layers)}",
        f"all_certified = {rep.all_certified}",
        f"M_off = {io.fmt(rep.M_off)}",
        f"M_off_1 = {io.fmt(rep.M_off_1)}",
        f"tail_vanishing = {abs(rep.M_off - rep.M_off_1) <= 1e-12}",
        f"off_region_cells = {rep.off.count()}",
    ]
    for l in rep.layers:
        kp, an = l.spec.Kp.cells, l.spec.An.cells
        lines.append(
            f"layer {l.n} Kp_cells {int(kp.sum())} An_cells {int(an.sum())} "
            f"max_v_on_Kp {io.fmt(l.v.values[kp].max())} min_v_on_An {io.fmt(l.v.values[an].min())}"
        )
    return "\n".join(lines) + "\n"


def write_build_report(rep: BuildReport, outdir) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    grid = rep.omega.grid
    io.write_grid(out / "grid.txt", grid)
    io.write_csv(out / "omega.csv", rep.omega)
    io.write_both(out, "ground_truth_S", rep.ground_truth_S)
    for l in rep.layers:
        (out / f"model_{l.n}.txt").write_text(dumps_model(l.model))
        io.write_both(out, f"v_{l.n}", l.v)
    for nu, u in enumerate(rep.u_partial):
        io.write_csv(out / f"u_{nu}.csv", u)
    io.write_pgm(out / f"u_{len(rep.layers)}.pgm", rep.u_partial[-1])
    rows = ["n,ix,iy,x,y,distance,value,certified," + ",".join(f"v_{k}" for k in range(1, len(rep.layers) + 1))]
    for w in rep.witnesses:
        contrib = w.contributions + [math.nan] * (len(rep.layers) - len(w.contributions))
        rows.append(
            ",".join([str(w.n), str(w.cell[0]), str(w.cell[1]), io.fmt(w.point[0]), io.fmt(w.point[1]), io.fmt(w.distance), io.fmt(w.value), str(w.certified)] + [io.fmt(c) for c in contrib])
        )
    (out / "witness.csv").write_text("\n".join(rows) + "\n")
    (out / "certification.log").write_text(certification_log(rep))
    (out / "diagnostics.txt").write_text(diagnostics_text(rep))
    io.write_kv(out / "family.txt", [("kind", "partial_sums"), ("nu_max", len(rep.layers)), ("xi0_x", io.fmt(rep.xi0[0])), ("xi0_y", io.fmt(rep.xi0[1])), ("R", io.fmt(rep.R))])
