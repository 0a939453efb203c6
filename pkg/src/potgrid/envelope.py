"""Upper envelopes of finite families and singular-set extraction.

The singular set is built by the Baire construction: with
``E_n = {u < level_n}`` and ``G = union of int_r(closure_r(E_n))`` the set
``S = Omega \\ G`` is where ``u`` is not bounded above by the ladder on any
neighbourhood.  Cells outside ``Omega`` are "don't care" in the interior
step, so a band touching the frame of ``Omega`` is not manufactured there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from . import io
from .geometry import Component, DomainMask, GridFunction, components, morph_closure, morph_interior
from .subharmonic import FamilyMax, family_max_principle


class FunctionFamily:
    """Finite family ``u_1 .. u_size`` on one support.

    Members are either given as a list or produced on demand by
    ``generator(nu)`` (1-based).
    """

    def __init__(self, members=None, generator=None, size=None, is_monotone=False):
        if (members is None) == (generator is None):
            raise ValueError("give exactly one of members / generator")
        if members is not None:
            members = list(members)
            size = len(members)
            generator = lambda nu: members[nu - 1]
        if not size:
            raise ValueError("empty family")
        self._gen = generator
        self.size = int(size)
        self.is_monotone = is_monotone
        self.support = None
        self.support = self.member(1).support

    def member(self, nu: int) -> GridFunction:
        if not 1 <= nu <= self.size:
            raise IndexError(f"member index {nu} outside 1..{self.size}")
        u = self._gen(nu)
        if self.support is not None and u.support != self.support:
            raise ValueError("family members must share one support")
        return u

    def __len__(self):
        return self.size

    def __iter__(self):
        for nu in range(1, self.size + 1):
            yield self.member(nu)


def sup_envelope(fam) -> GridFunction:
    members = iter(fam)
    try:
        u = next(members)
    except StopIteration:
        raise ValueError("empty family") from None
    for v in members:
        u = u.maximum(v)
    return u


def default_ladder(u: GridFunction, count: int = 16) -> list[float]:
    """``count`` equispaced levels from min u with the top two above max u."""
    lo, hi = u.finite_range()
    step = (hi - lo) / (count - 3) if hi > lo else 1.0
    return [lo + k * step for k in range(count)]


def witness_ladder(nu: int, power: int = 1) -> list[float]:
    return [(k - 0.5) ** power for k in range(1, nu + 1)]


@dataclass
class SingularSetReport:
    S: DomainMask
    G: DomainMask
    omega: DomainMask
    levels: list
    r: float
    E: list = field(default_factory=list)
    ints: list = field(default_factory=list)
    components: list = field(default_factory=list)
    nowhere_dense: bool = True
    all_components_touch_boundary: bool = True


def report_from_masks(S: DomainMask, omega: DomainMask, r=None, levels=(), E=(), ints=()) -> SingularSetReport:
    """Diagnostics for a singular set, given directly or from the pipeline."""
    if not S.issubset(omega):
        raise ValueError("S must lie inside Omega")
    r = 2 * omega.grid.h if r is None else r
    comps = components(S, omega)
    return SingularSetReport(
        S=S,
        G=omega - S,
        omega=omega,
        levels=list(levels),
        r=r,
        E=list(E),
        ints=list(ints),
        components=comps,
        nowhere_dense=morph_interior(S, 2 * omega.grid.h).is_empty(),
        all_components_touch_boundary=all(c.touches_boundary for c in comps),
    )


def extract_singular_set(fam, levels=None, r=None) -> SingularSetReport:
    u = fam if isinstance(fam, GridFunction) else sup_envelope(fam)
    omega = u.support
    grid = omega.grid
    r = 2 * grid.h if r is None else float(r)
    levels = default_ladder(u) if levels is None else [float(t) for t in levels]
    if len(levels) < 3:
        raise ValueError("level ladder too coarse")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly increasing")
    outside = omega.complement()
    E, ints = [], []
    G = DomainMask.empty(grid)
    for lvl in levels:
        below = omega.cells & (u.neg_inf | (u.values < lvl))
        En = DomainMask(grid, below)
        if En.is_empty():
            In = En
        else:
            In = morph_interior(morph_closure(En, r) | outside, r, outside=True) & omega
        E.append(En)
        ints.append(In)
        G = G | In
    return report_from_masks(omega - G, omega, r, levels, E, ints)


def validate_singular_report(rep: SingularSetReport, omega: DomainMask):
    """Return ``(closed_ok, nowhere_dense_ok, components_ok)``."""
    S, G = rep.S, rep.G
    closed_ok = S == omega - G and (S & G).is_empty() and G.issubset(omega)
    if rep.ints:
        union = DomainMask.empty(omega.grid)
        for m in rep.ints:
            union = union | m
        closed_ok = closed_ok and union == G
    nowhere_dense_ok = morph_interior(S, 2 * omega.grid.h).is_empty()
    comps = components(S, omega)
    components_ok = all(c.touches_boundary and c.mask.count() > 1 for c in comps)
    return bool(closed_ok), bool(nowhere_dense_ok), bool(components_ok)


def enclosure_checks(fam, rep: SingularSetReport, pad=None) -> list[tuple[Component, FamilyMax]]:
    """Family maximum principle on a neighbourhood of every enclosed component.

    A component of S that misses the boundary of Omega is wrapped in its
    ``pad``-neighbourhood; a subharmonic family bounded on that contour
    cannot blow up inside it, so the check fails for genuine enclosed
    singularities.
    """
    pad = 3 * rep.omega.grid.h if pad is None else pad
    out = []
    for comp in rep.components:
        if comp.touches_boundary:
            continue
        region = morph_closure(comp.mask, pad) & rep.omega
        out.append((comp, family_max_principle([u.restrict(region) for u in fam])))
    return out


def _frame_cells(rep: SingularSetReport) -> int:
    near = morph_closure(rep.omega.boundary, rep.omega.grid.h)
    return (rep.S & near).count()


def diagnostics_text(rep: SingularSetReport, omega: DomainMask | None = None) -> str:
    omega = rep.omega if omega is None else omega
    closed_ok, nd_ok, comp_ok = validate_singular_report(rep, omega)
    lines = [
        f"levels = {' '.join(io.fmt(t) for t in rep.levels)}",
        f"r = {io.fmt(rep.r)}",
        f"omega_cells = {omega.count()}",
        f"S_cells = {rep.S.count()}",
        f"G_cells = {rep.G.count()}",
        f"nowhere_dense = {rep.nowhere_dense}",
        f"all_components_touch_boundary = {rep.all_components_touch_boundary}",
        f"closed_ok = {closed_ok}",
        f"nowhere_dense_ok = {nd_ok}",
        f"components_ok = {comp_ok}",
        f"frame_adjacent_S_cells = {_frame_cells(rep)}",
        f"components = {len(rep.components)}",
    ]
    for k, c in enumerate(rep.components, 1):
        lines.append(f"component {k} cells {c.mask.count()} touches_boundary {c.touches_boundary}")
    for k, (En, In) in enumerate(zip(rep.E, rep.ints), 1):
        lines.append(f"level {k} E_cells {En.count()} int_closure_cells {In.count()}")
    return "\n".join(lines) + "\n"


def write_report_bundle(rep: SingularSetReport, outdir) -> bool:
    """Write masks, per-level audit trail and diagnostics; return the all-ok flag."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_grid(out / "grid.txt", rep.omega.grid)
    io.write_csv(out / "omega.csv", rep.omega)
    io.write_both(out, "S", rep.S)
    io.write_both(out, "G", rep.G)
    for k, En in enumerate(rep.E, 1):
        io.write_csv(out / f"E_{k}.csv", En)
    (out / "diagnostics.txt").write_text(diagnostics_text(rep))
    return all(validate_singular_report(rep, rep.omega))


def growth_profile(fam, region: DomainMask) -> list[float]:
    """max of each member over ``region``; the observable stand-in for blow-up."""
    vals = []
    for u in fam:
        fin = region.cells & u.finite_cells()
        vals.append(float(u.values[fin].max()) if fin.any() else -math.inf)
    return vals
