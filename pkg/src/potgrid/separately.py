"""Functions on products of two planar lattice domains.

A point of the product is a pair of cells ``(a, b)`` with ``a`` in the first
support and ``b`` in the second.  Coordinates of ``a`` are ``(x1, x2)``,
those of ``b`` are ``(y1, y2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .envelope import FunctionFamily, SingularSetReport, extract_singular_set, validate_singular_report
from .geometry import DomainMask, GridFunction, components, distance_to_set
from .subharmonic import circle_kernel, submean_test

BLOCK_ENTRIES = 1 << 21  # values per evaluated block


def _rows_per_block(m: int) -> int:
    return max(1, BLOCK_ENTRIES // max(m, 1))


class ProductGridFunction:
    """Lazy real function on ``support1 x support2``.

    ``block(P, Q)`` maps an (n, 2) array of points of the first factor and an
    (m, 2) array of points of the second to the (n, m) value matrix.  When the
    function is a finite sum of products ``f_k(x) g_k(y)`` the factors are
    kept, and blocks become matrix products.
    """

    def __init__(self, support1: DomainMask, support2: DomainMask, block, terms=None):
        self.support1 = support1
        self.support2 = support2
        self._block = block
        self.terms = terms
        self._pmax = {}

    @classmethod
    def from_callable(cls, support1, support2, fn):
        def block(P, Q):
            X1, Y1 = np.meshgrid(P[:, 0], Q[:, 0], indexing="ij")
            X2, Y2 = np.meshgrid(P[:, 1], Q[:, 1], indexing="ij")
            return np.broadcast_to(np.asarray(fn(X1, X2, Y1, Y2), float), X1.shape)

        return cls(support1, support2, block)

    @classmethod
    def from_terms(cls, support1, support2, terms):
        """Separable sum ``sum_k f_k(x) g_k(y)``; each ``f_k``/``g_k`` is a GridFunction."""
        terms = list(terms)
        for f, g in terms:
            if f.support != support1 or g.support != support2:
                raise ValueError("term factors must live on the two supports")
        g1, g2 = support1.grid, support2.grid
        F = [f.values for f, _ in terms]
        Gs = [g.values for _, g in terms]

        def lookup(P, grid):
            ix = np.rint((P[:, 0] - grid.origin[0]) / grid.h).astype(int)
            iy = np.rint((P[:, 1] - grid.origin[1]) / grid.h).astype(int)
            return ix, iy

        def block(P, Q):
            if not terms:
                return np.zeros((len(P), len(Q)))
            a = lookup(P, g1)
            b = lookup(Q, g2)
            A = np.column_stack([f[a] for f in F])
            B = np.column_stack([g[b] for g in Gs])
            return A @ B.T

        return cls(support1, support2, block, terms)

    def block(self, m1: DomainMask | None = None, m2: DomainMask | None = None) -> np.ndarray:
        """Values on ``m1 x m2`` (default: the full supports), cells in raster order."""
        m1 = self.support1 if m1 is None else m1
        m2 = self.support2 if m2 is None else m2
        return self._block(m1.points(), m2.points())

    def value(self, a, b) -> float:
        p = np.array([self.support1.grid.cell_center(*a)])
        q = np.array([self.support2.grid.cell_center(*b)])
        return float(self._block(p, q)[0, 0])

    def slice_x(self, b) -> GridFunction:
        """``x -> u(x, b)`` for a cell ``b`` of the second factor."""
        q = np.array([self.support2.grid.cell_center(*b)])
        vals = np.zeros(self.support1.grid.shape)
        vals[self.support1.cells] = self._block(self.support1.points(), q)[:, 0]
        return GridFunction(self.support1, vals)

    def slice_y(self, a) -> GridFunction:
        """``y -> u(a, y)`` for a cell ``a`` of the first factor."""
        p = np.array([self.support1.grid.cell_center(*a)])
        vals = np.zeros(self.support2.grid.shape)
        vals[self.support2.cells] = self._block(p, self.support2.points())[0]
        return GridFunction(self.support2, vals)

    def affine(self, a: float, b: float) -> "ProductGridFunction":
        blk = self._block
        return ProductGridFunction(self.support1, self.support2, lambda P, Q: a * blk(P, Q) + b)

    def restrict(self, m1: DomainMask, m2: DomainMask) -> "ProductGridFunction":
        if not (m1.issubset(self.support1) and m2.issubset(self.support2)):
            raise ValueError("window leaves the supports")
        if self.terms is not None:
            return ProductGridFunction.from_terms(m1, m2, [(f.restrict(m1), g.restrict(m2)) for f, g in self.terms])
        return ProductGridFunction(m1, m2, self._block)


@dataclass
class SliceVerdict:
    passed: bool
    worst_margin: float
    tested_count: int
    slices: list = field(default_factory=list)  # (anchor cell, SubmeanVerdict)

    @property
    def anchors(self):
        return [a for a, _ in self.slices]


def stratified_anchors(mask: DomainMask, n: int, seed: int = 0, extra=()) -> list[tuple[int, int]]:
    """One random cell from each of ``n`` equal raster-order strata, plus ``extra``."""
    idx = mask.indices()
    if len(idx) < n:
        raise ValueError("mask has fewer cells than requested anchors")
    rng = np.random.default_rng(seed)
    edges = np.linspace(0, len(idx), n + 1).astype(int)
    picks = [tuple(int(v) for v in idx[rng.integers(lo, hi)]) for lo, hi in zip(edges[:-1], edges[1:])]
    for a in extra:
        a = (int(a[0]), int(a[1]))
        if not mask.cells[a]:
            raise ValueError(f"anchor {a} is off the mask")
        if a not in picks:
            picks.append(a)
    return picks


def _aggregate(results) -> SliceVerdict:
    worst = min(v.worst_margin for _, v in results)
    return SliceVerdict(all(v.passed for _, v in results), worst, sum(v.tested_count for _, v in results), results)


def slice_check(
    u: ProductGridFunction,
    n_slices: int = 7,
    radii=None,
    tol=None,
    seed: int = 0,
    extra_x=(),
    extra_y=(),
    region1: DomainMask | None = None,
    region2: DomainMask | None = None,
) -> tuple[SliceVerdict, SliceVerdict]:
    """Submean verdicts on slices ``u(., b)`` (first result) and ``u(a, .)`` (second).

    ``extra_x`` are forced anchor cells ``b`` for the x-slices, ``extra_y``
    forced anchors ``a`` for the y-slices.  Slices are restricted to
    ``region1`` / ``region2`` before testing, so circles never cross the
    excluded cells.
    """
    if n_slices < 3:
        raise ValueError("need at least 3 slices per axis")

    def cut(g, region):
        return g if region is None else g.restrict(region)

    xs = [(b, submean_test(cut(u.slice_x(b), region1), radii, tol)) for b in stratified_anchors(u.support2, n_slices, seed, extra_x)]
    ys = [(a, submean_test(cut(u.slice_y(a), region2), radii, tol)) for a in stratified_anchors(u.support1, n_slices, seed + 1, extra_y)]
    return _aggregate(xs), _aggregate(ys)


def pareto_rows(G: np.ndarray) -> np.ndarray:
    """Rows of ``G`` not dominated componentwise by another row."""
    U = np.unique(G, axis=0)
    U = U[np.argsort(-U.sum(axis=1), kind="stable")]
    kept = np.empty((0, U.shape[1]))
    for row in U:
        if len(kept) and np.any(np.all(kept >= row, axis=1)):
            continue
        kept = np.vstack([kept, row])
    return kept


def _separable_max(u: ProductGridFunction, axis: int):
    # with non-negative multipliers the max over the other factor is attained
    # at a non-dominated row of that factor's term matrix
    own, other = (u.support1, u.support2) if axis == 1 else (u.support2, u.support1)
    pick = (lambda t: t[0], lambda t: t[1]) if axis == 1 else (lambda t: t[1], lambda t: t[0])
    A = np.column_stack([pick[0](t).values[own.cells] for t in u.terms])
    B = np.column_stack([pick[1](t).values[other.cells] for t in u.terms])
    if A.min() < 0:
        return None
    best = (A @ pareto_rows(B).T).max(axis=1)
    vals = np.zeros(own.grid.shape)
    vals[own.cells] = best
    return GridFunction(own, vals)


def partial_max(u: ProductGridFunction, axis: int = 1) -> GridFunction:
    """``M(x) = max_y u(x, y)`` for ``axis=1``; ``N(y) = max_x u(x, y)`` for ``axis=2``."""
    if axis not in (1, 2):
        raise ValueError("axis must be 1 or 2")
    if axis in u._pmax:
        return u._pmax[axis]
    own, other = (u.support1, u.support2) if axis == 1 else (u.support2, u.support1)
    if other.is_empty():
        raise ValueError("other factor is empty")
    if u.terms:
        fast = _separable_max(u, axis)
        if fast is not None:
            u._pmax[axis] = fast
            return fast
    P, Q = own.points(), other.points()
    best = np.empty(len(P))
    step = _rows_per_block(len(Q))
    for s in range(0, len(P), step):
        chunk = P[s:s + step]
        blk = u._block(chunk, Q) if axis == 1 else u._block(Q, chunk).T
        best[s:s + step] = blk.max(axis=1)
    vals = np.zeros(own.grid.shape)
    vals[own.cells] = best
    u._pmax[axis] = GridFunction(own, vals)
    return u._pmax[axis]


class RectangleSingular(NamedTuple):
    S1: DomainMask
    S2: DomainMask
    report1: SingularSetReport
    report2: SingularSetReport
    valid1: tuple
    valid2: tuple


def rectangle_singular(fam_builder, nu_max: int, levels=None, r=None) -> RectangleSingular:
    """Singular sets of the partial-maximum families ``nu -> M_nu`` and ``nu -> N_nu``.

    ``fam_builder(nu)`` returns the product function ``u_nu``.
    """
    us = [fam_builder(nu) for nu in range(1, nu_max + 1)]
    famM = FunctionFamily([partial_max(u, 1) for u in us])
    famN = FunctionFamily([partial_max(u, 2) for u in us])
    rep1 = extract_singular_set(famM, levels, r)
    rep2 = extract_singular_set(famN, levels, r)
    return RectangleSingular(
        rep1.S, rep2.S, rep1, rep2,
        validate_singular_report(rep1, famM.support),
        validate_singular_report(rep2, famN.support),
    )


class DistinguishedBoundary(NamedTuple):
    passed: bool
    M_db: float
    max_product: float
    argmax: tuple  # (cell in factor 1, cell in factor 2)
    constant_case: bool


def _connected(m: DomainMask) -> bool:
    return len(components(m, m)) == 1


def distinguished_boundary_check(u: ProductGridFunction, tol=None) -> DistinguishedBoundary:
    """Compare the maximum over the product with the maximum over ``bd1 x bd2``."""
    s1, s2 = u.support1, u.support2
    if not (_connected(s1) and _connected(s2)):
        raise ValueError("both factors must be connected")
    b1, b2 = s1.boundary, s2.boundary
    M_db = float(u.block(b1, b2).max())
    idx1, idx2 = s1.indices(), s2.indices()
    on_b1 = b1.cells[idx1[:, 0], idx1[:, 1]]
    on_b2 = b2.cells[idx2[:, 0], idx2[:, 1]]
    P, Q = s1.points(), s2.points()
    top, arg, top_off = -math.inf, None, -math.inf
    lo, hi = math.inf, -math.inf
    step = _rows_per_block(len(Q))
    for s in range(0, len(P), step):
        blk = u._block(P[s:s + step], Q)
        k = int(np.argmax(blk))
        i, j = divmod(k, blk.shape[1])
        if blk[i, j] > top:
            top, arg = float(blk[i, j]), (tuple(map(int, idx1[s + i])), tuple(map(int, idx2[j])))
        off = ~(on_b1[s:s + step, None] & on_b2[None, :])
        if off.any():
            top_off = max(top_off, float(blk[off].max()))
        lo, hi = min(lo, float(blk.min())), max(hi, float(blk.max()))
    if tol is None:
        tol = 1e-9 * max(1.0, abs(lo), abs(hi))
    constant_case = bool(top_off >= M_db - tol and lo >= M_db - tol and hi <= M_db + tol)
    return DistinguishedBoundary(bool(top <= M_db + tol), M_db, top, arg, constant_case)


@dataclass
class TorusMean:
    passed: bool
    worst_margin: float
    samples: list = field(default_factory=list)  # (cell1, cell2, rho, margin)


def torus_mean_check(u: ProductGridFunction, centers1: DomainMask, centers2: DomainMask, count: int = 10, radii=None, tol=None, seed: int = 0) -> TorusMean:
    """Iterated circle means ``mean_{|s|=rho} mean_{|t|=rho} u(a+s, b+t) >= u(a, b)``.

    Centres are drawn from ``centers1 x centers2``; each centre's stencils in
    both factors must fit in the supports.  ``tol`` defaults to 1e-6 times the
    range of the sampled values, as for single-factor verdicts.
    """
    g1, g2 = u.support1.grid, u.support2.grid
    h1 = g1.h
    radii = [4 * h1] if radii is None else list(radii)
    rng = np.random.default_rng(seed)
    c1, c2 = centers1.indices(), centers2.indices()
    if not len(c1) or not len(c2):
        raise ValueError("no admissible centres")
    samples = []
    lo, hi = math.inf, -math.inf
    for _ in range(count):
        a = tuple(int(v) for v in c1[rng.integers(len(c1))])
        b = tuple(int(v) for v in c2[rng.integers(len(c2))])
        for rho in radii:
            w1, w2 = circle_kernel(rho, g1.h), circle_kernel(rho, g2.h)
            k1, k2 = w1.shape[0] // 2, w2.shape[0] // 2
            o1, o2 = np.argwhere(w1 > 0), np.argwhere(w2 > 0)
            cells1 = o1 - k1 + np.array(a)
            cells2 = o2 - k2 + np.array(b)
            if not (u.support1.cells[tuple(cells1.T)].all() and u.support2.cells[tuple(cells2.T)].all()):
                raise ValueError("torus stencil leaves the supports")
            P = np.column_stack(g1.cell_center(cells1[:, 0], cells1[:, 1]))
            Q = np.column_stack(g2.cell_center(cells2[:, 0], cells2[:, 1]))
            blk = u._block(P, Q)
            lo, hi = min(lo, float(blk.min())), max(hi, float(blk.max()))
            mean = float(w1[tuple(o1.T)] @ blk @ w2[tuple(o2.T)])
            samples.append((a, b, rho, mean - u.value(a, b)))
    worst = min(s[3] for s in samples)
    if tol is None:
        tol = 1e-6 * (hi - lo) if hi > lo else 1e-12
    return TorusMean(worst >= -tol, worst, samples)


def tensor_windows(S1, S2, count: int, radius: float, clearance: float, seed: int):
    """Disk windows ``W1 x W2`` whose points lie at distance >= clearance from S1 x S2."""
    rng = np.random.default_rng(seed)
    g1 = S1.grid
    d1 = distance_to_set(S1, DomainMask.full(g1)).values
    X, Y = g1.coords()
    inner = np.ones(g1.shape, bool)
    k = int(math.ceil(radius / g1.h)) + 1
    inner[:k], inner[-k:], inner[:, :k], inner[:, -k:] = False, False, False, False
    cand1 = np.argwhere(inner & (d1 >= clearance + radius))
    cand2 = np.argwhere(inner)
    out = []
    for _ in range(count):
        a = cand1[rng.integers(len(cand1))]
        b = cand2[rng.integers(len(cand2))]
        ca, cb = g1.cell_center(*a), S2.grid.cell_center(*b)
        W1 = DomainMask(g1, np.hypot(X - ca[0], Y - ca[1]) <= radius)
        X2, Y2 = S2.grid.coords()
        W2 = DomainMask(S2.grid, np.hypot(X2 - cb[0], Y2 - cb[1]) <= radius)
        out.append((W1, W2))
    return out


def format_slice_verdict(name: str, v: SliceVerdict) -> str:
    lines = [f"{name}_passed = {v.passed}", f"{name}_worst_margin = {v.worst_margin:.17g}", f"{name}_tested = {v.tested_count}"]
    for anchor, sv in v.slices:
        lines.append(f"{name}_slice {anchor[0]} {anchor[1]} passed {sv.passed} worst {sv.worst_margin:.17g} violations {len(sv.witnesses)}")
    return "\n".join(lines) + "\n"

