"""Sub-mean-value verdicts, family maximum principle and upper regularisation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import ndimage
from scipy.optimize import brentq

from .geometry import EPS, DomainMask, GridFunction, disk_footprint, morph_closure, morph_interior


def circle_samples(rho_cells: float) -> int:
    m = max(16, math.ceil(2 * math.pi * rho_cells - 1e-9))
    return 4 * math.ceil(m / 4)


def _bilinear_kernel(s: float, M: int, K: int) -> np.ndarray:
    th = 2 * np.pi * np.arange(M) / M
    px, py = s * np.cos(th), s * np.sin(th)
    # snap round-off so samples on lattice lines stay there
    px, py = np.round(px, 12), np.round(py, 12)
    fx, fy = np.floor(px), np.floor(py)
    tx, ty = px - fx, py - fy
    w = np.zeros((2 * K + 1, 2 * K + 1))
    ix, iy = fx.astype(int) + K, fy.astype(int) + K
    np.add.at(w, (ix, iy), (1 - tx) * (1 - ty))
    np.add.at(w, (ix + 1, iy), tx * (1 - ty))
    np.add.at(w, (ix, iy + 1), (1 - tx) * ty)
    np.add.at(w, (ix + 1, iy + 1), tx * ty)
    return w / M


@lru_cache(maxsize=64)
def _circle_kernel_cells(s: float):
    M = circle_samples(s)
    K = int(math.ceil(s)) + 1
    o = np.arange(-K, K + 1)
    R2 = o[:, None] ** 2 + o[None, :] ** 2

    def second_moment(sp):
        return float((_bilinear_kernel(sp, M, K) * R2).sum()) - s * s

    lo = max(s - 1.0, 0.5 * s)
    sp = brentq(second_moment, lo, s, xtol=1e-14) if second_moment(s) > 0 else s
    w = _bilinear_kernel(sp, M, K)
    w[np.abs(w) < 1e-15] = 0.0
    w.setflags(write=False)
    return w


def circle_kernel(rho: float, h: float) -> np.ndarray:
    """Lattice weights whose correlation with ``u`` is its circle mean at radius rho.

    Bilinear interpolation at ``M`` equispaced angles (``M`` a multiple of 4,
    at least ``max(16, 2*pi*rho/h)``), sampled on a radius nudged inward so
    the weights reproduce the circle's second moment ``rho^2`` exactly.  The
    weights are positive, sum to one and are exact on all quadratics.
    """
    return _circle_kernel_cells(round(rho / h, 12))


def apply_kernel(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    K = w.shape[0] // 2
    p = np.pad(a, K)
    out = np.zeros_like(a, dtype=float)
    nx, ny = a.shape
    for i, j in zip(*np.nonzero(w)):
        out += w[i, j] * p[i:i + nx, j:j + ny]
    return out


@dataclass
class SubmeanVerdict:
    passed: bool
    worst_margin: float
    witnesses: list = field(default_factory=list)  # (ix, iy, rho, margin)
    tested_count: int = 0
    radius_margins: list = field(default_factory=list)  # (rho, min margin, max margin)
    tol: float = 0.0


def default_tol(u: GridFunction) -> float:
    lo, hi = u.finite_range()
    return 1e-6 * (hi - lo) if hi > lo else 1e-12


def _floor_value(u: GridFunction) -> float:
    lo, hi = u.finite_range()
    return lo - 10 * (hi - lo if hi > lo else 1.0)


def eligible_cells(support: DomainMask, radii) -> np.ndarray:
    h = support.grid.h
    foot = np.zeros((1, 1), bool)
    for rho in radii:
        w = circle_kernel(rho, h) > 0
        disk = disk_footprint(rho, h)
        d = (w.shape[0] - disk.shape[0]) // 2
        w[d:d + disk.shape[0], d:d + disk.shape[0]] |= disk
        if w.shape[0] > foot.shape[0]:
            d = (w.shape[0] - foot.shape[0]) // 2
            foot = np.pad(foot, d)
        d = (foot.shape[0] - w.shape[0]) // 2
        foot[d:d + w.shape[0], d:d + w.shape[0]] |= w
    foot[foot.shape[0] // 2, foot.shape[0] // 2] = True
    return ndimage.binary_erosion(support.cells, structure=foot, border_value=0)


def submean_test(u: GridFunction, radii=None, tol=None, floor=None, centers: DomainMask | None = None) -> SubmeanVerdict:
    """Check ``u(x) <= mean of u on the circle of radius rho about x``.

    Every cell whose closed rho-disk and interpolation stencil (for every
    radius) lie in the support is tested, optionally intersected with ``centers``.  Cells
    flagged -inf pass at the centre and contribute ``floor`` on circles.
    """
    h = u.grid.h
    radii = [4 * h, 8 * h, 16 * h] if radii is None else [float(r) for r in radii]
    if not radii:
        raise ValueError("no radii given")
    for rho in radii:
        if rho < 2 * h * (1 - EPS):
            raise ValueError("radius below 2h")
    tol = default_tol(u) if tol is None else float(tol)
    floor = _floor_value(u) if floor is None else float(floor)
    ok = eligible_cells(u.support, radii)
    if centers is not None:
        ok &= centers.cells
    if not ok.any():
        raise ValueError("domain too small for radii")
    a = np.where(u.neg_inf, floor, u.values)
    test = ok & ~u.neg_inf
    margins = []
    per_radius = []
    for rho in radii:
        mean = apply_kernel(a, circle_kernel(rho, h))
        m = np.where(test, mean - a, np.inf)
        margins.append(m)
        if test.any():
            vals = m[test]
            per_radius.append((rho, float(vals.min()), float(vals.max())))
        else:
            per_radius.append((rho, math.inf, math.inf))
    stack = np.stack(margins, axis=-1)
    worst = float(stack.min()) if test.any() else math.inf
    bad = np.argwhere(stack < -tol)  # raster order over (ix, iy, radius index)
    witnesses = [(int(i), int(j), radii[k], float(stack[i, j, k])) for i, j, k in bad]
    return SubmeanVerdict(
        passed=not witnesses,
        worst_margin=worst,
        witnesses=witnesses,
        tested_count=int(ok.sum()) * len(radii),
        radius_margins=per_radius,
        tol=tol,
    )


def format_verdict(v: SubmeanVerdict, limit: int = 100) -> str:
    lines = [
        f"passed = {v.passed}",
        f"tested = {v.tested_count}",
        f"violations = {len(v.witnesses)}",
        f"worst_margin = {v.worst_margin:.17g}",
        f"tol = {v.tol:.17g}",
    ]
    for rho, lo, hi in v.radius_margins:
        lines.append(f"radius {rho:.17g} margin_min {lo:.17g} margin_max {hi:.17g}")
    for ix, iy, rho, m in v.witnesses[:limit]:
        lines.append(f"witness {ix} {iy} {rho:.17g} {m:.17g}")
    return "\n".join(lines) + "\n"


class FamilyMax(NamedTuple):
    passed: bool
    M: float
    max_interior: float


def family_max_principle(us, tol=None, check=False) -> FamilyMax:
    """Boundary supremum of a finite family bounds its supremum over the closure.

    ``M`` is the largest boundary value over all members, ``max_interior``
    the largest value anywhere.  ``tol`` defaults to 1e-9 relative to the
    largest magnitude in the family.
    """
    us = list(us)
    if not us:
        raise ValueError("empty family")
    omega = us[0].support
    for u in us[1:]:
        if u.support != omega:
            raise ValueError("family members must share one support")
    if check:
        for u in us:
            if not submean_test(u).passed:
                raise ValueError("a family member fails the sub-mean test")
    bnd = omega.boundary.cells
    M = -math.inf
    top = -math.inf
    scale = 1.0
    for u in us:
        fin = u.finite_cells()
        if (bnd & fin).any():
            M = max(M, float(u.values[bnd & fin].max()))
        if fin.any():
            top = max(top, float(u.values[fin].max()))
            scale = max(scale, float(np.abs(u.values[fin]).max()))
    tol = 1e-9 * scale if tol is None else tol
    return FamilyMax(bool(top <= M + tol), M, top)


def bounded_by_on_interior_closure(v: GridFunction, omega: DomainMask, lam: float, tol=None, r=None) -> bool:
    """Given ``v < lam`` on omega, check ``v <= lam`` on int(closure(omega))."""
    if omega.is_empty():
        raise ValueError("empty set")
    if not omega.issubset(v.support):
        raise ValueError("v is not defined on omega")
    on = omega.cells & ~v.neg_inf[...]
    if np.any(v.values[on] >= lam):
        raise ValueError("hypothesis failed: v < lambda does not hold on omega")
    r = 2 * v.grid.h if r is None else r
    region = morph_interior(morph_closure(omega, r), r)
    if not region.issubset(v.support):
        raise ValueError("v is not defined on int(closure(omega))")
    tol = 1e-9 * max(1.0, abs(lam)) if tol is None else tol
    fin = region.cells & ~v.neg_inf
    return bool(np.all(v.values[fin] <= lam + tol))


def usc_regularize(u: GridFunction, r: float) -> GridFunction:
    """Sliding maximum over the radius-``r`` lattice disk (a single pass of limsup)."""
    h = u.grid.h
    if r < h * (1 - EPS):
        raise ValueError("regularisation radius below resolution")
    a = np.where(u.finite_cells(), u.values, -np.inf)
    m = ndimage.maximum_filter(a, footprint=disk_footprint(r, h), mode="constant", cval=-np.inf)
    flag = np.isneginf(m) & u.support.cells
    return GridFunction(u.support, np.where(flag, 0.0, m), flag)
