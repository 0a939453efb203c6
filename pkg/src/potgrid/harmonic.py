"""Discrete Dirichlet problem, Poisson extension on disks and harmonic fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import EPS, DomainMask, GridFunction


class DirichletError(RuntimeError):
    """Relaxation stopped at the iteration cap before reaching ``tol``."""

    def __init__(self, residual, iterations):
        super().__init__(f"Dirichlet solve did not converge: residual {residual:.3e} after {iterations} sweeps")
        self.residual = residual
        self.iterations = iterations


@dataclass
class BoundaryData:
    domain: DomainMask
    values: np.ndarray  # full grid array; only boundary cells are read

    def __post_init__(self):
        vals = np.asarray(self.values, float)
        if vals.shape != self.domain.grid.shape:
            raise ValueError("boundary values must be a full-grid array")
        b = self.domain.boundary.cells
        if not np.all(np.isfinite(vals[b])):
            raise ValueError("boundary data must be finite")
        self.values = np.where(b, vals, 0.0)

    @classmethod
    def from_callable(cls, domain, fn):
        X, Y = domain.grid.coords()
        return cls(domain, np.where(domain.boundary.cells, fn(X, Y), 0.0))


def _mean4(u):
    m = np.zeros_like(u)
    m[1:-1, 1:-1] = 0.25 * (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2])
    return m


def solve_dirichlet(bd: BoundaryData, tol: float = 1e-9, max_iter: int = 10**6, omega=None, check_every=10):
    """Discrete-harmonic extension of boundary data (5-point Laplacian).

    Red-black successive over-relaxation; stops once every interior cell is
    within ``tol`` of the mean of its four neighbours.

    Returns
    -------
    u : GridFunction
        Solution on ``bd.domain``.
    info : dict
        ``iterations`` and final ``residual``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    dom = bd.domain
    inner = dom.interior.cells
    if not inner.any():
        raise ValueError("domain has no interior cells")
    bnd = dom.boundary.cells
    nx, ny = dom.grid.shape
    # pad by one so the 4-neighbour stencil never wraps
    u = np.zeros((nx + 2, ny + 2))
    core = (slice(1, -1), slice(1, -1))
    u[core][bnd] = bd.values[bnd]
    u[core][inner] = bd.values[bnd].mean()
    ii, jj = np.indices((nx, ny))
    red = np.zeros((nx + 2, ny + 2), bool)
    black = np.zeros((nx + 2, ny + 2), bool)
    red[core] = inner & ((ii + jj) % 2 == 0)
    black[core] = inner & ((ii + jj) % 2 == 1)
    act = np.zeros((nx + 2, ny + 2), bool)
    act[core] = inner
    if omega is None:
        omega = 2.0 / (1.0 + math.sin(math.pi / max(nx, ny)))
    res = math.inf
    it = 0
    while it < max_iter:
        for colour in (red, black):
            m = _mean4(u)
            u[colour] += omega * (m[colour] - u[colour])
        it += 1
        if it % check_every == 0 or it == max_iter:
            res = float(np.abs(_mean4(u)[act] - u[act]).max())
            if res <= tol:
                break
    else:
        raise DirichletError(res, it)
    if res > tol:
        raise DirichletError(res, it)
    return GridFunction(dom, u[core]), {"iterations": it, "residual": res}


def poisson_extend_disk(f_samples, center, rho: float, x) -> float:
    """Poisson integral over the circle ``|z - c| = rho`` by the trapezoid rule.

    ``f_samples[k]`` is the boundary value at angle ``2*pi*k/M``.
    """
    f = np.asarray(f_samples, float)
    M = f.size
    if M < 16:
        raise ValueError("need at least 16 boundary samples")
    cx, cy = center
    px, py = float(x[0]) - cx, float(x[1]) - cy
    r2 = px * px + py * py
    if r2 >= rho * rho:
        raise ValueError("evaluation point must lie inside the open disk")
    th = 2 * np.pi * np.arange(M) / M
    zx, zy = rho * np.cos(th), rho * np.sin(th)
    kernel = (rho * rho - r2) / ((px - zx) ** 2 + (py - zy) ** 2)
    return float(np.mean(f * kernel))


@dataclass(frozen=True)
class PolyTerm:
    degree: int
    kind: str  # "cos" -> Re(w^k), "sin" -> Im(w^k)
    coef: float


@dataclass(frozen=True)
class Charge:
    x: float
    y: float
    q: float


@dataclass
class HarmonicModel:
    """Harmonic polynomial in ``w = (z - center) / scale`` plus log charges."""

    center: tuple[float, float]
    scale: float
    poly_terms: list[PolyTerm] = field(default_factory=list)
    charges: list[Charge] = field(default_factory=list)
    clearance: float = 0.0

    @property
    def max_degree(self):
        return max((t.degree for t in self.poly_terms), default=0)


def _design(pts, center, scale, max_degree, charge_xy):
    w = ((pts[:, 0] - center[0]) + 1j * (pts[:, 1] - center[1])) / scale
    cols, labels = [np.ones(len(pts))], [("poly", 0, "cos")]
    wk = np.ones_like(w)
    for k in range(1, max_degree + 1):
        wk = wk * w
        cols += [wk.real, wk.imag]
        labels += [("poly", k, "cos"), ("poly", k, "sin")]
    for j, (px, py) in enumerate(charge_xy):
        cols.append(np.log(np.hypot(pts[:, 0] - px, pts[:, 1] - py)))
        labels.append(("charge", j, None))
    return np.column_stack(cols), labels


def eval_model(m: HarmonicModel, pts) -> np.ndarray:
    """Evaluate the model at an (n, 2) array of points."""
    pts = np.atleast_2d(np.asarray(pts, float))
    if m.charges:
        cxy = np.array([(c.x, c.y) for c in m.charges])
        dmin, _ = cKDTree(cxy).query(pts)
        if np.any(dmin < m.clearance * (1 - EPS)):
            raise ValueError("evaluation point coincides with a charge")
    w = ((pts[:, 0] - m.center[0]) + 1j * (pts[:, 1] - m.center[1])) / m.scale
    out = np.zeros(len(pts))
    powers = {0: np.ones_like(w)}
    for t in m.poly_terms:
        if t.degree not in powers:
            powers[t.degree] = w ** t.degree
        wk = powers[t.degree]
        out += t.coef * (wk.real if t.kind == "cos" else wk.imag)
    for c in m.charges:
        out += c.q * np.log(np.hypot(pts[:, 0] - c.x, pts[:, 1] - c.y))
    return out


def fit_harmonic_on_compact(
    K: DomainMask,
    target: GridFunction,
    max_degree: int = 12,
    charge_locations=(),
    ridge=None,
    center=None,
    return_residuals=False,
):
    """Least-squares harmonic fit of ``target`` over the cells of ``K``.

    The basis is Re/Im of ``((z - c)/s)^k`` for ``k <= max_degree`` and
    ``log|z - p_j|`` for each supplied charge.  ``ridge=None`` uses
    ``1e-10`` times the largest diagonal entry of the (equilibrated) normal
    matrix; ``ridge=0`` is plain least squares.

    Returns ``(model, sup_error)``, plus the per-cell residual array when
    ``return_residuals`` is set.
    """
    if K.is_empty():
        raise ValueError("compact set is empty")
    if not K.issubset(target.support) or target.neg_inf[K.cells].any():
        raise ValueError("target must be finite on K")
    h = K.grid.h
    pts = K.points()
    charge_xy = np.array(charge_locations, float).reshape(-1, 2)
    if len(charge_xy):
        dmin, _ = cKDTree(pts).query(charge_xy)
        if np.any(dmin < 2 * h * (1 - EPS)):
            raise ValueError("charge inside K (closer than 2h to a cell of K)")
    if center is None:
        lo, hi = pts.min(0), pts.max(0)
        center = (float(0.5 * (lo[0] + hi[0])), float(0.5 * (lo[1] + hi[1])))
    scale = float(np.hypot(pts[:, 0] - center[0], pts[:, 1] - center[1]).max()) or h
    A, labels = _design(pts, center, scale, max_degree, charge_xy)
    t = target.values[K.cells]
    colscale = np.abs(A).max(axis=0)
    colscale[colscale == 0] = 1.0
    As = A / colscale
    if ridge is None:
        ridge = 1e-10 * float((As * As).sum(axis=0).max())
    if ridge > 0:
        n = As.shape[1]
        aug = np.vstack([As, math.sqrt(ridge) * np.eye(n)])
        rhs = np.concatenate([t, np.zeros(n)])
        c, _, rank, _ = np.linalg.lstsq(aug, rhs, rcond=None)
    else:
        c, _, rank, _ = np.linalg.lstsq(As, t, rcond=None)
    if rank < As.shape[1]:
        raise ValueError("basis degenerate")
    coef = c / colscale
    terms, charges = [], []
    for (kind, k, trig), a in zip(labels, coef):
        if kind == "poly":
            terms.append(PolyTerm(k, trig, float(a)))
        else:
            px, py = charge_xy[k]
            charges.append(Charge(float(px), float(py), float(a)))
    model = HarmonicModel(center, scale, terms, charges, clearance=h / 2)
    resid = As @ c - t
    sup = float(np.abs(resid).max())
    if return_residuals:
        return model, sup, resid
    return model, sup


def _f(v):
    return format(float(v), ".17g")


def dumps_model(m: HarmonicModel) -> str:
    lines = [
        "harmonic-model 1",
        f"center {_f(m.center[0])} {_f(m.center[1])}",
        f"scale {_f(m.scale)}",
        f"clearance {_f(m.clearance)}",
    ]
    lines += [f"term {t.degree} {t.kind} {_f(t.coef)}" for t in m.poly_terms]
    lines += [f"charge {_f(c.x)} {_f(c.y)} {_f(c.q)}" for c in m.charges]
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> HarmonicModel:
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0][0] != "harmonic-model":
        raise ValueError("not a harmonic model file")
    center, scale, clearance, terms, charges = None, None, 0.0, [], []
    for parts in lines[1:]:
        key = parts[0]
        if key == "center":
            center = (float(parts[1]), float(parts[2]))
        elif key == "scale":
            scale = float(parts[1])
        elif key == "clearance":
            clearance = float(parts[1])
        elif key == "term":
            terms.append(PolyTerm(int(parts[1]), parts[2], float(parts[3])))
        elif key == "charge":
            charges.append(Charge(float(parts[1]), float(parts[2]), float(parts[3])))
        else:
            raise ValueError(f"unknown model line {key!r}")
    if center is None or scale is None:
        raise ValueError("model file lacks center or scale")
    return HarmonicModel(center, scale, terms, charges, clearance)
