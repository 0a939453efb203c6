"""Mask construction from a small text grammar.

Each non-empty line of a spec is one expression; lines are unioned.  An
expression is a primitive or a combinator call, with physical coordinates::

    rect(x0, y0, x1, y1)
    disk(cx, cy, r)
    annulus(cx, cy, r_in, r_out)
    segment(x0, y0, x1, y1[, width])
    cross(cx, cy, half_length)
    cantor_bars(depth[, x0, x1, y0, y1])
    union(a, b, ...)   intersect(a, b, ...)   difference(a, b)

``#`` starts a comment.
"""

from __future__ import annotations

import math
import re

import numpy as np

from .geometry import EPS, DomainMask, GridSpec

_TOKEN = re.compile(r"\s*(?:(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[(),]))")


def _tokenize(text):
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"bad mask spec near {text[pos:pos + 12]!r}")
        pos = m.end()
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
    return out


def _parse(tokens, i=0):
    kind, val = tokens[i]
    if kind == "num":
        return float(val), i + 1
    if kind != "name":
        raise ValueError(f"unexpected {val!r} in mask spec")
    if i + 1 >= len(tokens) or tokens[i + 1][1] != "(":
        raise ValueError(f"expected '(' after {val}")
    args, i = [], i + 2
    while tokens[i][1] != ")":
        arg, i = _parse(tokens, i)
        args.append(arg)
        if tokens[i][1] == ",":
            i += 1
        elif tokens[i][1] != ")":
            raise ValueError("expected ',' or ')' in mask spec")
    return (val, args), i + 1


def _segment_distance(X, Y, x0, y0, x1, y1):
    dx, dy = x1 - x0, y1 - y0
    L2 = dx * dx + dy * dy
    if L2 == 0:
        return np.hypot(X - x0, Y - y0)
    t = np.clip(((X - x0) * dx + (Y - y0) * dy) / L2, 0.0, 1.0)
    return np.hypot(X - x0 - t * dx, Y - y0 - t * dy)


def cantor_intervals(depth: int, a: float, b: float) -> list[tuple[float, float]]:
    ivs = [(a, b)]
    for _ in range(depth):
        nxt = []
        for lo, hi in ivs:
            w = (hi - lo) / 3
            nxt += [(lo, lo + w), (hi - w, hi)]
        ivs = nxt
    return ivs


def _cantor_bars(grid, X, Y, depth, x0=None, x1=None, y0=None, y1=None):
    # One bar per depth-k interval: the columns whose centres fall in it, or
    # the column nearest its midpoint when the interval is narrower than h.
    gx0, gy0 = grid.origin
    x0 = gx0 if x0 is None else x0
    x1 = gx0 + (grid.nx - 1) * grid.h if x1 is None else x1
    y0 = gy0 if y0 is None else y0
    y1 = gy0 + (grid.ny - 1) * grid.h if y1 is None else y1
    xs = gx0 + grid.h * np.arange(grid.nx)
    cols = np.zeros(grid.nx, bool)
    for lo, hi in cantor_intervals(int(depth), x0, x1):
        hit = (xs >= lo - EPS * grid.h) & (xs <= hi + EPS * grid.h)
        if not hit.any():
            hit[int(np.argmin(np.abs(xs - 0.5 * (lo + hi))))] = True
        cols |= hit
    rows = (Y >= y0 - EPS * grid.h) & (Y <= y1 + EPS * grid.h)
    return cols[:, None] & rows


def _eval(node, grid, X, Y):
    if isinstance(node, float):
        raise ValueError("a bare number is not a mask")
    name, args = node
    nums = [a for a in args if isinstance(a, float)]
    h = grid.h
    tol = EPS * h
    if name == "rect":
        x0, y0, x1, y1 = nums
        return (X >= min(x0, x1) - tol) & (X <= max(x0, x1) + tol) & (Y >= min(y0, y1) - tol) & (Y <= max(y0, y1) + tol)
    if name == "disk":
        cx, cy, r = nums
        return np.hypot(X - cx, Y - cy) <= r + tol
    if name == "annulus":
        cx, cy, r0, r1 = nums
        rr = np.hypot(X - cx, Y - cy)
        return (rr >= r0 - tol) & (rr <= r1 + tol)
    if name == "segment":
        x0, y0, x1, y1, *rest = nums
        half = max(rest[0] / 2 if rest else 0.0, h / 2)
        return _segment_distance(X, Y, x0, y0, x1, y1) <= half + tol
    if name == "cross":
        cx, cy, a = nums
        half = h / 2 + tol
        return (_segment_distance(X, Y, cx - a, cy, cx + a, cy) <= half) | (
            _segment_distance(X, Y, cx, cy - a, cx, cy + a) <= half
        )
    if name == "cantor_bars":
        return _cantor_bars(grid, X, Y, *nums)
    subs = [_eval(a, grid, X, Y) for a in args]
    if name == "union":
        return np.logical_or.reduce(subs)
    if name == "intersect":
        return np.logical_and.reduce(subs)
    if name == "difference":
        if len(subs) != 2:
            raise ValueError("difference takes two masks")
        return subs[0] & ~subs[1]
    raise ValueError(f"unknown mask primitive {name!r}")


def parse_mask(text: str, grid: GridSpec) -> DomainMask:
    """Rasterise a mask spec on ``grid``."""
    X, Y = grid.coords()
    cells = np.zeros(grid.shape, bool)
    seen = False
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = _tokenize(line)
        node, end = _parse(tokens)
        if end != len(tokens):
            raise ValueError(f"trailing input in mask spec line {line!r}")
        cells |= _eval(node, grid, X, Y)
        seen = True
    if not seen:
        raise ValueError("empty mask spec")
    return DomainMask(grid, cells)


NAMED_DOMAINS = {
    "disk": ("disk(0, 0, 1)", 1.0),
    "square": ("rect(-1, -1, 1, 1)", 1.0),
    "annulus": ("annulus(0, 0, 0.4, 1)", 1.0),
}


def named_domain(name: str, res: int, margin: float = 0.0) -> DomainMask:
    """A named domain (or a mask expression) on a grid spanning [-1-margin, 1+margin]^2."""
    spec, half = NAMED_DOMAINS.get(name, (name, 1.0))
    grid = GridSpec.spanning(-half - margin, half + margin, res)
    return parse_mask(spec, grid)


def disk_cells(grid: GridSpec, center, radius) -> np.ndarray:
    X, Y = grid.coords()
    return np.hypot(X - center[0], Y - center[1]) <= radius + EPS * grid.h


def square_radius_ok(grid: GridSpec, center, radius) -> bool:
    """True when the disk fits in the grid frame up to one cell."""
    x0, y0 = grid.origin
    x1 = x0 + (grid.nx - 1) * grid.h
    y1 = y0 + (grid.ny - 1) * grid.h
    gap = min(center[0] - x0, x1 - center[0], center[1] - y0, y1 - center[1])
    return gap >= radius - grid.h * (1 + EPS) or math.isclose(gap, radius)
