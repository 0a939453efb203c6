"""Expression grammar for analytic test functions.

Variables ``x``, ``y`` (plane) or ``x1, x2, y1, y2`` (product of two planes),
the imaginary unit ``i``, operators ``+ - * / ^`` and the functions ``log``,
``abs``, ``re``, ``im``, ``sqrt``, ``exp``, ``sin``, ``cos``, ``max``, ``min``.
Evaluation is complex so that ``re((x+i*y)^3)`` works; the final value must
be real.
"""

from __future__ import annotations

import re

import numpy as np

_TOK = re.compile(r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))")

_FUNCS1 = {
    "log": np.log,
    "abs": np.abs,
    "re": np.real,
    "im": np.imag,
    "sqrt": np.sqrt,
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
}


def _max(a, b):
    return np.maximum(np.real(a), np.real(b))


def _min(a, b):
    return np.minimum(np.real(a), np.real(b))


_FUNCS2 = {"max": _max, "min": _min}


class Expr:
    """Compiled expression; call with keyword arrays for the variables."""

    def __init__(self, text: str, variables=("x", "y")):
        self.text = text
        self.variables = tuple(variables)
        self._toks = self._tokenize(text)
        self._pos = 0
        self._tree = self._sum()
        if self._pos != len(self._toks):
            raise ValueError(f"trailing input in expression {text!r}")
        del self._toks

    @staticmethod
    def _tokenize(text):
        pos, out = 0, []
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOK.match(text, pos)
            if not m:
                raise ValueError(f"bad expression near {text[pos:pos + 10]!r}")
            pos = m.end()
            out.append((m.lastgroup, m.group(m.lastgroup)))
        return out

    def _peek(self):
        return self._toks[self._pos][1] if self._pos < len(self._toks) else None

    def _take(self, expected=None):
        if self._pos >= len(self._toks):
            raise ValueError(f"unexpected end of expression {self.text!r}")
        tok = self._toks[self._pos]
        if expected is not None and tok[1] != expected:
            raise ValueError(f"expected {expected!r}, got {tok[1]!r}")
        self._pos += 1
        return tok

    def _sum(self):
        node = self._prod()
        while self._peek() in ("+", "-"):
            op = self._take()[1]
            node = (op, node, self._prod())
        return node

    def _prod(self):
        node = self._unary()
        while self._peek() in ("*", "/"):
            op = self._take()[1]
            node = (op, node, self._unary())
        return node

    def _unary(self):
        if self._peek() == "-":
            self._take()
            return ("neg", self._unary())
        if self._peek() == "+":
            self._take()
            return self._unary()
        return self._power()

    def _power(self):
        base = self._atom()
        if self._peek() == "^":
            self._take()
            return ("^", base, self._unary())
        return base

    def _atom(self):
        kind, val = self._take()
        if kind == "num":
            return ("const", float(val))
        if val == "(":
            node = self._sum()
            self._take(")")
            return node
        if kind != "name":
            raise ValueError(f"unexpected {val!r}")
        if val in _FUNCS1 or val in _FUNCS2:
            self._take("(")
            args = [self._sum()]
            while self._peek() == ",":
                self._take()
                args.append(self._sum())
            self._take(")")
            want = 1 if val in _FUNCS1 else 2
            if len(args) != want:
                raise ValueError(f"{val} takes {want} argument(s)")
            return ("call", val, args)
        if val == "i":
            return ("const", 1j)
        if val == "pi":
            return ("const", np.pi)
        if val in self.variables:
            return ("var", val)
        raise ValueError(f"unknown name {val!r} in expression")

    def _ev(self, node, env):
        tag = node[0]
        if tag == "const":
            return node[1]
        if tag == "var":
            return env[node[1]]
        if tag == "neg":
            return -self._ev(node[1], env)
        if tag == "call":
            args = [self._ev(a, env) for a in node[2]]
            f = _FUNCS1.get(node[1]) or _FUNCS2[node[1]]
            return f(*args)
        a, b = self._ev(node[1], env), self._ev(node[2], env)
        if tag == "+":
            return a + b
        if tag == "-":
            return a - b
        if tag == "*":
            return a * b
        if tag == "/":
            return a / b
        if isinstance(b, float) and float(b).is_integer():
            return a ** int(b)
        return np.asarray(a, complex) ** b

    def __call__(self, **env):
        env = {k: np.asarray(v, dtype=complex) for k, v in env.items()}
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.asarray(self._ev(self._tree, env))
        re_, im_ = np.real(out), np.imag(out)
        scale = max(1.0, float(np.nanmax(np.abs(re_[np.isfinite(re_)]), initial=0.0)))
        bad = np.isfinite(im_) & (np.abs(im_) > 1e-9 * scale)
        if np.any(bad):
            raise ValueError(f"expression {self.text!r} is not real-valued on the domain")
        return re_.astype(float)

    def plane(self):
        """As a function of two coordinate arrays (x, y)."""
        return lambda X, Y: self(x=X, y=Y)
