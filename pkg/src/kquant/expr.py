"""Parser for rational expressions in z1..zn, zb1..zbn and h.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("+" | "-") unary | power
    power  := atom (("^" | "**") ["-"] INT)?
    atom   := NUMBER | "i" | "z" INT | "zb" INT | "h" | "(" expr ")"

Numbers are exact (``3``, ``1/2`` via division, ``0.25``).  ``h`` may appear only
polynomially; division by an expression that involves ``h`` is rejected.
"""

from __future__ import annotations

import re
from fractions import Fraction

from .coeffs import ChartRing, HPoly, gauss

_TOKEN = re.compile(r"\s*(?:(\d+(?:\.\d+)?)|(zb\d+|z\d+|h|i)|(\*\*|[-+*/^()])|(\S))")


class ParseError(ValueError):
    def __init__(self, message: str, text: str, pos: int):
        self.message = message
        self.text = text
        self.pos = pos
        super().__init__(f"{message} at position {pos}\n  {text}\n  {' ' * pos}^")


def _tokenize(text: str):
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        num, name, op, bad = m.groups()
        start = m.start(m.lastindex)
        if bad is not None:
            raise ParseError(f"unexpected character {bad!r}", text, start)
        if num is not None:
            out.append(("num", num, start))
        elif name is not None:
            out.append(("name", name, start))
        else:
            out.append(("op", op, start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, ring: ChartRing):
        self.text = text
        self.ring = ring
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg: str, tok=None):
        tok = tok or self.peek()
        raise ParseError(msg, self.text, tok[2])

    def parse(self) -> HPoly:
        if self.peek()[0] == "end":
            self.error("empty expression")
        v = self.expr()
        if self.peek()[0] != "end":
            self.error(f"unexpected {self.peek()[1]!r}")
        return v

    def expr(self) -> HPoly:
        v = self.term()
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            w = self.term()
            v = v + w if op == "+" else v - w
        return v

    def term(self) -> HPoly:
        v = self.unary()
        while self.peek()[:2] in (("op", "*"), ("op", "/")):
            tok = self.take()
            w = self.unary()
            if tok[1] == "*":
                v = v * w
            else:
                v = self._divide(v, w, tok)
        return v

    def _divide(self, v: HPoly, w: HPoly, tok) -> HPoly:
        if w.is_zero():
            self.error("division by zero", tok)
        if set(w.coeffs) != {0}:
            self.error("division by an expression containing h", tok)
        inv = w.coeffs[0].inverse()
        return HPoly(self.ring, {k: c * inv for k, c in v.coeffs.items()})

    def unary(self) -> HPoly:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return -self.unary()
        if self.peek()[:2] == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> HPoly:
        base = self.atom()
        if self.peek()[:2] in (("op", "^"), ("op", "**")):
            self.take()
            neg = False
            if self.peek()[:2] == ("op", "-"):
                self.take()
                neg = True
            tok = self.take()
            if tok[0] != "num" or not tok[1].isdigit():
                self.error("exponent must be an integer", tok)
            e = int(tok[1])
            if neg:
                if set(base.coeffs) - {0}:
                    self.error("negative power of an expression containing h", tok)
                if base.is_zero():
                    self.error("negative power of zero", tok)
                return HPoly(self.ring, {0: base.coeffs[0] ** (-e)})
            out = HPoly(self.ring, {0: self.ring.one()})
            for _ in range(e):
                out = out * base
            return out
        return base

    def atom(self) -> HPoly:
        tok = self.take()
        kind, val, pos = tok
        if kind == "num":
            return HPoly(self.ring, {0: self.ring.const(gauss(Fraction(val)))})
        if kind == "name":
            if val == "h":
                return HPoly(self.ring, {1: self.ring.one()})
            if val == "i":
                return HPoly(self.ring, {0: self.ring.const(gauss(0, 1))})
            bar = val.startswith("zb")
            idx = int(val[2:] if bar else val[1:])
            if not 1 <= idx <= self.ring.n:
                raise ParseError(f"variable {val} outside dimension {self.ring.n}", self.text, pos)
            f = self.ring.zb(idx - 1) if bar else self.ring.z(idx - 1)
            return HPoly(self.ring, {0: f})
        if (kind, val) == ("op", "("):
            v = self.expr()
            if self.peek()[:2] != ("op", ")"):
                self.error("expected ')'")
            self.take()
            return v
        if kind == "end":
            raise ParseError("unexpected end of expression", self.text, pos)
        raise ParseError(f"unexpected {val!r}", self.text, pos)


def parse_expression(text: str, n: int) -> HPoly:
    """Parse ``text`` into an hbar-polynomial with rational-function coefficients."""
    return _Parser(text, ChartRing(n)).parse()


def parse_function(text: str, n: int):
    """Parse an hbar-free expression into a RationalFn."""
    v = parse_expression(text, n)
    if set(v.coeffs) - {0}:
        raise ParseError("expression must not contain h here", text, text.find("h"))
    return v[0]
