"""Sections of the Weyl bundle with forms: Wick product, Koszul operators, connection.

A term is indexed by :class:`TermIndex`: strictly increasing holomorphic and
antiholomorphic form indices, exponent vectors of the fibre variables ``y`` and
``ybar``, and a power of hbar.  Forms are ordered ``dz`` before ``dzbar``.  The
Wick product is

    a * b = sum_k hbar^k / k! * omega_inv[i1][j1] ... omega_inv[ik][jk]
            * d^k a / dy^i1..dy^ik  ∧  d^k b / dybar^j1..dybar^jk

with the form part of ``a`` to the left, so that ``y * ybar = y ybar + hbar``.

A section is either formal in hbar (``hbar is None``) or evaluated at a fixed
scalar value of hbar, in which case every term has ``h == 0``.
"""

from __future__ import annotations

import random
from fractions import Fraction
from typing import Callable, Iterable, NamedTuple

from .coeffs import ONE, ChartRing, HPoly, RationalFn, Scalar, as_scalar, factorial, gauss, hbar_at, scalar_str
from .geometry import ChartGeometry


class TermIndex(NamedTuple):
    dz: tuple
    dzb: tuple
    y: tuple
    yb: tuple
    h: int = 0

    @property
    def form_degree(self) -> int:
        return len(self.dz) + len(self.dzb)

    @property
    def ydeg(self) -> int:
        return sum(self.y)

    @property
    def ybdeg(self) -> int:
        return sum(self.yb)

    @property
    def fiber_degree(self) -> int:
        return sum(self.y) + sum(self.yb)

    @property
    def fedosov_degree(self) -> int:
        return sum(self.y) + sum(self.yb) + 2 * self.h


class Trunc(NamedTuple):
    """Drop bounds: terms exceeding any of them are discarded (``None`` means no bound)."""

    max_y: int | None = None
    max_ybar: int | None = None
    max_h: int | None = None
    max_deg: int | None = None

    def admits(self, k: TermIndex) -> bool:
        if self.max_y is not None and sum(k.y) > self.max_y:
            return False
        if self.max_ybar is not None and sum(k.yb) > self.max_ybar:
            return False
        if self.max_h is not None and k.h > self.max_h:
            return False
        if self.max_deg is not None and sum(k.y) + sum(k.yb) + 2 * k.h > self.max_deg:
            return False
        return True

    def admits_degrees(self, ydeg: int, ybdeg: int, h: int) -> bool:
        if self.max_y is not None and ydeg > self.max_y:
            return False
        if self.max_ybar is not None and ybdeg > self.max_ybar:
            return False
        if self.max_h is not None and h > self.max_h:
            return False
        if self.max_deg is not None and ydeg + ybdeg + 2 * h > self.max_deg:
            return False
        return True

    def meet(self, other: "Trunc") -> "Trunc":
        def m(a, b):
            if a is None:
                return b
            if b is None:
                return a
            return min(a, b)

        return Trunc(*(m(a, b) for a, b in zip(self, other)))

    def is_unbounded(self) -> bool:
        return all(v is None for v in self)


NO_TRUNC = Trunc()


class WeylContext:
    """Shared data for sections over one chart: dimension and the inverse pairing."""

    def __init__(self, n: int, omega_inv: list[list[RationalFn]]):
        self.n = n
        self.ring = ChartRing(n)
        self.omega_inv = omega_inv
        self.const_pairing = all(c.is_constant() for row in omega_inv for c in row)
        self._pairs = [(i, j) for i in range(n) for j in range(n) if omega_inv[i][j]]
        self._pair_scalars = {
            (i, j): omega_inv[i][j].constant_value() for (i, j) in self._pairs if self.const_pairing
        }
        self._pattern_cache: dict = {}
        self._hprod_cache: dict = {}

    @classmethod
    def of(cls, g: ChartGeometry) -> "WeylContext":
        ctx = getattr(g, "_weyl_ctx", None)
        if ctx is None:
            ctx = cls(g.n, g.omega_inv)
            g._weyl_ctx = ctx
        return ctx

    def contraction_patterns(self, ya: tuple, ybb: tuple):
        """All contraction patterns between ``y^ya`` (left) and ``ybar^ybb`` (right).

        Each entry is ``(k, dy, dyb, scalar, counts)``: the number of contractions,
        the exponents removed on each side, the combinatorial factor
        ``prod c_ij!^-1 * falling factorials`` and the multiset of pairing entries used.
        """
        key = (ya, ybb)
        out = self._pattern_cache.get(key)
        if out is not None:
            return out
        n = self.n
        pairs = [(i, j) for (i, j) in self._pairs if ya[i] and ybb[j]]
        out = []

        def rec(idx, row_left, col_left, counts):
            if idx == len(pairs):
                k = sum(c for _, c in counts)
                dy = tuple(ya[i] - row_left[i] for i in range(n))
                dyb = tuple(ybb[j] - col_left[j] for j in range(n))
                s = Fraction(1)
                for _, c in counts:
                    s /= factorial(c)
                for i in range(n):
                    s *= Fraction(factorial(ya[i]), factorial(ya[i] - dy[i]))
                    s *= Fraction(factorial(ybb[i]), factorial(ybb[i] - dyb[i]))
                out.append((k, dy, dyb, s, tuple((p, c) for p, c in counts if c)))
                return
            i, j = pairs[idx]
            for c in range(min(row_left[i], col_left[j]) + 1):
                rl = list(row_left)
                cl = list(col_left)
                rl[i] -= c
                cl[j] -= c
                rec(idx + 1, rl, cl, counts + [((i, j), c)])

        rec(0, list(ya), list(ybb), [])
        out.sort(key=lambda t: t[0])
        self._pattern_cache[key] = out
        return out

    def pairing_product(self, counts) -> RationalFn | Scalar:
        """``prod omega_inv[i][j]^c`` for a contraction pattern."""
        val = self._hprod_cache.get(counts)
        if val is None:
            if self.const_pairing:
                v = ONE
                for (i, j), c in counts:
                    v = v * self._pair_scalars[(i, j)] ** c
            else:
                v = self.ring.one()
                for (i, j), c in counts:
                    v = v * self.omega_inv[i][j] ** c
            val = v
            self._hprod_cache[counts] = val
        return val


_CTX_FLAT: dict[int, WeylContext] = {}


def flat_context(n: int) -> WeylContext:
    ctx = _CTX_FLAT.get(n)
    if ctx is None:
        ring = ChartRing(n)
        ctx = WeylContext(n, [[ring.one() if i == j else ring.zero() for j in range(n)] for i in range(n)])
        _CTX_FLAT[n] = ctx
    return ctx


def _insert(idx: tuple, i: int):
    """Insert ``i`` into a strictly increasing tuple; return (sign, new) or None."""
    if i in idx:
        return None
    pos = 0
    for x in idx:
        if x < i:
            pos += 1
    return (-1 if pos % 2 else 1), idx[:pos] + (i,) + idx[pos:]


def _merge(a: tuple, b: tuple):
    """Sign and merged tuple of the wedge of two increasing index tuples."""
    if not a:
        return 1, b
    if not b:
        return 1, a
    if set(a) & set(b):
        return 0, ()
    inversions = 0
    for x in a:
        for y in b:
            if y < x:
                inversions += 1
    return (-1 if inversions % 2 else 1), tuple(sorted(a + b))


def wedge_forms(dz1, dzb1, dz2, dzb2):
    """Sign and indices of ``dz^I1 dzbar^J1 ∧ dz^I2 dzbar^J2``."""
    s = -1 if (len(dzb1) * len(dz2)) % 2 else 1
    s1, dz = _merge(dz1, dz2)
    if not s1:
        return 0, (), ()
    s2, dzb = _merge(dzb1, dzb2)
    if not s2:
        return 0, (), ()
    return s * s1 * s2, dz, dzb


def _add_to(acc: dict, key, val: RationalFn) -> None:
    cur = acc.get(key)
    acc[key] = val if cur is None else cur + val


def _vec_add(a: tuple, b: tuple) -> tuple:
    return tuple(x + y for x, y in zip(a, b))


def _vec_sub(a: tuple, b: tuple) -> tuple:
    return tuple(x - y for x, y in zip(a, b))


def _unit(n: int, i: int) -> tuple:
    return tuple(1 if k == i else 0 for k in range(n))


class WeylSection:
    """A (truncated) section of the Weyl bundle tensored with forms."""

    __slots__ = ("ctx", "terms", "trunc", "hbar")

    def __init__(self, ctx: WeylContext, terms: dict | None = None, trunc: Trunc = NO_TRUNC, hbar: Scalar | None = None):
        self.ctx = ctx
        self.trunc = trunc
        self.hbar = hbar
        self.terms = {k: v for k, v in (terms or {}).items() if v and trunc.admits(k)}

    # constructors -----------------------------------------------------------
    @property
    def n(self) -> int:
        return self.ctx.n

    @property
    def ring(self) -> ChartRing:
        return self.ctx.ring

    def _new(self, terms: dict, trunc: Trunc | None = None) -> "WeylSection":
        return WeylSection(self.ctx, terms, self.trunc if trunc is None else trunc, self.hbar)

    def zero_like(self) -> "WeylSection":
        return WeylSection(self.ctx, {}, self.trunc, self.hbar)

    @classmethod
    def zero(cls, ctx: WeylContext, trunc: Trunc = NO_TRUNC, hbar=None) -> "WeylSection":
        return cls(ctx, {}, trunc, hbar)

    @classmethod
    def monomial(cls, ctx: WeylContext, coeff=1, dz=(), dzb=(), y=None, yb=None, h=0, trunc: Trunc = NO_TRUNC, hbar=None):
        n = ctx.n
        y = tuple(y) if y is not None else (0,) * n
        yb = tuple(yb) if yb is not None else (0,) * n
        c = coeff if isinstance(coeff, RationalFn) else ctx.ring.const(coeff)
        sign = 1
        dz_s = tuple(sorted(dz))
        dzb_s = tuple(sorted(dzb))
        if len(set(dz_s)) != len(dz_s) or len(set(dzb_s)) != len(dzb_s):
            return cls(ctx, {}, trunc, hbar)
        sign *= _perm_sign(dz) * _perm_sign(dzb)
        if hbar is not None and h:
            c = c.scale(as_scalar(hbar) ** h)
            h = 0
        if sign < 0:
            c = -c
        return cls(ctx, {TermIndex(dz_s, dzb_s, y, yb, h): c}, trunc, hbar)

    @classmethod
    def function(cls, ctx: WeylContext, f, trunc: Trunc = NO_TRUNC, hbar=None) -> "WeylSection":
        """A fibre-constant 0-form from a RationalFn, HPoly or scalar."""
        n = ctx.n
        zero = (0,) * n
        if isinstance(f, HPoly):
            if hbar is None:
                return cls(ctx, {TermIndex((), (), zero, zero, h): c for h, c in f.coeffs.items()}, trunc, None)
            val = ctx.ring.zero()
            for h, c in f.coeffs.items():
                val = val + c.scale(as_scalar(hbar) ** h)
            return cls(ctx, {TermIndex((), (), zero, zero, 0): val}, trunc, hbar)
        if not isinstance(f, RationalFn):
            f = ctx.ring.const(f)
        return cls(ctx, {TermIndex((), (), zero, zero, 0): f}, trunc, hbar)

    @classmethod
    def y(cls, ctx: WeylContext, i: int, **kw) -> "WeylSection":
        return cls.monomial(ctx, 1, y=_unit(ctx.n, i), **kw)

    @classmethod
    def ybar(cls, ctx: WeylContext, j: int, **kw) -> "WeylSection":
        return cls.monomial(ctx, 1, yb=_unit(ctx.n, j), **kw)

    @classmethod
    def hbar_unit(cls, ctx: WeylContext, **kw) -> "WeylSection":
        return cls.monomial(ctx, 1, h=1, **kw)

    # basic algebra ----------------------------------------------------------
    def _check(self, other: "WeylSection") -> None:
        if other.ctx is not self.ctx and other.ctx.n != self.ctx.n:
            raise ValueError("sections live over different charts")
        if (self.hbar is None) != (other.hbar is None) or (self.hbar is not None and self.hbar != other.hbar):
            raise ValueError("cannot combine formal and evaluated sections (or different hbar values)")

    def _coerce(self, other) -> "WeylSection":
        if isinstance(other, WeylSection):
            self._check(other)
            return other
        return WeylSection.function(self.ctx, other, self.trunc, self.hbar)

    def __add__(self, other) -> "WeylSection":
        other = self._coerce(other)
        out = dict(self.terms)
        for k, v in other.terms.items():
            _add_to(out, k, v)
        return self._new(out, self.trunc.meet(other.trunc))

    __radd__ = __add__

    def __neg__(self) -> "WeylSection":
        return self._new({k: -v for k, v in self.terms.items()})

    def __sub__(self, other) -> "WeylSection":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "WeylSection":
        return self._coerce(other) - self

    def scale(self, c) -> "WeylSection":
        """Multiply by a scalar or by a function of z, zbar."""
        if isinstance(c, RationalFn):
            return self._new({k: v * c for k, v in self.terms.items()})
        c = as_scalar(c)
        return self._new({k: v.scale(c) for k, v in self.terms.items()})

    def __mul__(self, other) -> "WeylSection":
        if isinstance(other, WeylSection):
            raise TypeError("use star() or fiber_mul() for products of sections")
        return self.scale(other)

    __rmul__ = __mul__

    def with_trunc(self, trunc: Trunc) -> "WeylSection":
        return WeylSection(self.ctx, self.terms, trunc, self.hbar)

    def restrict(self, trunc: Trunc) -> "WeylSection":
        return WeylSection(self.ctx, self.terms, self.trunc.meet(trunc), self.hbar)

    def filter(self, pred: Callable[[TermIndex], bool]) -> "WeylSection":
        return self._new({k: v for k, v in self.terms.items() if pred(k)})

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeylSection):
            try:
                other = self._coerce(other)
            except (TypeError, ValueError):
                return NotImplemented
        t = self.trunc.meet(other.trunc)
        return (self.restrict(t) - other.restrict(t)).is_zero()

    __hash__ = None

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(sorted(self.terms.items(), key=lambda kv: _term_sort_key(kv[0])))

    def items(self):
        return self.terms.items()

    def coeff(self, key: TermIndex) -> RationalFn:
        return self.terms.get(key, self.ring.zero())

    # gradings -------------------------------------------------------------------
    def max_ydeg(self) -> int:
        return max((k.ydeg for k in self.terms), default=0)

    def max_ybdeg(self) -> int:
        return max((k.ybdeg for k in self.terms), default=0)

    def max_h(self) -> int:
        return max((k.h for k in self.terms), default=0)

    def form_degrees(self) -> set:
        return {k.form_degree for k in self.terms}

    def weight(self) -> int:
        """Maximum of ``2 * deg_ybar + 2 * deg_hbar`` over the terms."""
        return max((2 * k.ybdeg + 2 * k.h for k in self.terms), default=0)

    def filtration_cut(self, level: int) -> "WeylSection":
        return self.filter(lambda k: 2 * k.ybdeg + 2 * k.h <= level)

    def ydeg_part(self, d: int) -> "WeylSection":
        return self.filter(lambda k: k.ydeg == d)

    def ybdeg_part(self, d: int) -> "WeylSection":
        return self.filter(lambda k: k.ybdeg == d)

    def fedosov_part(self, d: int) -> "WeylSection":
        return self.filter(lambda k: k.fedosov_degree == d)

    def form_part(self, p: int, q: int) -> "WeylSection":
        return self.filter(lambda k: len(k.dz) == p and len(k.dzb) == q)

    def parity_part(self, odd: bool) -> "WeylSection":
        return self.filter(lambda k: (k.form_degree % 2 == 1) == odd)

    def hbar_part(self, h: int) -> "WeylSection":
        return self.filter(lambda k: k.h == h)

    # display --------------------------------------------------------------------
    def __repr__(self) -> str:
        return f"WeylSection({self})"

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for k, v in self:
            parts.append(f"({v})" + _monomial_text(k, self.n))
        return " + ".join(parts)

    def latex(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for k, v in self:
            parts.append(r"\left(" + v.latex() + r"\right)" + _monomial_latex(k, self.n))
        return " + ".join(parts)


def _perm_sign(seq) -> int:
    seq = list(seq)
    s = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                s = -s
    return s


def _term_sort_key(k: TermIndex):
    return (k.form_degree, k.dz, k.dzb, k.fedosov_degree, k.h, k.y, k.yb)


def _monomial_text(k: TermIndex, n: int) -> str:
    bits = []
    if k.h:
        bits.append("h" if k.h == 1 else f"h^{k.h}")
    for i, e in enumerate(k.y):
        if e:
            bits.append(f"y{i + 1}" + (f"^{e}" if e > 1 else ""))
    for i, e in enumerate(k.yb):
        if e:
            bits.append(f"yb{i + 1}" + (f"^{e}" if e > 1 else ""))
    forms = [f"dz{i + 1}" for i in k.dz] + [f"dzb{j + 1}" for j in k.dzb]
    out = "*".join(bits)
    if forms:
        out = "^".join(forms) + ("⊗" + out if out else "")
    return ("*" + out) if out else ""


def _monomial_latex(k: TermIndex, n: int) -> str:
    bits = []
    if k.h:
        bits.append(r"\hbar" + (f"^{{{k.h}}}" if k.h > 1 else ""))
    for i, e in enumerate(k.y):
        if e:
            bits.append(f"y^{{{i + 1}}}" + (f"^{{{e}}}" if e > 1 else ""))
    for i, e in enumerate(k.yb):
        if e:
            bits.append(rf"\bar y^{{{i + 1}}}" + (f"^{{{e}}}" if e > 1 else ""))
    forms = [f"dz^{{{i + 1}}}" for i in k.dz] + [rf"d\bar z^{{{j + 1}}}" for j in k.dzb]
    out = " ".join(bits)
    if forms:
        out = r" \wedge ".join(forms) + (r" \otimes " + out if out else "")
    return (" " + out) if out else ""


# products ------------------------------------------------------------------------


def _star_accumulate(acc: dict, a: WeylSection, b: WeylSection, trunc: Trunc, mult: int, min_k: int, sign_fn=None) -> None:
    ctx = a.ctx
    hbar = a.hbar
    const_pair = ctx.const_pairing
    for ka, ca in a.terms.items():
        ya, yba = ka.y, ka.yb
        for kb, cb in b.terms.items():
            s, dz, dzb = wedge_forms(ka.dz, ka.dzb, kb.dz, kb.dzb)
            if not s:
                continue
            if sign_fn is not None:
                s *= sign_fn(ka, kb)
                if not s:
                    continue
            s *= mult
            pats = ctx.contraction_patterns(ya, kb.yb)
            cab = None
            ybase = _vec_add(ya, kb.y)
            ybbase = _vec_add(yba, kb.yb)
            hbase = ka.h + kb.h
            for k, dy, dyb, comb, counts in pats:
                if k < min_k:
                    continue
                ny = _vec_sub(ybase, dy)
                nyb = _vec_sub(ybbase, dyb)
                nh = hbase + k if hbar is None else 0
                if not trunc.admits_degrees(sum(ny), sum(nyb), nh):
                    continue
                if cab is None:
                    cab = ca * cb
                scal = gauss(comb) * s
                if hbar is not None and k:
                    scal = scal * hbar**k
                if counts:
                    hp = ctx.pairing_product(counts)
                    if const_pair:
                        val = cab.scale(scal * hp)
                    else:
                        val = (cab * hp).scale(scal)
                else:
                    val = cab.scale(scal)
                _add_to(acc, TermIndex(dz, dzb, ny, nyb, nh), val)


def star(a: WeylSection, b: WeylSection, trunc: Trunc | None = None) -> WeylSection:
    """Fibrewise Wick product with forms wedged (form part of ``a`` on the left)."""
    a._check(b)
    t = a.trunc.meet(b.trunc) if trunc is None else trunc
    acc: dict = {}
    _star_accumulate(acc, a, b, t, 1, 0)
    return WeylSection(a.ctx, acc, t, a.hbar)


def fiber_mul(a: WeylSection, b: WeylSection, trunc: Trunc | None = None) -> WeylSection:
    """Commutative fibrewise product (the zeroth order part of the Wick product)."""
    a._check(b)
    t = a.trunc.meet(b.trunc) if trunc is None else trunc
    acc: dict = {}
    for ka, ca in a.terms.items():
        for kb, cb in b.terms.items():
            s, dz, dzb = wedge_forms(ka.dz, ka.dzb, kb.dz, kb.dzb)
            if not s:
                continue
            key = TermIndex(dz, dzb, _vec_add(ka.y, kb.y), _vec_add(ka.yb, kb.yb), ka.h + kb.h)
            if not t.admits(key):
                continue
            v = ca * cb
            _add_to(acc, key, v if s > 0 else -v)
    return WeylSection(a.ctx, acc, t, a.hbar)


def _graded_sign(ka: TermIndex, kb: TermIndex) -> int:
    return -1 if (ka.form_degree * kb.form_degree) % 2 else 1


def bracket(a: WeylSection, b: WeylSection, trunc: Trunc | None = None) -> WeylSection:
    """Graded commutator ``a*b - (-1)^{|a||b|} b*a`` (form degrees)."""
    a._check(b)
    t = a.trunc.meet(b.trunc) if trunc is None else trunc
    acc: dict = {}
    # the zeroth order parts cancel identically, so only contractions are summed
    _star_accumulate(acc, a, b, t, 1, 1)
    _star_accumulate(acc, b, a, t, -1, 1, _graded_sign)
    return WeylSection(a.ctx, acc, t, a.hbar)


def hbar_divide(a: WeylSection, k: int = 1) -> WeylSection:
    """Divide by hbar^k; a formal section must have no terms of hbar-order below k."""
    if a.hbar is not None:
        return a.scale(ONE / as_scalar(a.hbar) ** k)
    out = {}
    for key, v in a.terms.items():
        if key.h < k:
            raise ValueError(f"term of hbar-order {key.h} cannot be divided by hbar^{k}")
        out[key._replace(h=key.h - k)] = v
    t = a.trunc
    if t.max_h is not None:
        t = t._replace(max_h=t.max_h - k)
    if t.max_deg is not None:
        t = t._replace(max_deg=t.max_deg - 2 * k)
    return WeylSection(a.ctx, out, t, None)


def hbar_multiply(a: WeylSection, k: int = 1) -> WeylSection:
    if a.hbar is not None:
        return a.scale(as_scalar(a.hbar) ** k)
    t = a.trunc
    if t.max_h is not None:
        t = t._replace(max_h=t.max_h + k)
    if t.max_deg is not None:
        t = t._replace(max_deg=t.max_deg + 2 * k)
    return WeylSection(a.ctx, {key._replace(h=key.h + k): v for key, v in a.terms.items()}, t, None)


def evaluate_hbar(a: WeylSection, level: int) -> WeylSection:
    """Set hbar = 1/level; returns an evaluated section."""
    if a.hbar is not None:
        raise ValueError("section is already evaluated")
    hval = hbar_at(level)
    acc: dict = {}
    for key, v in a.terms.items():
        _add_to(acc, key._replace(h=0), v.scale(hval**key.h) if key.h else v)
    t = Trunc(a.trunc.max_y, a.trunc.max_ybar, None, None)
    return WeylSection(a.ctx, acc, t, hval)


def symbol(a: WeylSection):
    """Fibre-constant 0-form part: an HPoly (formal) or a RationalFn (evaluated)."""
    parts = {k.h: v for k, v in a.terms.items() if not k.dz and not k.dzb and not any(k.y) and not any(k.yb)}
    if a.hbar is not None:
        return parts.get(0, a.ring.zero())
    return HPoly(a.ring, parts)


# Koszul operators -------------------------------------------------------------


def _map_terms(a: WeylSection, fn, trunc: Trunc | None = None) -> WeylSection:
    acc: dict = {}
    t = a.trunc if trunc is None else trunc
    for k, v in a.terms.items():
        for nk, nv in fn(k, v):
            if t.admits(nk):
                _add_to(acc, nk, nv)
    return WeylSection(a.ctx, acc, t, a.hbar)


def delta10(a: WeylSection) -> WeylSection:
    """``sum_i dz^i ∧ d/dy^i``."""
    n = a.n

    def fn(k: TermIndex, v):
        for i in range(n):
            e = k.y[i]
            if not e:
                continue
            ins = _insert(k.dz, i)
            if ins is None:
                continue
            s, dz = ins
            yield TermIndex(dz, k.dzb, _vec_sub(k.y, _unit(n, i)), k.yb, k.h), v.scale(gauss(e * s))

    t = a.trunc
    return _map_terms(a, fn, t._replace(max_deg=None if t.max_deg is None else t.max_deg - 1))


def delta01(a: WeylSection) -> WeylSection:
    """``sum_j dzbar^j ∧ d/dybar^j``."""
    n = a.n

    def fn(k: TermIndex, v):
        for j in range(n):
            e = k.yb[j]
            if not e:
                continue
            ins = _insert(k.dzb, j)
            if ins is None:
                continue
            s, dzb = ins
            s *= -1 if len(k.dz) % 2 else 1
            yield TermIndex(k.dz, dzb, k.y, _vec_sub(k.yb, _unit(n, j)), k.h), v.scale(gauss(e * s))

    t = a.trunc
    return _map_terms(a, fn, t._replace(max_deg=None if t.max_deg is None else t.max_deg - 1))


def delta(a: WeylSection) -> WeylSection:
    return delta10(a) + delta01(a)


def _raise_trunc(t: Trunc) -> Trunc:
    return t._replace(max_deg=None if t.max_deg is None else t.max_deg + 1)


def delta10_star(a: WeylSection) -> WeylSection:
    """``sum_k y^k ι(d/dz^k)``."""
    n = a.n

    def fn(k: TermIndex, v):
        for pos, i in enumerate(k.dz):
            s = -1 if pos % 2 else 1
            yield TermIndex(k.dz[:pos] + k.dz[pos + 1:], k.dzb, _vec_add(k.y, _unit(n, i)), k.yb, k.h), v if s > 0 else -v

    return _map_terms(a, fn, _raise_trunc(a.trunc))


def delta01_star(a: WeylSection) -> WeylSection:
    """``sum_j ybar^j ι(d/dzbar^j)``."""
    n = a.n

    def fn(k: TermIndex, v):
        for pos, j in enumerate(k.dzb):
            s = -1 if (len(k.dz) + pos) % 2 else 1
            yield TermIndex(k.dz, k.dzb[:pos] + k.dzb[pos + 1:], k.y, _vec_add(k.yb, _unit(n, j)), k.h), v if s > 0 else -v

    return _map_terms(a, fn, _raise_trunc(a.trunc))


def _normalised(a: WeylSection, weight: Callable[[TermIndex], int], op) -> WeylSection:
    groups: dict[int, dict] = {}
    for k, v in a.terms.items():
        w = weight(k)
        if w:
            groups.setdefault(w, {})[k] = v
    out = None
    for w, terms in groups.items():
        part = op(WeylSection(a.ctx, terms, a.trunc, a.hbar)).scale(gauss(Fraction(1, w)))
        out = part if out is None else out + part
    return out if out is not None else op(a.zero_like())


def delta10_inv(a: WeylSection) -> WeylSection:
    """Homotopy for delta10: ``1/(p1 + p2) * y^k ι(d/dz^k)`` on (p1, *)-forms with y-degree p2."""
    return _normalised(a, lambda k: len(k.dz) + k.ydeg, delta10_star)


def delta01_inv(a: WeylSection) -> WeylSection:
    return _normalised(a, lambda k: len(k.dzb) + k.ybdeg, delta01_star)


def delta_inv(a: WeylSection) -> WeylSection:
    """Full homotopy ``1/(fibre degree + form degree) * (y^k ι_k + ybar^j ι_jbar)``."""
    return _normalised(a, lambda k: k.form_degree + k.fiber_degree, lambda s: delta10_star(s) + delta01_star(s))


def pi_0star(a: WeylSection) -> WeylSection:
    """Terms without holomorphic forms and without y."""
    return a.filter(lambda k: not k.dz and not any(k.y))


def pi_00(a: WeylSection) -> WeylSection:
    return a.filter(lambda k: not k.dz and not k.dzb and not any(k.y) and not any(k.yb))


# Levi-Civita connection ------------------------------------------------------------


def _nabla_terms(a: WeylSection, g: ChartGeometry, holo: bool, anti: bool):
    n = a.n
    flat = g.is_flat_metric
    gam = g.christoffel
    gamb = g.christoffel_bar

    def fn(k: TermIndex, v: RationalFn):
        if holo:
            for i in range(n):
                ins = _insert(k.dz, i)
                if ins is None:
                    continue
                s, dz = ins
                dv = v.dz(i)
                if dv:
                    yield TermIndex(dz, k.dzb, k.y, k.yb, k.h), dv if s > 0 else -dv
                if flat:
                    continue
                for kk in range(n):
                    e = k.y[kk]
                    if not e:
                        continue
                    base = _vec_sub(k.y, _unit(n, kk))
                    for p in range(n):
                        c = gam[kk][i][p]
                        if c:
                            yield TermIndex(dz, k.dzb, _vec_add(base, _unit(n, p)), k.yb, k.h), (v * c).scale(gauss(-e * s))
        if anti:
            for j in range(n):
                ins = _insert(k.dzb, j)
                if ins is None:
                    continue
                s, dzb = ins
                s *= -1 if len(k.dz) % 2 else 1
                dv = v.dzb(j)
                if dv:
                    yield TermIndex(k.dz, dzb, k.y, k.yb, k.h), dv if s > 0 else -dv
                if flat:
                    continue
                for ll in range(n):
                    e = k.yb[ll]
                    if not e:
                        continue
                    base = _vec_sub(k.yb, _unit(n, ll))
                    for q in range(n):
                        c = gamb[ll][j][q]
                        if c:
                            yield TermIndex(k.dz, dzb, k.y, _vec_add(base, _unit(n, q)), k.h), (v * c).scale(gauss(-e * s))

    return _map_terms(a, fn)


def nabla(a: WeylSection, g: ChartGeometry) -> WeylSection:
    """Covariant exterior derivative induced by the Chern connection."""
    return _nabla_terms(a, g, True, True)


def nabla10(a: WeylSection, g: ChartGeometry) -> WeylSection:
    return _nabla_terms(a, g, True, False)


def nabla01(a: WeylSection, g: ChartGeometry) -> WeylSection:
    return _nabla_terms(a, g, False, True)


def nabla_tilde10(a: WeylSection, g: ChartGeometry) -> WeylSection:
    """``delta10_inv ∘ nabla10``: raises the y-degree by one."""
    return delta10_inv(nabla10(a, g))


def iterate_nabla_tilde(a0: WeylSection, g: ChartGeometry, max_y: int, include_zero: bool = True) -> WeylSection:
    """``sum_k (nabla_tilde10)^k a0`` through y-degree ``max_y``."""
    t = a0.trunc.meet(Trunc(max_y=max_y))
    cur = a0.restrict(t)
    total = cur if include_zero else cur.zero_like()
    for _ in range(max_y + 1):
        cur = nabla_tilde10(cur, g).restrict(t)
        if cur.is_zero():
            break
        total = total + cur
    return total


# standard sections -------------------------------------------------------------


def curvature_section(g: ChartGeometry, trunc: Trunc = NO_TRUNC, hbar=None) -> WeylSection:
    """``R[i][j][p][q] dz^i ∧ dzbar^j ⊗ y^p ybar^q``."""
    ctx = WeylContext.of(g)
    n = g.n
    terms = {}
    R = g.curvature
    for i in range(n):
        for j in range(n):
            for p in range(n):
                for q in range(n):
                    if R[i][j][p][q]:
                        _add_to(terms, TermIndex((i,), (j,), _unit(n, p), _unit(n, q), 0), R[i][j][p][q])
    return WeylSection(ctx, terms, trunc, hbar)


def two_form(g: ChartGeometry, mat, h: int = 0, trunc: Trunc = NO_TRUNC, hbar=None) -> WeylSection:
    """``hbar^h * mat[i][j] dz^i ∧ dzbar^j`` as a fibre-constant section."""
    ctx = WeylContext.of(g)
    n = g.n
    zero = (0,) * n
    terms = {}
    for i in range(n):
        for j in range(n):
            c = mat[i][j]
            if c:
                if hbar is not None and h:
                    c = c.scale(as_scalar(hbar) ** h)
                _add_to(terms, TermIndex((i,), (j,), zero, zero, h if hbar is None else 0), c)
    return WeylSection(ctx, terms, trunc, hbar)


def one_form(g: ChartGeometry, holo: list | None = None, anti: list | None = None, h: int = 0, trunc: Trunc = NO_TRUNC, hbar=None) -> WeylSection:
    """Fibre-constant 1-form ``sum holo[i] dz^i + sum anti[j] dzbar^j`` (times hbar^h)."""
    ctx = WeylContext.of(g)
    n = g.n
    zero = (0,) * n
    terms = {}
    hh = h if hbar is None else 0
    for i, c in enumerate(holo or []):
        if c:
            _add_to(terms, TermIndex((i,), (), zero, zero, hh), c if hbar is None or not h else c.scale(as_scalar(hbar) ** h))
    for j, c in enumerate(anti or []):
        if c:
            _add_to(terms, TermIndex((), (j,), zero, zero, hh), c if hbar is None or not h else c.scale(as_scalar(hbar) ** h))
    return WeylSection(ctx, terms, trunc, hbar)


def omega_ybar(g: ChartGeometry, j: int, trunc: Trunc = NO_TRUNC, hbar=None) -> WeylSection:
    """``sum_m omega[j][m] ybar^m``."""
    ctx = WeylContext.of(g)
    n = g.n
    zero = (0,) * n
    terms = {TermIndex((), (), zero, _unit(n, m), 0): g.omega[j][m] for m in range(n) if g.omega[j][m]}
    return WeylSection(ctx, terms, trunc, hbar)


def omega_y(g: ChartGeometry, j: int, trunc: Trunc = NO_TRUNC, hbar=None) -> WeylSection:
    """``sum_m omega[m][j] y^m``."""
    ctx = WeylContext.of(g)
    n = g.n
    zero = (0,) * n
    terms = {TermIndex((), (), _unit(n, m), zero, 0): g.omega[m][j] for m in range(n) if g.omega[m][j]}
    return WeylSection(ctx, terms, trunc, hbar)


def gamma0(g: ChartGeometry, trunc: Trunc = NO_TRUNC, hbar=None) -> WeylSection:
    """``omega[i][j] (dz^i ⊗ ybar^j - dzbar^j ⊗ y^i)``; its bracket divided by hbar is delta."""
    ctx = WeylContext.of(g)
    n = g.n
    zero = (0,) * n
    terms: dict = {}
    for i in range(n):
        for j in range(n):
            c = g.omega[i][j]
            if c:
                _add_to(terms, TermIndex((i,), (), zero, _unit(n, j), 0), c)
                _add_to(terms, TermIndex((), (j,), _unit(n, i), zero, 0), -c)
    return WeylSection(ctx, terms, trunc, hbar)


# randomized sections -------------------------------------------------------------


def random_function(ring: ChartRing, rng: random.Random, degree: int = 2, terms: int = 3, gaussian: bool = False) -> RationalFn:
    """Polynomial in z, zbar with small integer coefficients."""
    n = ring.n
    out = ring.zero()
    for _ in range(terms):
        exps = [0] * (2 * n)
        for _ in range(rng.randint(0, degree)):
            exps[rng.randrange(2 * n)] += 1
        mono = ring.one()
        for v, e in enumerate(exps):
            if e:
                mono = mono * ring.var(v) ** e
        c = gauss(rng.randint(-3, 3), rng.randint(-2, 2) if gaussian else 0)
        out = out + mono.scale(c)
    return out


def random_section(
    ctx: WeylContext,
    rng: random.Random,
    max_y: int = 2,
    max_ybar: int = 2,
    max_h: int = 0,
    forms: Iterable[tuple[int, int]] = ((0, 0),),
    n_terms: int = 4,
    coeff_degree: int = 1,
    trunc: Trunc = NO_TRUNC,
    hbar=None,
    gaussian: bool = False,
) -> WeylSection:
    """Seeded random section with small integer coefficients."""
    n = ctx.n
    forms = list(forms)
    terms: dict = {}
    for _ in range(n_terms):
        p, q = rng.choice(forms)
        dz = tuple(sorted(rng.sample(range(n), p))) if p <= n else None
        dzb = tuple(sorted(rng.sample(range(n), q))) if q <= n else None
        if dz is None or dzb is None:
            continue
        y = [0] * n
        for _ in range(rng.randint(0, max_y)):
            y[rng.randrange(n)] += 1
        yb = [0] * n
        for _ in range(rng.randint(0, max_ybar)):
            yb[rng.randrange(n)] += 1
        h = rng.randint(0, max_h) if hbar is None else 0
        c = random_function(ctx.ring, rng, coeff_degree, 2, gaussian)
        if c:
            _add_to(terms, TermIndex(dz, dzb, tuple(y), tuple(yb), h), c)
    return WeylSection(ctx, terms, trunc, hbar)


def describe_term(k: TermIndex) -> str:
    return _monomial_text(k, len(k.y)).lstrip("*") or "1"


def scalar_text(c) -> str:
    return scalar_str(as_scalar(c))


__all__ = [
    "TermIndex",
    "Trunc",
    "NO_TRUNC",
    "WeylContext",
    "WeylSection",
    "flat_context",
    "star",
    "fiber_mul",
    "bracket",
    "hbar_divide",
    "hbar_multiply",
    "evaluate_hbar",
    "symbol",
    "delta10",
    "delta01",
    "delta",
    "delta10_star",
    "delta01_star",
    "delta10_inv",
    "delta01_inv",
    "delta_inv",
    "pi_0star",
    "pi_00",
    "nabla",
    "nabla10",
    "nabla01",
    "nabla_tilde10",
    "iterate_nabla_tilde",
    "curvature_section",
    "two_form",
    "one_form",
    "omega_ybar",
    "omega_y",
    "gamma0",
    "random_function",
    "random_section",
    "wedge_forms",
]
