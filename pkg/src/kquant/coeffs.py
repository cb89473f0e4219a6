"""Exact coefficients: Gaussian rationals and rational functions in z, zbar.

Scalars are sympy ``QQ_I`` elements.  A :class:`RationalFn` stores a sparse
numerator polynomial (over ``QQ`` when every coefficient is real, otherwise
over ``QQ_I``) together with a denominator kept as a product of registered
monic factors.  Keeping the denominator factored avoids polynomial gcds on
every operation; common factors are removed by trial division.
"""

from __future__ import annotations

import random
import re
import zlib
from fractions import Fraction
from functools import lru_cache

import sympy as sp
from sympy.polys.domains import QQ, QQ_I
from sympy.polys.rings import ring as make_ring

Scalar = type(QQ_I(0, 0))

ZERO = QQ_I(0, 0)
ONE = QQ_I(1, 0)
I_UNIT = QQ_I(0, 1)


def gauss(re_part=0, im_part=0) -> Scalar:
    """Build a Gaussian rational from rational-like real and imaginary parts."""
    return QQ_I(QQ.convert(_to_fraction(re_part)), QQ.convert(_to_fraction(im_part)))


def _to_fraction(x):
    if isinstance(x, Fraction):
        return sp.Rational(x.numerator, x.denominator)
    if isinstance(x, str):
        return sp.Rational(x)
    if hasattr(x, "numerator") and hasattr(x, "denominator"):
        return sp.Rational(int(x.numerator), int(x.denominator))
    return sp.Rational(x)


def as_scalar(x) -> Scalar:
    """Coerce ints, Fractions, sympy numbers and Gaussian rationals."""
    if isinstance(x, Scalar):
        return x
    if isinstance(x, (int, Fraction)):
        return gauss(x)
    if isinstance(x, complex):
        raise TypeError("floating complex numbers are not exact scalars")
    if isinstance(x, sp.Basic):
        return QQ_I.from_sympy(sp.nsimplify(x))
    return QQ_I.convert(x)


def hbar_at(level) -> Scalar:
    """The value ``1/level`` of hbar at a nonzero Gaussian-rational level."""
    k = as_scalar(level)
    if not k:
        raise ZeroDivisionError("level must be nonzero")
    return ONE / k


def parse_scalar(text: str) -> Scalar:
    """Parse ``a``, ``a+b*i``, ``b*i`` or ``-i`` with rational a, b."""
    t = text.replace(" ", "")
    m = re.fullmatch(r"([+-]?\d+(?:/\d+)?)?(?:([+-]?)(\d+(?:/\d+)?)?\*?i)?", t)
    if not t or m is None:
        raise ValueError(f"not a Gaussian rational: {text!r}")
    re_s, sign, im_s = m.groups()
    re_part = sp.Rational(re_s) if re_s else 0
    if t.endswith("i") and re_s and not sign and im_s is None and not t[len(re_s):].startswith(("+", "-")):
        re_part, im_part = 0, sp.Rational(re_s)
    elif t.endswith("i"):
        im_part = sp.Rational(im_s) if im_s else 1
        if sign == "-":
            im_part = -im_part
    else:
        im_part = 0
    return gauss(re_part, im_part)


def scalar_str(c: Scalar) -> str:
    """Render a scalar as ``a``, ``b*i`` or ``a+b*i``."""
    re_part, im_part = sp.Rational(int(c.x.numerator), int(c.x.denominator)), sp.Rational(
        int(c.y.numerator), int(c.y.denominator)
    )
    if im_part == 0:
        return str(re_part)
    im_txt = "i" if im_part == 1 else "-i" if im_part == -1 else f"{im_part}*i"
    if re_part == 0:
        return im_txt
    return f"{re_part}{'' if im_txt.startswith('-') else '+'}{im_txt}"


def scalar_conj(c: Scalar) -> Scalar:
    return QQ_I(c.x, -c.y)


def scalar_is_real(c: Scalar) -> bool:
    return c.y == 0


def scalar_parts(c: Scalar) -> tuple[str, str]:
    return str(c.x), str(c.y)


def scalar_from_parts(re_s: str, im_s: str) -> Scalar:
    return gauss(sp.Rational(re_s), sp.Rational(im_s))


class Factor:
    """A registered monic denominator factor."""

    __slots__ = ("fid", "pi", "pq", "_deriv", "points")

    def __init__(self, fid: int, pi, pq):
        self.fid = fid
        self.pi = pi
        self.pq = pq
        self._deriv: dict[int, object] = {}
        self.points = _points_on_zero_set(pi)

    def poly(self, domain_is_q: bool):
        return self.pq if domain_is_q else self.pi

    def deriv(self, var: int):
        d = self._deriv.get(var)
        if d is None:
            d = RationalFn._from_poly_any(self.pi.diff(self.pi.ring.gens[var]))
            self._deriv[var] = d
        return d


def _find_modulus() -> tuple[int, int]:
    p = sp.nextprime(2**61)
    while p % 4 != 1:
        p = sp.nextprime(p)
    g = 2
    while pow(g, (p - 1) // 2, p) != p - 1:
        g += 1
    return int(p), pow(g, (p - 1) // 4, p)


_P, _SQRT_M1 = _find_modulus()


def _mod_scalar(c, is_q: bool) -> int:
    if is_q:
        return int(c.numerator) * pow(int(c.denominator), -1, _P) % _P
    re_m = int(c.x.numerator) * pow(int(c.x.denominator), -1, _P)
    im_m = int(c.y.numerator) * pow(int(c.y.denominator), -1, _P)
    return (re_m + _SQRT_M1 * im_m) % _P


def _mod_eval(p, pt) -> int:
    is_q = _is_q(p)
    total = 0
    for m, c in p.items():
        v = _mod_scalar(c, is_q)
        for x, e in zip(pt, m):
            if e:
                v = v * pow(x, e, _P) % _P
        total += v
    return total % _P


def _points_on_zero_set(p, count: int = 2):
    """A few points modulo a large prime where ``p`` vanishes.

    Used only as a quick non-divisibility test: if a numerator does not vanish
    at such a point it cannot be a multiple of ``p``.
    """
    rng = random.Random(zlib.crc32(str(sorted(p.items())).encode()))
    R = p.ring
    nv = R.ngens
    for v in range(nv):
        if p.degree(R.gens[v]) != 1:
            continue
        dp = p.diff(R.gens[v])
        rest = p - dp * R.gens[v]
        pts = []
        for _ in range(20):
            vals = [rng.randrange(1, _P) for _ in range(nv)]
            a = _mod_eval(dp, vals)
            if a == 0:
                continue
            vals[v] = (-_mod_eval(rest, vals)) * pow(a, -1, _P) % _P
            pts.append(tuple(vals))
            if len(pts) >= count:
                return pts
        return pts
    return []


class ChartRing:
    """Polynomial rings in z1..zn, zb1..zbn shared by all coefficients of a chart."""

    _cache: dict[int, "ChartRing"] = {}

    def __new__(cls, n: int):
        inst = cls._cache.get(n)
        if inst is None:
            inst = super().__new__(cls)
            inst._init(n)
            cls._cache[n] = inst
        return inst

    def _init(self, n: int) -> None:
        self.n = n
        self.names = [f"z{i}" for i in range(1, n + 1)] + [f"zb{i}" for i in range(1, n + 1)]
        self.RI = make_ring(",".join(self.names), QQ_I)[0]
        self.RQ = make_ring(",".join(self.names), QQ)[0]
        self.symbols = [sp.Symbol(s) for s in self.names]
        self.factors: list[Factor] = []
        self._factor_index: dict = {}
        self._perm = list(range(n, 2 * n)) + list(range(n))

    def __reduce__(self):
        return (ChartRing, (self.n,))

    def __repr__(self) -> str:
        return f"ChartRing({self.n})"

    def register(self, monic_pi) -> int:
        key = tuple(sorted(monic_pi.terms()))
        fid = self._factor_index.get(key)
        if fid is None:
            fid = len(self.factors)
            pq = None
            if all(c.y == 0 for c in monic_pi.values()):
                pq = self.RQ.from_dict({m: c.x for m, c in monic_pi.items()})
            self.factors.append(Factor(fid, monic_pi, pq))
            self._factor_index[key] = fid
        return fid

    def conj_monomial(self, m):
        return tuple(m[j] for j in self._perm)

    # constructors
    def const(self, c) -> "RationalFn":
        return RationalFn.const(self, c)

    def z(self, i: int) -> "RationalFn":
        return RationalFn(self, self.RQ.gens[i], ())

    def zb(self, i: int) -> "RationalFn":
        return RationalFn(self, self.RQ.gens[self.n + i], ())

    def var(self, v: int) -> "RationalFn":
        return RationalFn(self, self.RQ.gens[v], ())

    def zero(self) -> "RationalFn":
        return RationalFn(self, self.RQ.zero, ())

    def one(self) -> "RationalFn":
        return RationalFn(self, self.RQ.one, ())

    def from_expr(self, expr) -> "RationalFn":
        return RationalFn.from_expr(self, expr)


def _is_q(p) -> bool:
    return p.ring.domain is QQ


def _lift(p, ring: ChartRing):
    """View a polynomial over QQ_I."""
    if p.ring.domain is QQ:
        return ring.RI.from_dict({m: QQ_I(c, 0) for m, c in p.items()})
    return p


def _maybe_lower(p, ring: ChartRing):
    """Move a QQ_I polynomial back to QQ when all coefficients are real."""
    if p.ring.domain is QQ:
        return p
    for c in p.values():
        if c.y != 0:
            return p
    return ring.RQ.from_dict({m: c.x for m, c in p.items()})


class RationalFn:
    """Exact rational function of z1..zn, zb1..zbn over the Gaussian rationals.

    ``num`` is a sympy sparse polynomial, ``den`` a sorted tuple of
    ``(factor_id, power)`` pairs referring to ``ring.factors``.
    """

    __slots__ = ("ring", "num", "den")

    def __init__(self, ring: ChartRing, num, den: tuple = ()):
        self.ring = ring
        self.num = num
        self.den = den

    # construction -------------------------------------------------------
    @classmethod
    def const(cls, ring: ChartRing, c) -> "RationalFn":
        c = as_scalar(c)
        if c.y == 0:
            return cls(ring, ring.RQ(c.x), ())
        return cls(ring, ring.RI(c), ())

    @classmethod
    def _from_poly_any(cls, p) -> "RationalFn":
        ring = ChartRing(p.ring.ngens // 2)
        if p.ring.domain is QQ:
            return cls(ring, p.set_ring(ring.RQ) if p.ring is not ring.RQ else p, ())
        return cls(ring, _maybe_lower(p.set_ring(ring.RI) if p.ring is not ring.RI else p, ring), ())

    @classmethod
    def from_expr(cls, ring: ChartRing, expr) -> "RationalFn":
        expr = sp.together(sp.sympify(expr))
        numer, denom = sp.fraction(expr)
        gens = ring.symbols
        extra = (numer.free_symbols | denom.free_symbols) - set(gens)
        if extra:
            raise ValueError(f"unknown symbols {sorted(map(str, extra))}")
        p = _maybe_lower(ring.RI.from_expr(sp.expand(numer)) if numer.free_symbols else ring.RI(QQ_I.from_sympy(numer)), ring)
        q = _maybe_lower(ring.RI.from_expr(sp.expand(denom)) if denom.free_symbols else ring.RI(QQ_I.from_sympy(denom)), ring)
        return cls(ring, p, ()) / cls(ring, q, ())

    # basic predicates -----------------------------------------------------
    def is_zero(self) -> bool:
        return not self.num

    def __bool__(self) -> bool:
        return bool(self.num)

    def is_constant(self) -> bool:
        return not self.den and self.num.is_ground

    def constant_value(self) -> Scalar:
        if not self.is_constant():
            raise ValueError("not a constant")
        c = self.num.LC if self.num else 0
        return QQ_I(c, 0) if _is_q(self.num) else (c if self.num else ZERO)

    def is_holomorphic(self) -> bool:
        n = self.ring.n
        if any(any(m[n:]) for m in self.num.keys()):
            return False
        for fid, _ in self.den:
            if any(any(m[n:]) for m in self.ring.factors[fid].pi.keys()):
                return False
        return True

    def is_antiholomorphic(self) -> bool:
        n = self.ring.n
        if any(any(m[:n]) for m in self.num.keys()):
            return False
        for fid, _ in self.den:
            if any(any(m[:n]) for m in self.ring.factors[fid].pi.keys()):
                return False
        return True

    # arithmetic ---------------------------------------------------------
    def _coerce(self, other) -> "RationalFn":
        if isinstance(other, RationalFn):
            return other
        return RationalFn.const(self.ring, other)

    def _den_poly(self, den, is_q: bool):
        R = self.ring.RQ if is_q else self.ring.RI
        p = R.one
        for fid, e in den:
            p = p * self.ring.factors[fid].poly(is_q) ** e
        return p

    @staticmethod
    def _align(a, b):
        if _is_q(a) == _is_q(b):
            return a, b
        ring = ChartRing(a.ring.ngens // 2)
        return _lift(a, ring), _lift(b, ring)

    def _common(self, other: "RationalFn"):
        if self.den == other.den:
            a, b = self._align(self.num, other.num)
            return a, b, self.den
        da = dict(self.den)
        db = dict(other.den)
        keys = sorted(set(da) | set(db))
        den = tuple((k, max(da.get(k, 0), db.get(k, 0))) for k in keys)
        a, b = self._align(self.num, other.num)
        is_q = _is_q(a)
        fa = [(k, e - da.get(k, 0)) for k, e in den if e - da.get(k, 0) > 0]
        fb = [(k, e - db.get(k, 0)) for k, e in den if e - db.get(k, 0) > 0]
        if fa:
            a = a * self._den_poly(fa, is_q)
        if fb:
            b = b * self._den_poly(fb, is_q)
        return a, b, den

    def __add__(self, other) -> "RationalFn":
        other = self._coerce(other)
        if not other.num:
            return self
        if not self.num:
            return other
        a, b, den = self._common(other)
        return RationalFn(self.ring, a + b, den)._reduced(len(den) > 0)

    __radd__ = __add__

    def __neg__(self) -> "RationalFn":
        return RationalFn(self.ring, -self.num, self.den)

    def __sub__(self, other) -> "RationalFn":
        other = self._coerce(other)
        if not other.num:
            return self
        if not self.num:
            return -other
        a, b, den = self._common(other)
        return RationalFn(self.ring, a - b, den)._reduced(len(den) > 0)

    def __rsub__(self, other) -> "RationalFn":
        return self._coerce(other) - self

    def __mul__(self, other) -> "RationalFn":
        if not isinstance(other, RationalFn):
            return self.scale(as_scalar(other))
        if not self.num or not other.num:
            return RationalFn(self.ring, self.ring.RQ.zero, ())
        a, b = self._align(self.num, other.num)
        if not self.den:
            den = other.den
            cross = bool(den) and not self.num.is_ground
        elif not other.den:
            den = self.den
            cross = not other.num.is_ground
        else:
            d = dict(self.den)
            for k, e in other.den:
                d[k] = d.get(k, 0) + e
            den = tuple(sorted(d.items()))
            cross = True
        return RationalFn(self.ring, a * b, den)._reduced(cross)

    __rmul__ = __mul__

    def scale(self, c: Scalar) -> "RationalFn":
        if c == ONE:
            return self
        if c.y == 0:
            if _is_q(self.num):
                return RationalFn(self.ring, self.num * c.x, self.den)
            return RationalFn(self.ring, self.num * c, self.den)
        num = _lift(self.num, self.ring) * c
        return RationalFn(self.ring, _maybe_lower(num, self.ring), self.den)

    def __truediv__(self, other) -> "RationalFn":
        if not isinstance(other, RationalFn):
            c = as_scalar(other)
            if c == ZERO:
                raise ZeroDivisionError("division by zero scalar")
            return self.scale(ONE / c)
        if not other.num:
            raise ZeroDivisionError("division by the zero rational function")
        return self * other.inverse()

    def __rtruediv__(self, other) -> "RationalFn":
        return self._coerce(other) * self.inverse()

    def inverse(self) -> "RationalFn":
        if not self.num:
            raise ZeroDivisionError("inverse of zero")
        ring = self.ring
        # numerator of the inverse is the old denominator
        is_q = _is_q(self.num)
        if self.num.is_ground:
            c = self.num.LC
            new_num = self._den_poly(self.den, is_q)
            inv = (QQ.one / c) if is_q else (QQ_I.one / c)
            return RationalFn(ring, _maybe_lower(new_num * inv, ring), ())
        content, facs = self.num.factor_list()
        if is_q:
            content_i = QQ_I(content, 0)
        else:
            content_i = content
        den = {}
        for f, e in facs:
            fi = _lift(f, ring)
            lc = fi.LC
            fi = fi * (QQ_I.one / lc)
            content_i = content_i * lc**e
            fid = ring.register(fi)
            den[fid] = den.get(fid, 0) + e
        new_num = _lift(self._den_poly(self.den, is_q), ring) * (QQ_I.one / content_i)
        return RationalFn(ring, _maybe_lower(new_num, ring), tuple(sorted(den.items())))._reduced(bool(self.den))

    def __pow__(self, e: int) -> "RationalFn":
        if e < 0:
            return self.inverse() ** (-e)
        if e == 0:
            return RationalFn(self.ring, self.ring.RQ.one, ())
        return RationalFn(self.ring, self.num**e, tuple((k, p * e) for k, p in self.den))

    def _reduced(self, try_cancel: bool = True) -> "RationalFn":
        if not self.den:
            return self
        if not self.num:
            return RationalFn(self.ring, self.ring.RQ.zero, ())
        if not try_cancel or self.num.is_ground:
            return self
        num = self.num
        is_q = _is_q(num)
        den = dict(self.den)
        changed = False
        for fid in list(den):
            fac = self.ring.factors[fid]
            f = fac.poly(is_q)
            if f is None:
                f = fac.pi
                num = _lift(num, self.ring)
                is_q = False
            while den[fid] > 0:
                if fac.points and _vanishes_nowhere(num, fac.points):
                    break
                q, r = num.div(f)
                if r:
                    break
                num = q
                den[fid] -= 1
                changed = True
        if not changed:
            return self
        return RationalFn(self.ring, _maybe_lower(num, self.ring), tuple(sorted((k, e) for k, e in den.items() if e)))

    # comparisons ----------------------------------------------------------
    def __eq__(self, other) -> bool:
        if not isinstance(other, RationalFn):
            try:
                other = self._coerce(other)
            except (TypeError, ValueError, sp.SympifyError):
                return NotImplemented
        if self.den == other.den:
            a, b = self._align(self.num, other.num)
            return a == b
        return not (self - other).num

    def __ne__(self, other) -> bool:
        eq = self.__eq__(other)
        return eq if eq is NotImplemented else not eq

    __hash__ = None

    # calculus -------------------------------------------------------------
    def diff(self, var: int) -> "RationalFn":
        """Partial derivative with respect to generator ``var`` (z's first, then zb's)."""
        ring = self.ring
        if not self.num:
            return self
        g = (ring.RQ if _is_q(self.num) else ring.RI).gens[var]
        dnum = self.num.diff(g)
        if not self.den:
            return RationalFn(ring, dnum, ())
        terms = RationalFn(ring, dnum, self.den)
        for fid, e in self.den:
            df = ring.factors[fid].deriv(var)
            if not df.num:
                continue
            # d(f^-e) = -e f' f^-(e+1)
            den = tuple(sorted((k, p + (1 if k == fid else 0)) for k, p in self.den))
            a, b = self._align(self.num, df.num)
            terms = terms - RationalFn(ring, a * b, den).scale(gauss(e))
        return terms

    def dz(self, i: int) -> "RationalFn":
        return self.diff(i)

    def dzb(self, i: int) -> "RationalFn":
        return self.diff(self.ring.n + i)

    def conj(self) -> "RationalFn":
        """Complex conjugate: swap z_i with zb_i and conjugate coefficients."""
        ring = self.ring
        if _is_q(self.num):
            num = ring.RQ.from_dict({ring.conj_monomial(m): c for m, c in self.num.items()})
        else:
            num = ring.RI.from_dict({ring.conj_monomial(m): scalar_conj(c) for m, c in self.num.items()})
        den = []
        for fid, e in self.den:
            f = ring.factors[fid].pi
            fc = ring.RI.from_dict({ring.conj_monomial(m): scalar_conj(c) for m, c in f.items()})
            lc = fc.LC
            fc = fc * (QQ_I.one / lc)
            if lc != ONE:
                num = _maybe_lower(_lift(num, ring) * (QQ_I.one / lc) ** e, ring)
            den.append((ring.register(fc), e))
        d = {}
        for k, e in den:
            d[k] = d.get(k, 0) + e
        return RationalFn(ring, num, tuple(sorted(d.items())))

    def evaluate(self, point) -> Scalar:
        """Value at a point given as a sequence of 2n scalars."""
        pt = [as_scalar(p) for p in point]
        num = _lift(self.num, self.ring)
        val = _eval_poly(num, pt)
        for fid, e in self.den:
            d = _eval_poly(self.ring.factors[fid].pi, pt)
            if d == ZERO:
                raise ZeroDivisionError("pole at evaluation point")
            val = val / d**e
        return val

    def substitute(self, images: dict) -> "RationalFn":
        """Substitute generators by rational functions (keys are generator indices)."""
        expr = self.to_expr()
        sub = {self.ring.symbols[k]: v.to_expr() for k, v in images.items()}
        return RationalFn.from_expr(self.ring, sp.together(expr.subs(sub, simultaneous=True)))

    # conversion -----------------------------------------------------------
    def to_expr(self):
        expr = self.num.as_expr()
        for fid, e in self.den:
            expr = expr / self.ring.factors[fid].pi.as_expr() ** e
        return expr

    def numerator_terms(self):
        """Sorted ``(monomial, Scalar)`` pairs of the numerator."""
        is_q = _is_q(self.num)
        return sorted((m, QQ_I(c, 0) if is_q else c) for m, c in self.num.items())

    def denominator_factors(self):
        out = []
        for fid, e in self.den:
            f = self.ring.factors[fid].pi
            out.append((sorted(f.items()), e))
        return out

    def canonical(self) -> "RationalFn":
        """Fully reduced form: numerator coprime to every denominator factor."""
        return RationalFn(self.ring, self.num, self.den)._reduced(True)

    def total_degree(self) -> int:
        return max((sum(m) for m in self.num.keys()), default=0)

    def __repr__(self) -> str:
        return f"RationalFn({self})"

    def __str__(self) -> str:
        return str(self.to_expr())

    def latex(self) -> str:
        return sp.latex(self.to_expr())


def _vanishes_nowhere(num, points) -> bool:
    """True when num is nonzero at one of the given points (so it is not divisible)."""
    return any(_mod_eval(num, pt) for pt in points)


def _eval_poly(p, pt) -> Scalar:
    total = ZERO
    is_q = _is_q(p)
    for m, c in p.items():
        v = QQ_I(c, 0) if is_q else c
        for x, e in zip(pt, m):
            if e:
                v = v * x**e
        total = total + v
    return total


class HPoly:
    """Polynomial in hbar with rational-function coefficients (``{power: RationalFn}``)."""

    __slots__ = ("ring", "coeffs")

    def __init__(self, ring: ChartRing, coeffs: dict | None = None):
        self.ring = ring
        self.coeffs = {k: v for k, v in (coeffs or {}).items() if v}

    @classmethod
    def of(cls, f) -> "HPoly":
        if isinstance(f, HPoly):
            return f
        return cls(f.ring, {0: f})

    def __add__(self, other) -> "HPoly":
        other = HPoly.of(other)
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out[k] + v if k in out else v
        return HPoly(self.ring, out)

    def __neg__(self) -> "HPoly":
        return HPoly(self.ring, {k: -v for k, v in self.coeffs.items()})

    def __sub__(self, other) -> "HPoly":
        return self + (-HPoly.of(other))

    def __mul__(self, other) -> "HPoly":
        if not isinstance(other, (HPoly, RationalFn)):
            return HPoly(self.ring, {k: v * other for k, v in self.coeffs.items()})
        other = HPoly.of(other)
        out: dict = {}
        for a, va in self.coeffs.items():
            for b, vb in other.coeffs.items():
                p = va * vb
                out[a + b] = out[a + b] + p if a + b in out else p
        return HPoly(self.ring, out)

    __rmul__ = __mul__

    def shift(self, k: int) -> "HPoly":
        """Multiply by hbar**k."""
        return HPoly(self.ring, {p + k: v for p, v in self.coeffs.items()})

    def is_zero(self) -> bool:
        return not self.coeffs

    def __eq__(self, other) -> bool:
        if isinstance(other, RationalFn):
            other = HPoly.of(other)
        if not isinstance(other, HPoly):
            return NotImplemented
        return (self - other).is_zero()

    __hash__ = None

    def __getitem__(self, k: int) -> RationalFn:
        return self.coeffs.get(k, self.ring.zero())

    def max_power(self) -> int:
        return max(self.coeffs, default=0)

    def evaluate(self, level: int) -> RationalFn:
        """Set hbar = 1/level."""
        out = self.ring.zero()
        for p, v in self.coeffs.items():
            out = out + v.scale(hbar_at(level) ** p if p >= 0 else as_scalar(level) ** (-p))
        return out

    def truncate(self, max_power: int) -> "HPoly":
        return HPoly(self.ring, {k: v for k, v in self.coeffs.items() if k <= max_power})

    def to_expr(self, hbar=sp.Symbol("h")):
        return sum((v.to_expr() * hbar**k for k, v in sorted(self.coeffs.items())), sp.Integer(0))

    def __str__(self) -> str:
        return str(self.to_expr())

    __repr__ = __str__


@lru_cache(maxsize=None)
def factorial(k: int) -> int:
    return 1 if k <= 1 else k * factorial(k - 1)
