"""Bargmann-Fock sheaf at level k, the coherent section and quantized operators.

Fock sections are ybar-free sections of the Weyl bundle (with forms) written in
a local frame ``e`` of the line bundle with ``nabla_L e = k d(rho) ⊗ e``.  The Weyl
bundle acts by

    y^I ybar^J (.) s = (-hbar)^|J| omega_inv[p1][j1]..omega_inv[pN][jN] d/dy^p1..d/dy^pN (y^I s)

(derivatives applied after multiplication) with hbar = 1/k, and the Fock connection is

    D s = nabla s + k * gamma (.) s + k * d(rho) ∧ s.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

from .coeffs import ChartRing, RationalFn, as_scalar, factorial, gauss, hbar_at
from .fedosov import LevelData
from .flatsections import holomorphic_flat_section
from .geometry import ChartGeometry
from .weyl import (
    NO_TRUNC,
    TermIndex,
    Trunc,
    WeylContext,
    WeylSection,
    bracket,
    fiber_mul,
    iterate_nabla_tilde,
    nabla,
    one_form,
    symbol,
    wedge_forms,
)


class FockError(ValueError):
    pass


def _add(acc, key, val):
    cur = acc.get(key)
    acc[key] = val if cur is None else cur + val


def check_fock(s: WeylSection) -> None:
    if s.hbar is None:
        raise FockError("Fock sections are evaluated at a level")
    if any(any(k.yb) for k in s.terms):
        raise FockError("Fock sections do not involve ybar")


def bf_act(a: WeylSection, s: WeylSection, trunc: Trunc | None = None) -> WeylSection:
    """Action of a (level) Weyl section on a Fock section; forms of ``a`` on the left."""
    if a.hbar is None or s.hbar is None or a.hbar != s.hbar:
        raise FockError("both sections must be evaluated at the same level")
    ctx = a.ctx
    t = s.trunc.meet(a.trunc) if trunc is None else trunc
    t = Trunc(t.max_y, None, None, None)
    minus_h = -as_scalar(a.hbar)
    acc: dict = {}
    for ka, ca in a.terms.items():
        nJ = ka.ybdeg
        for ks, cs in s.terms.items():
            sign, dz, dzb = wedge_forms(ka.dz, ka.dzb, ks.dz, ks.dzb)
            if not sign:
                continue
            K = tuple(x + y for x, y in zip(ka.y, ks.y))
            cab = None
            for k_, dy, dyb, comb, counts in ctx.contraction_patterns(K, ka.yb):
                if k_ != nJ:
                    continue
                ny = tuple(x - d for x, d in zip(K, dy))
                if t.max_y is not None and sum(ny) > t.max_y:
                    continue
                if cab is None:
                    cab = ca * cs
                scal = gauss(comb) * sign * minus_h**nJ
                if counts:
                    hp = ctx.pairing_product(counts)
                    val = cab.scale(scal * hp) if ctx.const_pairing else (cab * hp).scale(scal)
                else:
                    val = cab.scale(scal)
                _add(acc, TermIndex(dz, dzb, ny, (0,) * ctx.n, 0), val)
    return WeylSection(ctx, acc, t, a.hbar)


def line_form(g: ChartGeometry, k: int, hbar) -> WeylSection:
    """``k * d(rho)`` as a fibre-constant (1,0)-form."""
    return one_form(g, holo=[c.scale(as_scalar(k)) for c in g.d_rho], hbar=hbar)


def fock_connection(lv: LevelData, s: WeylSection, trunc: Trunc | None = None, connection_form: WeylSection | None = None) -> WeylSection:
    """``nabla s + k gamma (.) s + A ∧ s`` with ``A = k d(rho)`` unless given."""
    check_fock(s)
    g = lv.geometry
    t = s.trunc if trunc is None else trunc
    t = Trunc(t.max_y, None, None, None)
    A = line_form(g, lv.k, lv.hbar) if connection_form is None else connection_form
    out = nabla(s, g).restrict(t)
    out = out + bf_act(lv.gamma, s, t).scale(as_scalar(lv.k))
    out = out + fiber_mul(A, s, t)
    return out


def level_connection(lv: LevelData, a: WeylSection, trunc: Trunc | None = None) -> WeylSection:
    return lv.connection(a, trunc)


def beta(g: ChartGeometry, max_y: int, hbar=None) -> WeylSection:
    """``sum_{k>=1} (nabla_tilde10)^k rho``; the first term is ``d_i rho y^i``."""
    ctx = WeylContext.of(g)
    n = g.n
    terms = {}
    for i in range(n):
        if g.d_rho[i]:
            terms[TermIndex((), (), tuple(1 if a == i else 0 for a in range(n)), (0,) * n, 0)] = g.d_rho[i]
    first = WeylSection(ctx, terms, Trunc(max_y=max_y), hbar)
    return iterate_nabla_tilde(first, g, max_y)


def exp_fiber(a: WeylSection, max_y: int) -> WeylSection:
    """Fibrewise exponential of a section without fibre-constant part."""
    t = Trunc(max_y=max_y)
    one = WeylSection.function(a.ctx, a.ring.one(), t, a.hbar)
    out = one
    term = one
    for m in range(1, max_y + 1):
        term = fiber_mul(term, a, t).scale(gauss(Fraction(1, m)))
        if term.is_zero():
            break
        out = out + term
    return out


def coherent_section(lv: LevelData, max_y: int) -> WeylSection:
    """``exp(k * beta)`` in the frame e, through y-degree ``max_y``."""
    b = beta(lv.geometry, max_y, lv.hbar)
    return exp_fiber(b.scale(as_scalar(lv.k)), max_y)


def d_beta_expected(lv: LevelData, max_y: int) -> WeylSection:
    """``omega[i][j] dzbar^j ⊗ y^i - d(rho)``: the value of the connection on beta."""
    g = lv.geometry
    n = g.n
    terms = {}
    for i in range(n):
        for j in range(n):
            if g.omega[i][j]:
                _add(terms, TermIndex((), (j,), tuple(1 if a == i else 0 for a in range(n)), (0,) * n, 0), g.omega[i][j])
    return WeylSection(lv.ctx, terms, Trunc(max_y=max_y), lv.hbar) - one_form(g, holo=g.d_rho, hbar=lv.hbar)


def star_identity_sides(lv: LevelData, max_y: int) -> tuple[WeylSection, WeylSection]:
    """Both sides of ``(I + J) (.) e^{k beta} = [I, k beta] · e^{k beta}`` through ``max_y - 1``."""
    t = Trunc(max_y=max_y - 1)
    eb = coherent_section(lv, max_y)
    b = beta(lv.geometry, max_y, lv.hbar).scale(as_scalar(lv.k))
    lhs = bf_act(lv.I, eb, t)
    rhs = fiber_mul(bracket(lv.I, b, Trunc(max_y=max_y)), eb, t)
    return lhs, rhs


def random_fock_section(lv: LevelData, rng, max_y: int = 3, n_terms: int = 4, forms=((0, 0),)) -> WeylSection:
    from .weyl import random_section

    return random_section(lv.ctx, rng, max_y=max_y, max_ybar=0, forms=forms, n_terms=n_terms, hbar=lv.hbar, trunc=NO_TRUNC)


# differential operators ------------------------------------------------------------


class DiffOperator:
    """Holomorphic differential operator ``sum_b c_b(z) d^b`` in n variables."""

    def __init__(self, ring: ChartRing, coeffs: dict | None = None):
        self.ring = ring
        self.n = ring.n
        self.coeffs = {b: c for b, c in (coeffs or {}).items() if c}

    @classmethod
    def multiplication(cls, f: RationalFn) -> "DiffOperator":
        return cls(f.ring, {(0,) * f.ring.n: f})

    @classmethod
    def partial(cls, ring: ChartRing, i: int) -> "DiffOperator":
        return cls(ring, {tuple(1 if a == i else 0 for a in range(ring.n)): ring.one()})

    def order(self) -> int:
        return max((sum(b) for b in self.coeffs), default=0)

    def apply(self, f: RationalFn) -> RationalFn:
        out = self.ring.zero()
        for b, c in self.coeffs.items():
            d = f
            for i, e in enumerate(b):
                for _ in range(e):
                    d = d.dz(i)
            out = out + c * d
        return out

    def __add__(self, other: "DiffOperator") -> "DiffOperator":
        out = dict(self.coeffs)
        for b, c in other.coeffs.items():
            out[b] = out[b] + c if b in out else c
        return DiffOperator(self.ring, out)

    def __sub__(self, other: "DiffOperator") -> "DiffOperator":
        return self + other.scale(-1)

    def scale(self, c) -> "DiffOperator":
        if isinstance(c, RationalFn):
            return DiffOperator(self.ring, {b: v * c for b, v in self.coeffs.items()})
        c = as_scalar(c)
        return DiffOperator(self.ring, {b: v.scale(c) for b, v in self.coeffs.items()})

    def compose(self, other: "DiffOperator") -> "DiffOperator":
        """``self ∘ other`` via the Leibniz rule."""
        out: dict = {}
        for b, c in self.coeffs.items():
            for b2, c2 in other.coeffs.items():
                # d^b (c2 d^b2) = sum_{a <= b} binom(b, a) d^a(c2) d^{b - a + b2}
                for a in itertools.product(*(range(e + 1) for e in b)):
                    coef = 1
                    dc = c2
                    for i, (ai, bi) in enumerate(zip(a, b)):
                        coef *= factorial(bi) // (factorial(ai) * factorial(bi - ai))
                        for _ in range(ai):
                            dc = dc.dz(i)
                    if not dc:
                        continue
                    key = tuple(bi - ai + ci for ai, bi, ci in zip(a, b, b2))
                    val = (c * dc).scale(gauss(coef))
                    out[key] = out[key] + val if key in out else val
        return DiffOperator(self.ring, out)

    def __matmul__(self, other: "DiffOperator") -> "DiffOperator":
        return self.compose(other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiffOperator):
            return NotImplemented
        keys = set(self.coeffs) | set(other.coeffs)
        z = self.ring.zero()
        return all(self.coeffs.get(b, z) == other.coeffs.get(b, z) for b in keys)

    __hash__ = None

    def is_holomorphic(self) -> bool:
        return all(c.is_holomorphic() for c in self.coeffs.values())

    def __str__(self) -> str:
        if not self.coeffs:
            return "0"
        parts = []
        for b, c in sorted(self.coeffs.items()):
            d = "*".join(f"d{i + 1}" + (f"^{e}" if e > 1 else "") for i, e in enumerate(b) if e)
            parts.append(f"({c})" + (f"*{d}" if d else ""))
        return " + ".join(parts)

    __repr__ = __str__

    def latex(self) -> str:
        if not self.coeffs:
            return "0"
        parts = []
        for b, c in sorted(self.coeffs.items()):
            d = " ".join(
                r"\partial_{" + str(i + 1) + "}" + (f"^{{{e}}}" if e > 1 else "") for i, e in enumerate(b) if e
            )
            parts.append(r"\left(" + c.latex() + r"\right)" + (" " + d if d else ""))
        return " + ".join(parts)

    def to_json(self) -> dict:
        from .serialize import rf_to_json

        return {"n": self.n, "terms": [{"d": list(b), "coeff": rf_to_json(c)} for b, c in sorted(self.coeffs.items())]}


def _monomials(n: int, d: int):
    for total in range(d + 1):
        for m in itertools.product(range(total + 1), repeat=n):
            if sum(m) == total:
                yield m


def _zmono(ring: ChartRing, m) -> RationalFn:
    out = ring.one()
    for i, e in enumerate(m):
        if e:
            out = out * ring.z(i) ** e
    return out


def apply_quantized(lv: LevelData, q: WeylSection, f: RationalFn, ybar_bound: int) -> RationalFn:
    """Holomorphic function ``P(f)`` with ``q (.) (O_f e^{k beta}) = O_{P f} e^{k beta}``.

    Only the fibre-constant part of the result is needed, so sections are
    carried through y-degree ``ybar_bound``.
    """
    Y = ybar_bound
    of = holomorphic_flat_section(lv.geometry, f, Y, lv.hbar).section
    s = fiber_mul(of, coherent_section(lv, Y), Trunc(max_y=Y))
    res = bf_act(q.filter(lambda k: not k.form_degree), s, Trunc(max_y=0))
    val = symbol(res)
    return val


def quantize_to_diffop(lv: LevelData, q: WeylSection, test_degree: int = 3, ybar_bound: int | None = None) -> DiffOperator:
    """Recover the differential operator of a flat section of bounded ybar-degree.

    The operator is solved for on the monomials ``z^m`` in increasing degree
    and then verified on every monomial of degree ``<= test_degree``.
    """
    ring = lv.geometry.ring
    n = ring.n
    N = q.max_ybdeg() if ybar_bound is None else ybar_bound
    coeffs: dict = {}
    op = DiffOperator(ring, coeffs)
    for m in _monomials(n, max(N, test_degree)):
        target = apply_quantized(lv, q, _zmono(ring, m), N)
        if sum(m) <= N:
            known = op.apply(_zmono(ring, m))
            mfact = 1
            for e in m:
                mfact *= factorial(e)
            c = (target - known).scale(gauss(Fraction(1, mfact)))
            if c:
                coeffs[m] = c
                op = DiffOperator(ring, coeffs)
        elif op.apply(_zmono(ring, m)) != target:
            raise FockError(f"no operator of order {N} reproduces the action on z^{m}")
    if not op.is_holomorphic():
        raise FockError("recovered operator has non-holomorphic coefficients")
    return op


def symbol_iso_check(lv: LevelData, f: RationalFn, max_y: int = 4) -> dict:
    """Flatness of ``(sum_k nabla_tilde10^k f) e^{k beta}`` through ``max_y - 1``.

    Holomorphic ``f`` gives a flat Fock section with symbol ``f``; otherwise the
    connection leaves the obstruction ``dbar f ∧ e^{k beta}`` in y-degree zero.
    """
    g = lv.geometry
    ctx = lv.ctx
    a0 = WeylSection.function(ctx, f, Trunc(max_y=max_y), lv.hbar)
    of = iterate_nabla_tilde(a0, g, max_y)
    s = fiber_mul(of, coherent_section(lv, max_y), Trunc(max_y=max_y))
    ds = fock_connection(lv, s, Trunc(max_y=max_y - 1))
    return {"flat": ds.is_zero(), "symbol": symbol(s), "obstruction": ds.filter(lambda k: k.ydeg == 0)}


# prequantum operators ---------------------------------------------------------------


@dataclass
class PrequantumOperator:
    """``Q_f = f + kappa * nabla_{X_f}`` on sections ``s e`` of the level-k line bundle.

    ``X_f`` is the field with ``ι(X_f) omega = df`` for
    ``omega = omega[i][j] dz^i ∧ dzbar^j``: ``X^i = sum_j omega_inv[i][j] dbar_j f`` and
    ``Xbar^j = -sum_i omega_inv[i][j] d_i f``.  The default ``kappa = -1/k`` is the
    normalisation matching the curvature of ``nabla_L e = k d(rho) e``.
    """

    geometry: ChartGeometry
    f: RationalFn
    k: int
    kappa: object
    x_holo: list = field(default_factory=list)
    x_anti: list = field(default_factory=list)

    def apply(self, s: RationalFn) -> RationalFn:
        g = self.geometry
        n = g.n
        conn = self.f.ring.zero()
        for i in range(n):
            if self.x_holo[i]:
                conn = conn + self.x_holo[i] * (s.dz(i) + s * g.d_rho[i].scale(as_scalar(self.k)))
            if self.x_anti[i]:
                conn = conn + self.x_anti[i] * s.dzb(i)
        return self.f * s + conn.scale(as_scalar(self.kappa))

    def preserves_holomorphic(self, samples: list[RationalFn]) -> bool:
        return all(self.apply(s).is_holomorphic() for s in samples)


def prequantum_operator(g: ChartGeometry, f: RationalFn, k: int, kappa=None) -> PrequantumOperator:
    n = g.n
    x_holo = []
    x_anti = []
    for i in range(n):
        xi = g.ring.zero()
        for j in range(n):
            xi = xi + g.omega_inv[i][j] * f.dzb(j)
        x_holo.append(xi)
    for j in range(n):
        xj = g.ring.zero()
        for i in range(n):
            xj = xj - g.omega_inv[i][j] * f.dz(i)
        x_anti.append(xj)
    if kappa is None:
        kappa = -hbar_at(k)
    return PrequantumOperator(g, f, k, kappa, x_holo, x_anti)
