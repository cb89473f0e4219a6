"""Quantum moment sections for holomorphic Killing fields.

For a real vector field ``V = V^i d/dz^i + Vbar^j d/dzbar^j`` with holomorphic
components ``V^i`` the derivation

    A_V = L_V - [D, ι_V]

of the Weyl bundle is inner, ``A_V = (1/hbar)[s_V, -]``, with

    s_V = e^S(s_nabla) + s_delta - ι_V(I),
    s_nabla = -omega[p][b] (nabla_a V^p) y^a ybar^b,
    s_delta = omega[i][j] (Vbar^j y^i - V^i ybar^j),

where ``S = (hbar/2) omega_inv[i][j] d/dy^i d/dybar^j`` intertwines the Moyal-Weyl
product with the Wick product.  Adding a function ``F`` with ``dF = -D(s_V)``
turns ``s_V`` into a flat section.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import sympy as sp

from .coeffs import HPoly, RationalFn, gauss
from .fedosov import FedosovData
from .geometry import ChartGeometry
from .weyl import (
    NO_TRUNC,
    TermIndex,
    Trunc,
    WeylContext,
    WeylSection,
    _add_to,
    _insert,
    bracket,
    hbar_divide,
    wedge_forms,
)


class MomentError(ValueError):
    pass


@dataclass
class SymmetryDatum:
    """Holomorphic components ``v[i]`` and antiholomorphic components ``vbar[j]``."""

    name: str
    v: list
    vbar: list
    meta: dict = field(default_factory=dict)

    def check(self) -> None:
        for c in self.v:
            if not c.is_holomorphic():
                raise MomentError(f"{self.name}: holomorphic component is not holomorphic")
        for c in self.vbar:
            if not c.is_antiholomorphic():
                raise MomentError(f"{self.name}: antiholomorphic component is not antiholomorphic")

    def is_real(self) -> bool:
        return all(a.conj() == b for a, b in zip(self.v, self.vbar))


def rotation(g: ChartGeometry) -> SymmetryDatum:
    """``i (z d/dz - zbar d/dzbar)`` in complex dimension one."""
    if g.n != 1:
        raise MomentError("rotation preset needs complex dimension one")
    z, zb = g.ring.z(0), g.ring.zb(0)
    return SymmetryDatum("rotation", [z.scale(gauss(0, 1))], [zb.scale(gauss(0, -1))])


def translation(g: ChartGeometry, i: int = 0, direction=1) -> SymmetryDatum:
    """Real translation ``c d/dz^i + conj(c) d/dzbar^i`` (``c = direction``)."""
    if not g.is_flat_metric:
        raise MomentError("translations are symmetries of the flat chart only")
    n = g.n
    c = gauss(direction) if isinstance(direction, (int, Fraction)) else direction
    v = [g.ring.const(c) if a == i else g.ring.zero() for a in range(n)]
    vb = [x.conj() for x in v]
    return SymmetryDatum(f"translation:{i + 1}", v, vb)


def symmetry_from_spec(g: ChartGeometry, text: str) -> SymmetryDatum:
    t = text.strip()
    if t == "rotation":
        return rotation(g)
    if t == "translation":
        return translation(g, 0)
    if t.startswith("translation:"):
        return translation(g, int(t.split(":", 1)[1]) - 1)
    raise MomentError(f"unknown symmetry {text!r}; expected rotation or translation[:i]")


def vector_bracket(g: ChartGeometry, a: SymmetryDatum, b: SymmetryDatum) -> SymmetryDatum:
    n = g.n
    v = []
    vb = []
    for i in range(n):
        s = g.ring.zero()
        sb = g.ring.zero()
        for j in range(n):
            s = s + a.v[j] * b.v[i].dz(j) - b.v[j] * a.v[i].dz(j)
            sb = sb + a.vbar[j] * b.vbar[i].dzb(j) - b.vbar[j] * a.vbar[i].dzb(j)
        v.append(s)
        vb.append(sb)
    return SymmetryDatum(f"[{a.name},{b.name}]", v, vb)


# Lie derivative and contraction ---------------------------------------------------


def lie_derivative(sym: SymmetryDatum, a: WeylSection) -> WeylSection:
    """Lie derivative of a Weyl-bundle valued form (fibre variables transform like dz, dzbar)."""
    n = a.n
    dv = [[sym.v[i].dz(j) for j in range(n)] for i in range(n)]
    dvb = [[sym.vbar[i].dzb(j) for j in range(n)] for i in range(n)]
    acc: dict = {}
    for k, c in a.terms.items():
        val = c.ring.zero()
        for i in range(n):
            if sym.v[i]:
                val = val + sym.v[i] * c.dz(i)
            if sym.vbar[i]:
                val = val + sym.vbar[i] * c.dzb(i)
        if val:
            _add_to(acc, k, val)
        for i in range(n):
            e = k.y[i]
            if e:
                for j in range(n):
                    if dv[i][j]:
                        ny = tuple(x - (1 if a_ == i else 0) + (1 if a_ == j else 0) for a_, x in enumerate(k.y))
                        _add_to(acc, k._replace(y=ny), (c * dv[i][j]).scale(gauss(e)))
            e = k.yb[i]
            if e:
                for j in range(n):
                    if dvb[i][j]:
                        nyb = tuple(x - (1 if a_ == i else 0) + (1 if a_ == j else 0) for a_, x in enumerate(k.yb))
                        _add_to(acc, k._replace(yb=nyb), (c * dvb[i][j]).scale(gauss(e)))
        for pos, i in enumerate(k.dz):
            rest = k.dz[:pos] + k.dz[pos + 1:]
            for j in range(n):
                if dv[i][j]:
                    ins = _insert(rest, j)
                    if ins is None:
                        continue
                    s, dz = ins
                    s *= -1 if pos % 2 else 1
                    _add_to(acc, k._replace(dz=dz), c * dv[i][j] if s > 0 else -(c * dv[i][j]))
        for pos, i in enumerate(k.dzb):
            rest = k.dzb[:pos] + k.dzb[pos + 1:]
            for j in range(n):
                if dvb[i][j]:
                    ins = _insert(rest, j)
                    if ins is None:
                        continue
                    s, dzb = ins
                    s *= -1 if pos % 2 else 1
                    _add_to(acc, k._replace(dzb=dzb), c * dvb[i][j] if s > 0 else -(c * dvb[i][j]))
    return WeylSection(a.ctx, acc, a.trunc, a.hbar)


def contract(sym: SymmetryDatum, a: WeylSection) -> WeylSection:
    """Interior product ``ι_V`` (an antiderivation on the form part)."""
    acc: dict = {}
    for k, c in a.terms.items():
        for pos, i in enumerate(k.dz):
            if sym.v[i]:
                val = c * sym.v[i]
                _add_to(acc, k._replace(dz=k.dz[:pos] + k.dz[pos + 1:]), val if pos % 2 == 0 else -val)
        for pos, j in enumerate(k.dzb):
            if sym.vbar[j]:
                val = c * sym.vbar[j]
                p = len(k.dz) + pos
                _add_to(acc, k._replace(dzb=k.dzb[:pos] + k.dzb[pos + 1:]), val if p % 2 == 0 else -val)
    return WeylSection(a.ctx, acc, a.trunc, a.hbar)


def inner_derivation_target(sym: SymmetryDatum, fd: FedosovData, a: WeylSection, trunc: Trunc) -> WeylSection:
    """``L_V a - D(ι_V a) - ι_V(D a)``."""
    la = lie_derivative(sym, a).restrict(trunc)
    return la - fd.connection(contract(sym, a), trunc) - contract(sym, fd.connection(a, trunc))


# Moyal-Weyl product and the intertwiner -------------------------------------------


def e_S(a: WeylSection, sign: int = 1) -> WeylSection:
    """``exp(sign * S)`` with ``S = (hbar/2) omega_inv[i][j] d/dy^i d/dybar^j``."""
    ctx = a.ctx
    out = a
    cur = a
    for m in range(1, 64):
        nxt: dict = {}
        for k, c in cur.terms.items():
            for i in range(a.n):
                if not k.y[i]:
                    continue
                for j in range(a.n):
                    if not k.yb[j] or not ctx.omega_inv[i][j]:
                        continue
                    ny = tuple(x - (1 if t == i else 0) for t, x in enumerate(k.y))
                    nyb = tuple(x - (1 if t == j else 0) for t, x in enumerate(k.yb))
                    fac = gauss(Fraction(sign * k.y[i] * k.yb[j], 2 * m))
                    if a.hbar is None:
                        nk = k._replace(y=ny, yb=nyb, h=k.h + 1)
                    else:
                        nk = k._replace(y=ny, yb=nyb)
                        fac = fac * a.hbar
                    _add_to(nxt, nk, (c * ctx.omega_inv[i][j]).scale(fac))
        cur = WeylSection(ctx, nxt, a.trunc, a.hbar)
        if cur.is_zero():
            break
        out = out + cur
    return out


def star_mw(a: WeylSection, b: WeylSection, trunc: Trunc | None = None) -> WeylSection:
    """Fibrewise Moyal-Weyl product ``exp((hbar/2) omega_inv[i][j](d_yi ⊗ d_ybj - d_ybj ⊗ d_yi))``."""
    a._check(b)
    ctx = a.ctx
    t = a.trunc.meet(b.trunc) if trunc is None else trunc
    half = gauss(Fraction(1, 2))
    acc: dict = {}
    for ka, ca in a.terms.items():
        for kb, cb in b.terms.items():
            s, dz, dzb = wedge_forms(ka.dz, ka.dzb, kb.dz, kb.dzb)
            if not s:
                continue
            cab = None
            for k1, dy1, dyb1, comb1, counts1 in ctx.contraction_patterns(ka.y, kb.yb):
                for k2, dy2, dyb2, comb2, counts2 in ctx.contraction_patterns(kb.y, ka.yb):
                    ny = tuple(x + y - d1 - d2 for x, y, d1, d2 in zip(ka.y, kb.y, dy1, dy2))
                    nyb = tuple(x + y - d1 - d2 for x, y, d1, d2 in zip(ka.yb, kb.yb, dyb2, dyb1))
                    kk = k1 + k2
                    nh = ka.h + kb.h + kk if a.hbar is None else 0
                    if not t.admits_degrees(sum(ny), sum(nyb), nh):
                        continue
                    if cab is None:
                        cab = ca * cb
                    scal = gauss(comb1) * gauss(comb2) * s * half**kk * (-1) ** k2
                    if a.hbar is not None:
                        scal = scal * a.hbar**kk
                    val = cab
                    for cnt in (counts1, counts2):
                        if cnt:
                            hp = ctx.pairing_product(cnt)
                            val = val.scale(hp) if ctx.const_pairing else val * hp
                    _add_to(acc, TermIndex(dz, dzb, ny, nyb, nh), val.scale(scal))
    return WeylSection(ctx, acc, t, a.hbar)


# construction of the moment section ---------------------------------------------------


def covariant_derivative_v(g: ChartGeometry, sym: SymmetryDatum):
    """``A[p][a] = nabla_a V^p`` and ``Abar[c][j] = nabla_jbar Vbar^c``."""
    n = g.n
    A = [[sym.v[p].dz(a) + sum((g.christoffel[p][a][q] * sym.v[q] for q in range(n)), g.ring.zero()) for a in range(n)] for p in range(n)]
    Ab = [
        [sym.vbar[c].dzb(j) + sum((g.christoffel_bar[c][j][q] * sym.vbar[q] for q in range(n)), g.ring.zero()) for j in range(n)]
        for c in range(n)
    ]
    return A, Ab


def killing_tensor(g: ChartGeometry, sym: SymmetryDatum) -> list[list[RationalFn]]:
    """Coefficients ``c[a][b]`` of ``s_nabla = c[a][b] y^a ybar^b``; raises for non-Killing input."""
    n = g.n
    A, Ab = covariant_derivative_v(g, sym)
    c = [[-sum((g.omega[p][b] * A[p][a] for p in range(n)), g.ring.zero()) for b in range(n)] for a in range(n)]
    for cc in range(n):
        for j in range(n):
            lhs = sum((c[a][j] * g.omega_inv[a][cc] for a in range(n)), g.ring.zero())
            if lhs != Ab[cc][j]:
                raise MomentError(f"{sym.name}: symmetry check of the covariant derivative failed at {(cc, j)}; not a holomorphic Killing field")
    return c


def s_nabla(g: ChartGeometry, sym: SymmetryDatum, hbar=None) -> WeylSection:
    n = g.n
    c = killing_tensor(g, sym)
    terms = {}
    for a in range(n):
        for b in range(n):
            if c[a][b]:
                _add_to(terms, TermIndex((), (), tuple(1 if t == a else 0 for t in range(n)), tuple(1 if t == b else 0 for t in range(n)), 0), c[a][b])
    return WeylSection(WeylContext.of(g), terms, NO_TRUNC, hbar)


def s_delta(g: ChartGeometry, sym: SymmetryDatum, hbar=None) -> WeylSection:
    n = g.n
    terms: dict = {}
    zero = (0,) * n
    for i in range(n):
        for j in range(n):
            w = g.omega[i][j]
            if not w:
                continue
            if sym.vbar[j]:
                _add_to(terms, TermIndex((), (), tuple(1 if t == i else 0 for t in range(n)), zero, 0), w * sym.vbar[j])
            if sym.v[i]:
                _add_to(terms, TermIndex((), (), zero, tuple(1 if t == j else 0 for t in range(n)), 0), -(w * sym.v[i]))
    return WeylSection(WeylContext.of(g), terms, NO_TRUNC, hbar)


@dataclass
class MomentSection:
    sym: SymmetryDatum
    section: WeylSection
    completed: WeylSection | None = None
    correction: HPoly | None = None
    completion_note: str = ""
    max_y: int | None = None


def build_moment(fd: FedosovData, sym: SymmetryDatum) -> MomentSection:
    """``s_V = e^S(s_nabla) + s_delta - ι_V(I)`` (formal in hbar)."""
    sym.check()
    g = fd.geometry
    s = e_S(s_nabla(g, sym)) + s_delta(g, sym) - contract(sym, fd.I).with_trunc(NO_TRUNC)
    t = Trunc(max_y=fd.max_y) if not fd.I.is_zero() else NO_TRUNC
    return MomentSection(sym, s.with_trunc(t), max_y=fd.max_y if not fd.I.is_zero() else None)


def solve_moment_linear(fd: FedosovData, sym: SymmetryDatum) -> WeylSection:
    """Determine ``s_V`` from ``(1/hbar)[s_V, g] = A_V(g)`` on the generators y^i, ybar^j.

    Writing ``s_V = q - ι_V(I)`` with ``q`` at most quadratic in the fibre, the
    identity gives every fibre partial derivative of ``q``; the coefficients of
    ``q`` are read off and the mixed partial derivatives are checked to agree.
    """
    g = fd.geometry
    n = g.n
    ctx = WeylContext.of(g)
    t = Trunc(max_y=max(fd.max_y - 1, 2), max_ybar=2)
    iv = contract(sym, fd.I).with_trunc(NO_TRUNC)
    X = []
    Y = []
    for i in range(n):
        yi = WeylSection.y(ctx, i)
        target = inner_derivation_target(sym, fd, yi, t) + hbar_divide(bracket(iv, yi, Trunc(t.max_y, t.max_ybar, None, None)))
        X.append(target.restrict(Trunc(max_y=2, max_ybar=2)))
    for j in range(n):
        ybj = WeylSection.ybar(ctx, j)
        target = inner_derivation_target(sym, fd, ybj, t) + hbar_divide(bracket(iv, ybj, Trunc(t.max_y, t.max_ybar, None, None)))
        Y.append(target.restrict(Trunc(max_y=2, max_ybar=2)))
    # (1/hbar)[q, y^i] = -omega_inv[i][j] d q/d ybar^j ;  (1/hbar)[q, ybar^j] = omega_inv[p][j] d q/dy^p
    dq_dyb = []
    for j in range(n):
        acc = WeylSection.zero(ctx)
        for i in range(n):
            if g.omega[i][j]:
                acc = acc - X[i].scale(g.omega[i][j])
        dq_dyb.append(acc)
    dq_dy = []
    for p in range(n):
        acc = WeylSection.zero(ctx)
        for j in range(n):
            if g.omega[p][j]:
                acc = acc + Y[j].scale(g.omega[p][j])
        dq_dy.append(acc)
    for sec in dq_dyb + dq_dy:
        if any(k.fiber_degree > 1 or k.form_degree for k in sec.terms):
            raise MomentError("no fibre-quadratic solution: derivative data is not affine")
    q: dict = {}
    unit = lambda i: tuple(1 if t_ == i else 0 for t_ in range(n))  # noqa: E731
    for p in range(n):
        for k, c in dq_dy[p].terms.items():
            # d/dy^p of q-monomial y^(k.y + e_p) ybar^(k.yb): coefficient times exponent
            ny = tuple(a + b for a, b in zip(k.y, unit(p)))
            key = TermIndex((), (), ny, k.yb, k.h)
            val = c.scale(gauss(Fraction(1, ny[p])))
            if key in q:
                if q[key] != val:
                    raise MomentError("fibre derivatives are inconsistent (not a gradient)")
            else:
                q[key] = val
    for j in range(n):
        for k, c in dq_dyb[j].terms.items():
            nyb = tuple(a + b for a, b in zip(k.yb, unit(j)))
            key = TermIndex((), (), k.y, nyb, k.h)
            val = c.scale(gauss(Fraction(1, nyb[j])))
            if key in q:
                if q[key] != val:
                    raise MomentError("fibre derivatives are inconsistent (not a gradient)")
            else:
                q[key] = val
    return WeylSection(ctx, q) - iv


def integrate_closed_one_form(ring, holo: list[RationalFn], anti: list[RationalFn]):
    """Function ``F`` with ``dF = sum holo_i dz^i + anti_j dzbar^j`` (sympy integration).

    Returns ``(F, None)`` with F a RationalFn, or ``(None, expr)`` when the primitive
    leaves the rational function class (for instance a logarithm).
    """
    n = ring.n
    syms = ring.symbols
    comps = [c.to_expr() for c in holo] + [c.to_expr() for c in anti]
    F = sp.Integer(0)
    for v in range(2 * n):
        r = sp.cancel(comps[v] - sp.diff(F, syms[v]))
        if r != 0:
            F = F + sp.integrate(r, syms[v])
    F = sp.simplify(F)
    for v in range(2 * n):
        if sp.cancel(sp.diff(F, syms[v]) - comps[v]) != 0:
            raise MomentError("one-form is not closed")
    if F.has(sp.log, sp.atan, sp.asin, sp.acos, sp.atanh, sp.exp):
        return None, F
    return ring.from_expr(F), None


def complete_to_flat(fd: FedosovData, ms: MomentSection) -> MomentSection:
    """Add a function ``F`` (hbar-polynomial) with ``D(s + F) = 0``."""
    g = fd.geometry
    n = g.n
    s = ms.section
    through = (ms.max_y - 1) if ms.max_y is not None else 3
    ds = fd.connection(s.with_trunc(NO_TRUNC) if ms.max_y is None else s, Trunc(max_y=through))
    if any(any(k.y) or any(k.yb) for k in ds.terms):
        raise MomentError("D(s) has fibre-dependent terms; the derivation is not inner")
    by_h: dict[int, tuple[list, list]] = {}
    for k, c in ds.terms.items():
        holo, anti = by_h.setdefault(k.h, ([g.ring.zero()] * n, [g.ring.zero()] * n))
        if k.dz:
            holo[k.dz[0]] = holo[k.dz[0]] + c
        else:
            anti[k.dzb[0]] = anti[k.dzb[0]] + c
    corr = HPoly(g.ring)
    notes = []
    for h, (holo, anti) in sorted(by_h.items()):
        F, bad = integrate_closed_one_form(g.ring, [-c for c in holo], [-c for c in anti])
        if F is None:
            notes.append(f"hbar^{h}: primitive {bad} is outside the rational coefficient class")
            continue
        corr = corr + HPoly(g.ring, {h: F})
    completed = s + WeylSection.function(WeylContext.of(g), corr)
    ms.completed = completed
    ms.correction = corr
    ms.completion_note = "; ".join(notes)
    return ms


def flat_space_moment(g: ChartGeometry, sym: SymmetryDatum, max_deg: int = 4) -> WeylSection:
    """Minus the fibre Taylor series of the Hamiltonian ``f`` with ``ι_V omega = df``.

    On a flat chart with vanishing alpha this is the moment section up to a constant.
    """
    n = g.n
    holo = [sum((-(g.omega[i][j] * sym.vbar[j]) for j in range(n)), g.ring.zero()) for i in range(n)]
    anti = [sum((g.omega[i][j] * sym.v[i] for i in range(n)), g.ring.zero()) for j in range(n)]
    f, bad = integrate_closed_one_form(g.ring, holo, anti)
    if f is None:
        raise MomentError(f"Hamiltonian {bad} is not rational")
    ctx = WeylContext.of(g)
    out = WeylSection.zero(ctx)
    # Taylor expansion in (y, ybar): sum over multi-indices of derivatives / factorials
    frontier = {((0,) * n, (0,) * n): f}
    seen = dict(frontier)
    for _ in range(max_deg):
        nxt = {}
        for (a, b), c in frontier.items():
            for v in range(2 * n):
                d = c.diff(v)
                if not d:
                    continue
                if v < n:
                    key = (tuple(x + (1 if t == v else 0) for t, x in enumerate(a)), b)
                else:
                    key = (a, tuple(x + (1 if t == v - n else 0) for t, x in enumerate(b)))
                if key not in seen:
                    seen[key] = d
                    nxt[key] = d
        frontier = nxt
    for (a, b), c in seen.items():
        if not any(a) and not any(b):
            continue
        fac = 1
        for e in a + b:
            for m in range(2, e + 1):
                fac *= m
        out = out + WeylSection(ctx, {TermIndex((), (), a, b, 0): c.scale(gauss(Fraction(-1, fac)))})
    return out


def lie_algebra_check(fd: FedosovData, a: SymmetryDatum, b: SymmetryDatum, level: int | None = None) -> dict:
    """Compare ``s_[a,b]`` with ``(1/hbar)[s_a, s_b]``; the difference must be central."""
    g = fd.geometry
    sa = complete_to_flat(fd, build_moment(fd, a)).completed
    sb = complete_to_flat(fd, build_moment(fd, b)).completed
    cab = vector_bracket(g, a, b)
    zero_field = all(not c for c in cab.v + cab.vbar)
    if zero_field:
        sc = WeylSection.zero(WeylContext.of(g))
    else:
        sc = complete_to_flat(fd, build_moment(fd, cab)).completed
    trunc = Trunc(max_y=3, max_ybar=3)
    br = hbar_divide(bracket(sa, sb, Trunc(3, 3, None, None)))
    diff = (sc.restrict(trunc) - br.restrict(trunc))
    central = all(not any(k.y) and not any(k.yb) and not k.form_degree and v.is_constant() for k, v in diff.terms.items())
    out = {"central": central, "constant": diff, "bracket_field": cab}
    if level is not None:
        from .weyl import evaluate_hbar

        out["constant_at_level"] = evaluate_hbar(diff, level)
    return out
