"""Flat sections of a Fedosov connection and the quantizable subalgebra.

A formal flat section is built degree by degree in the Fedosov grading
(``y``, ``ybar`` of weight one, ``hbar`` of weight two) from

    O = f + delta_inv(nabla O + (1/hbar)[I, O]).

Sections with bounded ybar-degree are reconstructed from their y-free part
``a0`` through ``sum_k (nabla_tilde10)^k a0``; this works equally for formal and
for evaluated (hbar = 1/k) sections.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .coeffs import HPoly, RationalFn, as_scalar, gauss, hbar_at
from .fedosov import FedosovData, LevelData
from .geometry import ChartGeometry, cp1_second_chart_d_rho, u_function
from .weyl import (
    NO_TRUNC,
    Trunc,
    TermIndex,
    WeylContext,
    WeylSection,
    bracket,
    delta_inv,
    evaluate_hbar,
    fiber_mul,
    hbar_divide,
    iterate_nabla_tilde,
    nabla,
    omega_ybar,
    star,
    symbol,
)


class FlatSectionError(RuntimeError):
    pass


@dataclass
class FlatSection:
    """A flat section together with how far it is known and where it came from.

    ``max_deg`` is the Fedosov degree (formal) or y-degree (reconstructed)
    through which ``section`` is exact; ``exact`` records that the section
    is a finite polynomial in the fibre variables with nothing dropped.
    """

    section: WeylSection
    max_deg: int
    grading: str = "fedosov"
    exact: bool = False
    provenance: str = "function"
    ybar_bound: int | None = None
    source: object = None
    meta: dict = field(default_factory=dict)

    def ybar_degree(self) -> int:
        return self.section.max_ybdeg()


def flat_section(fd: FedosovData, f, max_deg: int, provenance: str = "function") -> FlatSection:
    """Formal flat section with symbol ``f`` (RationalFn or HPoly) through Fedosov degree ``max_deg``."""
    g = fd.geometry
    ctx = WeylContext.of(g)
    f = HPoly.of(f)
    T = max_deg
    if fd.max_y < T - 1:
        raise FlatSectionError(f"Fedosov data through y-degree {fd.max_y} is too short for degree {T}")
    i_comp = {}
    for key, v in fd.I.terms.items():
        i_comp.setdefault(key.fedosov_degree, {})[key] = v
    i_comp = {d: WeylSection(ctx, t) for d, t in i_comp.items()}
    zero = (0,) * g.n
    comps: list[WeylSection] = []
    for m in range(T + 1):
        cur = WeylSection.zero(ctx)
        if m % 2 == 0 and m // 2 in f.coeffs:
            cur = WeylSection(ctx, {TermIndex((), (), zero, zero, m // 2): f.coeffs[m // 2]})
        if m >= 1:
            one = nabla(comps[m - 1], g)
            for j in range(1, m):
                d = m + 1 - j
                if d in i_comp and not comps[j].is_zero():
                    one = one + hbar_divide(bracket(i_comp[d], comps[j]))
            cur = cur + delta_inv(one)
        comps.append(cur)
    total = WeylSection.zero(ctx)
    for c in comps:
        total = total + c
    exact = False
    if fd.I.is_zero() and f.max_power() * 2 < T and comps[-1].is_zero():
        exact = True
    sec = total.with_trunc(NO_TRUNC if exact else Trunc(max_deg=T))
    return FlatSection(sec, T, "fedosov", exact, provenance, None, f)


def holomorphic_flat_section(g: ChartGeometry, f: RationalFn, max_y: int, hbar=None) -> FlatSection:
    """``sum_k (nabla_tilde10)^k f`` for a holomorphic function ``f``; ybar-free."""
    if not f.is_holomorphic():
        raise FlatSectionError("function is not holomorphic")
    ctx = WeylContext.of(g)
    a0 = WeylSection.function(ctx, f, Trunc(max_y=max_y), hbar)
    sec = iterate_nabla_tilde(a0, g, max_y)
    exact = sec.max_ydeg() < max_y
    return FlatSection(sec.with_trunc(NO_TRUNC) if exact else sec, max_y, "y", exact, "holomorphic", 0, f)


def reconstruct_from_antiholomorphic(g: ChartGeometry, a0: WeylSection, max_y: int) -> WeylSection:
    """The unique solution of the (1,0) flatness equation with y-free part ``a0``."""
    return iterate_nabla_tilde(a0.restrict(Trunc(max_y=max_y)), g, max_y)


def build_u(fd: FedosovData, j: int) -> HPoly:
    """``u_j = d_j (rho - phi)`` for the potential of the chart and of alpha."""
    return u_function(fd.geometry, fd.alpha, j)


def u_seed(fd: FedosovData, j: int, level: int | None = None) -> WeylSection:
    """``u_j + omega[j][m] ybar^m`` (formal, or evaluated at hbar = 1/level)."""
    g = fd.geometry
    ctx = WeylContext.of(g)
    u = build_u(fd, j)
    if level is None:
        return WeylSection.function(ctx, u) + omega_ybar(g, j)
    hval = hbar_at(level)
    return WeylSection.function(ctx, u.evaluate(level), NO_TRUNC, hval) + omega_ybar(g, j, hbar=hval)


def u_flat_section(fd: FedosovData, j: int, max_y: int, level: int | None = None) -> FlatSection:
    """Flat section of ``u_j`` reconstructed from its y-free part ``u_j + omega ybar``."""
    sec = reconstruct_from_antiholomorphic(fd.geometry, u_seed(fd, j, level), max_y)
    exact = sec.max_ydeg() < max_y
    return FlatSection(sec.with_trunc(NO_TRUNC) if exact else sec, max_y, "y", exact, "u", 1, build_u(fd, j))


def level_holomorphic(lv: LevelData, f: RationalFn, max_y: int) -> FlatSection:
    return holomorphic_flat_section(lv.geometry, f, max_y, lv.hbar)


def level_u(lv: LevelData, j: int, max_y: int) -> FlatSection:
    return u_flat_section(lv.fd, j, max_y, lv.k)


def evaluate_flat(fs: FlatSection, level: int) -> FlatSection:
    """Evaluate a formal flat section at hbar = 1/level.

    A term of Fedosov degree ``m`` with hbar-power ``h`` has fibre degree ``m - 2h``;
    after evaluation only the fibre degrees that are complete in every hbar order
    are kept, so the result is exact through fibre degree ``max_deg - 2*max_h``.
    """
    sec = evaluate_hbar(fs.section, level)
    if fs.exact:
        return FlatSection(sec.with_trunc(NO_TRUNC), fs.max_deg, "y", True, fs.provenance, fs.ybar_bound, fs.source)
    hmax = fs.section.max_h()
    keep = fs.max_deg - 2 * hmax
    sec = sec.filter(lambda k: k.fiber_degree <= keep).with_trunc(Trunc())
    out = FlatSection(sec, keep, "fiber", False, fs.provenance, fs.ybar_bound, fs.source)
    return out


def star_flat(a: FlatSection, b: FlatSection, trunc: Trunc | None = None) -> FlatSection:
    """Product of flat sections; the ybar bound of the product is the sum of the bounds."""
    sec = star(a.section, b.section, trunc)
    bound = None
    if a.ybar_bound is not None and b.ybar_bound is not None:
        bound = a.ybar_bound + b.ybar_bound
    exact = a.exact and b.exact
    if exact:
        max_deg = max(a.max_deg, b.max_deg)
    elif a.grading == "fedosov":
        max_deg = min(a.max_deg, b.max_deg)
    else:
        # y-degree truncation loses the ybar-degree of the right factor
        bb = b.section.max_ybdeg()
        max_deg = min(a.max_deg - bb, b.max_deg)
    prov = "product" if a.provenance in STRUCTURAL and b.provenance in STRUCTURAL else "function"
    return FlatSection(sec.with_trunc(NO_TRUNC) if exact else sec, max_deg, a.grading, exact, prov, bound, None)


STRUCTURAL = ("holomorphic", "u", "product")


def is_flat(fd, section: WeylSection, through: int, grading: str = "fedosov") -> WeylSection:
    """Return ``D(section)`` restricted to degrees ``<= through`` (zero when flat)."""
    if grading == "fedosov":
        t = Trunc(max_deg=through)
    else:
        t = Trunc(max_y=through)
    return fd.connection(section.with_trunc(NO_TRUNC), trunc=t) if isinstance(fd, FedosovData) else fd.connection(
        section.with_trunc(NO_TRUNC), trunc=t
    )


def star_of_functions(fd: FedosovData, f, g, order: int) -> HPoly:
    """Symbol of ``O_f * O_g`` through hbar-order ``order``."""
    T = 2 * order
    of = flat_section(fd, f, T)
    og = flat_section(fd, g, T)
    prod = star(of.section, og.section, trunc=Trunc(max_deg=T))
    return symbol(prod).truncate(order)


@dataclass
class QuantizabilityReport:
    verdict: str
    bound: int
    tested_through: int
    detail: str = ""

    def __str__(self) -> str:
        if self.verdict == "unbounded_within_test":
            return f"unbounded_within_test (ybar-degree {self.bound} at degree {self.tested_through})"
        return f"{self.verdict}({self.bound}) tested through degree {self.tested_through}"


def quantizability_check(fs: FlatSection, smaller: FlatSection | None = None) -> QuantizabilityReport:
    """Classify the ybar-degree behaviour of a flat section.

    ``exact_bound`` is claimed only when the bound is proven: the section is an
    exact polynomial, or it is built from holomorphic functions and the ``u_j``.
    Otherwise the observed bound is compared with a lower truncation ``smaller``
    to decide between ``bounded_by`` and ``unbounded_within_test``.
    """
    b = fs.ybar_degree()
    if fs.exact:
        return QuantizabilityReport("exact_bound", b, fs.max_deg, "finite polynomial section")
    if fs.provenance in STRUCTURAL and fs.ybar_bound is not None:
        if b > fs.ybar_bound:
            raise FlatSectionError(f"observed ybar-degree {b} exceeds the structural bound {fs.ybar_bound}")
        return QuantizabilityReport("exact_bound", fs.ybar_bound, fs.max_deg, f"built from {fs.provenance} generators")
    if smaller is not None:
        if smaller.ybar_degree() < b:
            return QuantizabilityReport("unbounded_within_test", b, fs.max_deg, "ybar-degree grows with the truncation")
        return QuantizabilityReport("bounded_by", b, fs.max_deg, "stable under a larger truncation")
    cap = fs.max_deg
    if b >= cap:
        return QuantizabilityReport("unbounded_within_test", b, fs.max_deg, "ybar-degree reaches the truncation")
    return QuantizabilityReport("bounded_by", b, fs.max_deg)


def graded_symbol_psi(section: WeylSection, g: ChartGeometry, N: int) -> WeylSection:
    """Top symbol in ``Sym^N`` of the holomorphic tangent bundle.

    The y-free, form-free part of ybar-degree ``N`` is contracted with the
    inverse pairing, ``ybar^l -> sum_p omega_inv[p][l] xi_p``; the result is a
    polynomial in ``xi`` returned as a section in the variables ``y`` (``y^p``
    standing for ``xi_p = d/dy^p``).  The normalisation sends the top part of
    ``O_{u_j1} * ... * O_{u_jN}`` to ``xi_j1 ... xi_jN``.
    """
    ctx = WeylContext.of(g)
    n = g.n
    zero = (0,) * n
    top = section.filter(lambda k: not k.dz and not k.dzb and not any(k.y) and k.ybdeg == N and k.h == 0)
    out = WeylSection.zero(ctx, NO_TRUNC, section.hbar)
    images = []
    for l in range(n):
        terms = {}
        for p in range(n):
            c = g.omega_inv[p][l]
            if c:
                terms[TermIndex((), (), tuple(1 if a == p else 0 for a in range(n)), zero, 0)] = c
        images.append(WeylSection(ctx, terms, NO_TRUNC, section.hbar))
    for key, c in top.terms.items():
        term = WeylSection.function(ctx, c, NO_TRUNC, section.hbar)
        for l in range(n):
            for _ in range(key.yb[l]):
                term = fiber_mul(term, images[l])
        out = out + term
    return out


def psi_is_holomorphic(psi: WeylSection) -> bool:
    return all(v.is_holomorphic() for v in psi.terms.values())


def poisson_bracket_cotangent(a: WeylSection, b: WeylSection) -> WeylSection:
    """Canonical bracket on the cotangent bundle, ``{xi_i, z^j} = delta_ij``.

    Polynomials in ``xi`` are represented in the fibre variables ``y``.
    """
    n = a.n
    ctx = a.ctx
    out = WeylSection.zero(ctx, NO_TRUNC, a.hbar)

    def dxi(s: WeylSection, i: int) -> WeylSection:
        terms = {}
        for k, v in s.terms.items():
            if k.y[i]:
                ny = tuple(e - (1 if a_ == i else 0) for a_, e in enumerate(k.y))
                terms[k._replace(y=ny)] = v.scale(gauss(k.y[i]))
        return WeylSection(ctx, terms, NO_TRUNC, s.hbar)

    def dz(s: WeylSection, i: int) -> WeylSection:
        return WeylSection(ctx, {k: v.dz(i) for k, v in s.terms.items()}, NO_TRUNC, s.hbar)

    for i in range(n):
        out = out + fiber_mul(dxi(a, i), dz(b, i)) - fiber_mul(dz(a, i), dxi(b, i))
    return out


def ratio_if_proportional(a: WeylSection, b: WeylSection):
    """Scalar ``c`` with ``a == c * b`` (None if not proportional or both zero)."""
    if b.is_zero():
        return None if not a.is_zero() else "zero"
    key = next(iter(b.terms))
    c = None
    va = a.coeff(key)
    vb = b.terms[key]
    ratio = va / vb
    if not ratio.is_constant():
        return None
    c = ratio.constant_value()
    return c if a == b.scale(c) else None


@dataclass
class TDOReport:
    filtration_ok: bool
    poisson_constant: object
    poisson_ok: bool
    psi_u_ok: bool
    cocycle_ok: bool | None
    karabegov_ok: bool | None
    details: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        flags = [self.filtration_ok, self.poisson_ok, self.psi_u_ok, self.cocycle_ok, self.karabegov_ok]
        return all(f is not False for f in flags)


def tdo_samples(lv: LevelData, max_y: int = 4) -> dict[str, FlatSection]:
    """Five level-k quantizable sections built from the generators (ten pairs)."""
    z = lv.geometry.ring.z(0)
    oz = level_holomorphic(lv, z, max_y)
    oz2 = level_holomorphic(lv, z * z, max_y)
    ou = level_u(lv, 0, max_y)
    return {
        "z": oz,
        "z^2": oz2,
        "u": ou,
        "u*u": star_flat(ou, ou, Trunc(max_y=max_y)),
        "z*u": star_flat(oz, ou, Trunc(max_y=max_y)),
    }


def tdo_checks(lv: LevelData, samples: dict[str, FlatSection] | None = None, max_y: int = 4, cocycle: bool = True, karabegov: bool = True) -> TDOReport:
    """Filtration, Poisson identification through psi, psi(O_u), cocycle and Karabegov checks.

    For each pair of quantizable sections with bounds ``Na``, ``Nb`` the level-k
    bracket ``k[a, b]`` must have ybar-degree at most ``Na + Nb - 1``, and its
    graded symbol in that degree must be ``lam * {psi(a), psi(b)}`` for a single
    constant ``lam`` measured on the first pair with a nonzero Poisson bracket.
    """
    g = lv.geometry
    ctx = WeylContext.of(g)
    if samples is None:
        samples = tdo_samples(lv, max_y)
    names = list(samples)
    details: list = []
    filtration_ok = True
    poisson_ok = True
    lam = None
    k = as_scalar(lv.k)
    for ia in range(len(names)):
        for ib in range(ia + 1, len(names)):
            a, b = samples[names[ia]], samples[names[ib]]
            na, nb = a.ybar_bound, b.ybar_bound
            br = bracket(a.section, b.section, Trunc(max_y=max_y)).scale(k)
            top = na + nb - 1
            deg = br.max_ybdeg() if not br.is_zero() else -1
            f_ok = deg <= top
            filtration_ok &= f_ok
            if top >= 0:
                lhs = graded_symbol_psi(br, g, top)
            else:
                lhs = WeylSection.zero(ctx, NO_TRUNC, br.hbar)
            pb = poisson_bracket_cotangent(graded_symbol_psi(a.section, g, na), graded_symbol_psi(b.section, g, nb))
            if lam is None and not pb.is_zero():
                r = ratio_if_proportional(lhs, pb)
                lam = None if r in (None, "zero") else r
            if pb.is_zero():
                p_ok = lhs.is_zero()
            else:
                p_ok = lam is not None and lhs == pb.scale(lam)
            poisson_ok &= p_ok
            details.append({"pair": (names[ia], names[ib]), "bounds": (na, nb), "bracket_ybar_degree": deg, "filtration": f_ok, "poisson": p_ok})
    psi_u_ok = True
    for j in range(g.n):
        psi = graded_symbol_psi(level_u(lv, j, max_y).section, g, 1)
        unit = tuple(1 if t == j else 0 for t in range(g.n))
        psi_u_ok &= psi == WeylSection.monomial(ctx, 1, y=unit, hbar=psi.hbar)
    cocycle_ok = None
    if cocycle and g.name == "cp1":
        res = cp1_cocycle_check(max_y, lv.k)
        cocycle_ok = all(v for key, v in res.items() if key != "difference")
        details.append({"cocycle": {key: (str(v) if key == "difference" else v) for key, v in res.items()}})
    karabegov_ok = karabegov_check(g) if karabegov else None
    return TDOReport(filtration_ok, lam, poisson_ok and lam is not None, psi_u_ok, cocycle_ok, karabegov_ok, details)


def karabegov_check(g: ChartGeometry, max_y: int = 3, kinds=None) -> bool:
    """Measured central curvature over hbar equals ``(1/hbar)(omega - alpha)`` for each alpha."""
    from .fedosov import measured_karabegov_form, solve_fedosov
    from .geometry import ALPHA_KINDS

    ok = True
    for kind in kinds or ALPHA_KINDS:
        fd = solve_fedosov(g, kind, max_y)
        ok &= same_forms(measured_karabegov_form(fd), fd.karabegov_form(), g)
    return ok


def same_forms(a: dict, b: dict, g: ChartGeometry) -> bool:
    """Equality of ``{hbar power: matrix}`` forms, missing powers counting as zero."""
    zero = g.ring.zero()
    for h in set(a) | set(b):
        for i in range(g.n):
            for j in range(g.n):
                va = a[h][i][j] if h in a else zero
                vb = b[h][i][j] if h in b else zero
                if va != vb:
                    return False
    return True


def holomorphic_form_d_closed(a: list[RationalFn]) -> bool:
    """``∂(sum a_i dz^i) = 0``, i.e. ``d_j a_i = d_i a_j`` for all pairs."""
    n = len(a)
    return all(a[i].dz(j) == a[j].dz(i) for i in range(n) for j in range(i + 1, n))


def cp1_cocycle_check(max_y: int = 4, level: int | None = None) -> dict:
    """Two-chart check on the sphere with the charts z and w = 1/z.

    The difference of the potential derivatives on the overlap is
    ``d(rho_0 - rho_1)``; it must be a closed holomorphic 1-form, and the
    difference of the corresponding flat sections must be the flat section of
    that holomorphic function.
    """
    from .geometry import cp1

    g = cp1()
    d0 = g.d_rho[0]
    d1 = cp1_second_chart_d_rho()
    a01 = d0 - d1
    out = {
        "difference": a01,
        "dbar_closed": not a01.dzb(0),
        "d_closed": holomorphic_form_d_closed([a01]),
        "omega_from_chart1": d1.dzb(0) == g.omega[0][0],
    }
    ctx = WeylContext.of(g)
    hval = None if level is None else hbar_at(level)
    seed0 = WeylSection.function(ctx, d0, NO_TRUNC, hval) + omega_ybar(g, 0, hbar=hval)
    seed1 = WeylSection.function(ctx, d1, NO_TRUNC, hval) + omega_ybar(g, 0, hbar=hval)
    o0 = reconstruct_from_antiholomorphic(g, seed0, max_y)
    o1 = reconstruct_from_antiholomorphic(g, seed1, max_y)
    ohol = holomorphic_flat_section(g, a01, max_y, hval).section
    out["flat_difference_is_holomorphic_section"] = (o0 - o1) == ohol
    out["ybar_free_difference"] = (o0 - o1).max_ybdeg() == 0
    return out
