"""Invariant suites run by ``kquant check``.

Every check returns a :class:`CheckResult`; exceptions inside a check are caught
and reported as failures with the message as payload.  Random inputs come from
``random.Random(seed)`` so a run is reproducible from the printed seed.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from typing import Callable

from .coeffs import hbar_at
from .fedosov import (
    FedosovData,
    measured_karabegov_form,
    residual,
    trace_pattern,
)
from .flatsections import (
    flat_section,
    holomorphic_flat_section,
    quantizability_check,
    same_forms,
    star_of_functions,
    tdo_checks,
    u_flat_section,
)
from .fock import (
    bf_act,
    beta,
    coherent_section,
    d_beta_expected,
    fock_connection,
    quantize_to_diffop,
    random_fock_section,
    star_identity_sides,
)
from .geometry import ChartGeometry, check_kahler
from .weyl import (
    NO_TRUNC,
    Trunc,
    WeylContext,
    WeylSection,
    bracket,
    curvature_section,
    delta,
    delta10,
    delta10_inv,
    delta_inv,
    evaluate_hbar,
    fiber_mul,
    hbar_divide,
    nabla,
    pi_0star,
    random_section,
    star,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    payload: dict | None = None
    elapsed: float = 0.0

    def to_json(self) -> dict:
        doc = {"name": self.name, "status": "pass" if self.passed else "fail", "detail": self.detail}
        if self.payload is not None:
            doc["payload"] = self.payload
        return doc

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}" + (f"  ({self.detail})" if self.detail else "")


@dataclass
class CheckConfig:
    geometry: ChartGeometry
    alpha: str = "zero"
    level: int = 2
    max_y: int = 5
    seed: int = 0
    fedosov: FedosovData | None = None
    extra: dict = field(default_factory=dict)

    def fd(self) -> FedosovData:
        if self.fedosov is None:
            from .fedosov import solve_fedosov

            self.fedosov = solve_fedosov(self.geometry, self.alpha, self.max_y)
        return self.fedosov

    def rng(self, tag: str) -> random.Random:
        return random.Random(f"{self.seed}:{tag}")


def _run(name: str, fn: Callable[[], object]) -> CheckResult:
    t0 = time.perf_counter()
    try:
        out = fn()
    except Exception as exc:  # noqa: BLE001 - a crashing check is a failed check
        return CheckResult(name, False, f"{type(exc).__name__}: {exc}", {"error": str(exc)}, time.perf_counter() - t0)
    if isinstance(out, tuple):
        ok, detail, payload = (list(out) + [None, None])[:3]
    else:
        ok, detail, payload = bool(out), "", None
    return CheckResult(name, bool(ok), detail or "", payload, time.perf_counter() - t0)


def _diff_payload(diff: WeylSection) -> dict:
    return {"difference": str(diff)}


# geometry -----------------------------------------------------------------------


def geometry_checks(cfg: CheckConfig) -> list[CheckResult]:
    g = cfg.geometry
    n = g.n

    def inverse():
        return all(
            sum((g.omega[i][j] * g.omega_inv[k][j] for j in range(n)), g.ring.zero()) == (g.ring.one() if i == k else g.ring.zero())
            for i in range(n)
            for k in range(n)
        )

    def potential():
        return all(g.d_rho[i].dzb(j) == g.omega[i][j] for i in range(n) for j in range(n))

    def ricci_potential():
        return all(g.d_rho1[i].dzb(j) == g.ricci[i][j] for i in range(n) for j in range(n))

    def trace_identity():
        return all(
            g.d_rho1[i] + sum((g.omega[k][j].dz(i) * g.omega_inv[k][j] for k in range(n) for j in range(n)), g.ring.zero()) == g.ring.zero()
            for i in range(n)
        )

    def alpha_potential():
        from .geometry import check_alpha

        check_alpha(g, g.alpha_form("berezin_toeplitz"))
        check_alpha(g, g.alpha_form("hbar_omega"))
        return True

    return [
        _run("geometry.kahler", lambda: check_kahler(g) is None),
        _run("geometry.inverse_pairing", inverse),
        _run("geometry.potential", potential),
        _run("geometry.ricci_potential", ricci_potential),
        _run("geometry.trace_identity", trace_identity),
        _run("geometry.alpha_potentials", alpha_potential),
    ]


# weyl ---------------------------------------------------------------------------


def weyl_checks(cfg: CheckConfig, trials: int = 4) -> list[CheckResult]:
    g = cfg.geometry
    ctx = WeylContext.of(g)
    rng = cfg.rng("weyl")
    forms = [(0, 0), (1, 0), (0, 1)]
    samples = [
        [random_section(ctx, rng, 2, 2, 1, forms, 3) for _ in range(3)]
        for _ in range(trials)
    ]

    def assoc():
        for a, b, c in samples:
            lhs = star(star(a, b), c)
            rhs = star(a, star(b, c))
            if lhs != rhs:
                return False, "associativity", _diff_payload(lhs - rhs)
        return True

    def homotopy():
        for a, _, _ in samples:
            for d, dinv, proj in (
                (delta10, delta10_inv, pi_0star),
                (delta, delta_inv, lambda s: s.filter(lambda k: not k.form_degree and not k.fiber_degree)),
            ):
                lhs = a - proj(a)
                rhs = d(dinv(a)) + dinv(d(a))
                if lhs != rhs:
                    return False, "homotopy", _diff_payload(lhs - rhs)
        return True

    def delta_sq():
        return all(delta(delta(a)).is_zero() for a, _, _ in samples)

    def nabla_derivation():
        for a, b, _ in samples:
            sign_b = a.parity_part(False) - a.parity_part(True)
            lhs = nabla(star(a, b), g)
            rhs = star(nabla(a, g), b) + star(sign_b, nabla(b, g))
            if lhs != rhs:
                return False, "Leibniz", _diff_payload(lhs - rhs)
        return True

    def nabla_sq():
        R = curvature_section(g)
        for a, _, _ in samples:
            lhs = nabla(nabla(a, g), g)
            rhs = hbar_divide(bracket(R, a))
            if lhs != rhs:
                return False, "curvature", _diff_payload(lhs - rhs)
        return True

    def evaluation():
        for a, b, _ in samples:
            lhs = evaluate_hbar(star(a, b), cfg.level)
            rhs = star(evaluate_hbar(a, cfg.level), evaluate_hbar(b, cfg.level))
            if lhs != rhs:
                return False, "evaluation", _diff_payload(lhs - rhs)
        return True

    return [
        _run("weyl.associativity", assoc),
        _run("weyl.homotopy", homotopy),
        _run("weyl.delta_squared", delta_sq),
        _run("weyl.nabla_derivation", nabla_derivation),
        _run("weyl.nabla_squared", nabla_sq),
        _run("weyl.evaluation_homomorphism", evaluation),
    ]


# fedosov --------------------------------------------------------------------------


def fedosov_checks(cfg: CheckConfig) -> list[CheckResult]:
    g = cfg.geometry
    ctx = WeylContext.of(g)

    def res():
        r = residual(cfg.fd())
        return r.is_zero(), f"through y-degree {cfg.fd().max_y - 1}", None if r.is_zero() else _diff_payload(r)

    def gauge():
        fd = cfg.fd()
        I = fd.I
        ok = delta10_inv(I).is_zero() and pi_0star(I).is_zero()
        ok &= all(not k.dz and len(k.dzb) == 1 and k.ybdeg <= 1 for k in I.terms)
        return ok

    def d_squared():
        fd = cfg.fd()
        top = fd.max_y - 2
        t = Trunc(max_y=top, max_ybar=2)
        gens = [WeylSection.y(ctx, i) for i in range(g.n)] + [WeylSection.ybar(ctx, j) for j in range(g.n)]
        gens.append(WeylSection.function(ctx, g.ring.z(0) * g.ring.zb(0)))
        for a in gens:
            dd = fd.connection(fd.connection(a, Trunc(max_y=top + 1, max_ybar=2)), t)
            if not dd.is_zero():
                return False, str(a), _diff_payload(dd)
        return True

    def karabegov():
        fd = cfg.fd()
        return same_forms(measured_karabegov_form(fd), fd.karabegov_form(), g)

    def evaluation():
        fd = cfg.fd()
        lv = fd.at_level(cfg.level)
        rng = cfg.rng("fedosov-eval")
        t = Trunc(max_y=fd.max_y - 2, max_ybar=2)
        for _ in range(3):
            a = random_section(ctx, rng, 2, 1, 1, [(0, 0), (0, 1)], 3)
            lhs = evaluate_hbar(fd.connection(a, t), cfg.level)
            rhs = lv.connection(evaluate_hbar(a, cfg.level), Trunc(t.max_y, t.max_ybar))
            if lhs != rhs:
                return False, "", _diff_payload(lhs - rhs)
        return True

    out = [
        _run("fedosov.residual", res),
        _run("fedosov.gauge", gauge),
        _run("fedosov.d_squared", d_squared),
        _run("fedosov.karabegov", karabegov),
        _run("fedosov.evaluation", evaluation),
    ]
    if cfg.alpha == "berezin_toeplitz":

        def tp():
            for n_deg, jn, tr in trace_pattern(cfg.fd()):
                if jn != tr:
                    return False, f"degree {n_deg}", _diff_payload(jn - tr)
            return True

        out.append(_run("fedosov.trace_pattern", tp))
    return out


# flat sections and star products ---------------------------------------------------


def flat_checks(cfg: CheckConfig) -> list[CheckResult]:
    g = cfg.geometry
    z, zb = g.ring.z(0), g.ring.zb(0)
    T = min(cfg.max_y + 1, 5)

    def symbols():
        fd = cfg.fd()
        for f in (z, zb, z * zb):
            fs = flat_section(fd, f, T)
            from .weyl import symbol

            if symbol(fs.section) != f:
                return False, f"symbol of O_{f}"
            d = fd.connection(fs.section.with_trunc(NO_TRUNC), Trunc(max_deg=T - 1))
            if not d.is_zero():
                return False, f"O_{f} not flat", _diff_payload(d)
        return True

    def holomorphic():
        fd = cfg.fd()
        for f in (z, z * z):
            fs = holomorphic_flat_section(g, f, fd.max_y)
            if fs.ybar_degree() != 0:
                return False
            other = flat_section(fd, f, T).section.restrict(Trunc(max_deg=T))
            if other != fs.section.restrict(Trunc(max_deg=T)):
                return False, "holomorphic prolongation differs from the iteration"
        return True

    def u_generators():
        fd = cfg.fd()
        for j in range(g.n):
            fs = u_flat_section(fd, j, fd.max_y)
            if fs.ybar_degree() != 1:
                return False, f"ybar-degree of O_u{j + 1} is {fs.ybar_degree()}"
            from .flatsections import u_seed

            if pi_0star(fs.section) != u_seed(fd, j):
                return False, "antiholomorphic part"
            d = fd.connection(fs.section, Trunc(max_y=fd.max_y - 1))
            if not d.is_zero():
                return False, "O_u not flat", _diff_payload(d)
            if quantizability_check(fs).verdict != "exact_bound":
                return False, "verdict"
        return True

    return [
        _run("flat.symbols_and_flatness", symbols),
        _run("flat.holomorphic", holomorphic),
        _run("flat.u_generators", u_generators),
    ]


def poisson_bracket(g: ChartGeometry, f, h):
    n = g.n
    out = g.ring.zero()
    for i in range(n):
        for j in range(n):
            if g.omega_inv[i][j]:
                out = out + g.omega_inv[i][j] * (f.dz(i) * h.dzb(j) - h.dz(i) * f.dzb(j))
    return out


def star_checks(cfg: CheckConfig) -> list[CheckResult]:
    g = cfg.geometry
    z, zb = g.ring.z(0), g.ring.zb(0)
    one = g.ring.one()
    fns = [one, z, zb, z * z, z * zb]

    def unit():
        fd = cfg.fd()
        return all(star_of_functions(fd, f, one, 2) == f and star_of_functions(fd, one, f, 2) == f for f in fns)

    def poisson():
        fd = cfg.fd()
        lam = None
        for a in range(len(fns)):
            for b in range(a + 1, len(fns)):
                f, h = fns[a], fns[b]
                c1 = star_of_functions(fd, f, h, 1)[1] - star_of_functions(fd, h, f, 1)[1]
                pb = poisson_bracket(g, f, h)
                if not pb:
                    if c1:
                        return False, f"nonzero commutator with zero bracket for {f}, {h}"
                    continue
                r = c1 / pb
                if not r.is_constant():
                    return False, f"ratio {r} not constant"
                if lam is None:
                    lam = r.constant_value()
                elif r.constant_value() != lam:
                    return False, "constant differs between pairs"
        return lam is not None, f"lambda = {lam}"

    return [_run("star.unit", unit), _run("star.poisson_constant", poisson)]


# fock ---------------------------------------------------------------------------


def fock_checks(cfg: CheckConfig, trials: int = 3) -> list[CheckResult]:
    g = cfg.geometry
    fd = cfg.fd()
    lv = fd.at_level(cfg.level)
    rng = cfg.rng("fock")
    top = min(fd.max_y, 5)

    def module():
        for _ in range(trials):
            A = random_section(lv.ctx, rng, 2, 2, forms=[(0, 0), (0, 1), (1, 0)], hbar=lv.hbar)
            B = random_section(lv.ctx, rng, 2, 2, forms=[(0, 0), (0, 1)], hbar=lv.hbar)
            s = random_fock_section(lv, rng, 3, forms=[(0, 0), (1, 0), (0, 1)])
            lhs = bf_act(star(A, B), s)
            rhs = bf_act(A, bf_act(B, s))
            if lhs != rhs:
                return False, "", _diff_payload(lhs - rhs)
        return True

    def d_squared():
        # D^2 acts as a central 2-form; it vanishes exactly for the Berezin-Toeplitz alpha
        unit = WeylSection.function(lv.ctx, g.ring.one(), NO_TRUNC, lv.hbar)
        curv = fock_connection(lv, fock_connection(lv, unit, Trunc(max_y=top)), Trunc(max_y=top - 1))
        if any(any(k.y) or any(k.yb) for k in curv.terms):
            return False, "D^2 of the vacuum is not a function-valued form", _diff_payload(curv)
        for _ in range(trials):
            s = random_fock_section(lv, rng, 3)
            dd = fock_connection(lv, fock_connection(lv, s, Trunc(max_y=top)), Trunc(max_y=top - 1))
            want = fiber_mul(curv, s, Trunc(max_y=top - 1))
            if dd != want:
                return False, "", _diff_payload(dd - want)
        expect_flat = cfg.alpha == "berezin_toeplitz" or (g.is_flat_metric and cfg.alpha == "zero")
        if expect_flat != curv.is_zero():
            return False, f"D^2 = {curv}", _diff_payload(curv)
        return True, "D^2 = 0" if curv.is_zero() else f"D^2 = {curv} (central)"

    def compat():
        T = Trunc(max_y=3)
        big = Trunc(max_y=6)
        for _ in range(trials):
            s = random_fock_section(lv, rng, 3)
            a = random_section(lv.ctx, rng, 2, 1, forms=[(0, 0), (1, 0)], hbar=lv.hbar)
            lhs = fock_connection(lv, bf_act(a, s), T)
            ds = fock_connection(lv, s, big)
            rhs = bf_act(lv.connection(a, big), s, T) + bf_act(a.parity_part(False), ds, T) - bf_act(a.parity_part(True), ds, T)
            if lhs != rhs:
                return False, "", _diff_payload(lhs - rhs)
        return True

    def d_beta():
        b = beta(g, top, lv.hbar)
        got = lv.connection(b, Trunc(max_y=top - 1))
        want = d_beta_expected(lv, top - 1)
        return got == want, "", None if got == want else _diff_payload(got - want)

    out = [
        _run("fock.module_axiom", module),
        _run("fock.d_squared", d_squared),
        _run("fock.compatibility", compat),
        _run("fock.d_beta", d_beta),
    ]
    if cfg.alpha == "berezin_toeplitz":

        def coherent():
            s = coherent_section(lv, top)
            d = fock_connection(lv, s, Trunc(max_y=top - 1))
            return d.is_zero(), f"through y-degree {top - 1}", None if d.is_zero() else _diff_payload(d)

        def star_identity():
            lhs, rhs = star_identity_sides(lv, top)
            return lhs == rhs

        def quantize_u():
            k = cfg.level
            for j in range(g.n):
                fs = u_flat_section(fd, j, 3, k)
                op = quantize_to_diffop(lv, fs.section, 3, 1)
                e = tuple(1 if t == j else 0 for t in range(g.n))
                from .fock import DiffOperator

                want = DiffOperator.partial(g.ring, j).scale(-hbar_at(k))
                if op != want:
                    return False, f"quantize(O_u{j + 1}) = {op}"
                del e
            return True, f"-(1/{k}) d"

        out += [
            _run("fock.coherent_flatness", coherent),
            _run("fock.star_identity", star_identity),
            _run("fock.quantize_u", quantize_u),
        ]
    return out


# tdo and moment ---------------------------------------------------------------------


def tdo_suite(cfg: CheckConfig) -> list[CheckResult]:
    lv = cfg.fd().at_level(cfg.level)
    rep = tdo_checks(lv, max_y=4)
    return [
        CheckResult("tdo.filtration", rep.filtration_ok, payload={"pairs": [str(d) for d in rep.details]}),
        CheckResult("tdo.poisson", rep.poisson_ok, f"lambda = {rep.poisson_constant}"),
        CheckResult("tdo.psi_u", rep.psi_u_ok),
        CheckResult("tdo.cocycle", rep.cocycle_ok is not False, "skipped (cp1 only)" if rep.cocycle_ok is None else ""),
        CheckResult("tdo.karabegov", bool(rep.karabegov_ok)),
    ]


def available_symmetries(g: ChartGeometry) -> list[str]:
    if g.is_flat_metric:
        names = [f"translation:{i + 1}" for i in range(g.n)]
        if g.n == 1:
            names.insert(0, "rotation")
        return names
    if g.n == 1 and g.name in ("disc", "cp1"):
        return ["rotation"]
    return []


def moment_suite(cfg: CheckConfig) -> list[CheckResult]:
    from .moment import (
        build_moment,
        complete_to_flat,
        e_S,
        inner_derivation_target,
        lie_derivative,
        solve_moment_linear,
        star_mw,
        symmetry_from_spec,
    )

    g = cfg.geometry
    fd = cfg.fd()
    ctx = WeylContext.of(g)
    out = []
    for name in available_symmetries(g):
        sym = symmetry_from_spec(g, name)

        def identity(sym=sym):
            ms = build_moment(fd, sym)
            top = 4 if ms.max_y is None else min(4, fd.max_y - 2)
            t = Trunc(max_y=top, max_ybar=top)
            for a in monomial_basis(ctx, top):
                lhs = inner_derivation_target(sym, fd, a, t)
                rhs = hbar_divide(bracket(ms.section, a, Trunc(top, top, None, None))).restrict(t)
                if lhs != rhs:
                    return False, str(a), _diff_payload(lhs - rhs)
            return True

        def linear(sym=sym):
            ms = build_moment(fd, sym)
            lin = solve_moment_linear(fd, sym)
            t = Trunc(max_y=3, max_ybar=3)
            diff = (lin.restrict(t) - ms.section.restrict(t)).filter(lambda k: k.fiber_degree > 0)
            return diff.is_zero(), "", None if diff.is_zero() else _diff_payload(diff)

        def completion(sym=sym):
            ms = complete_to_flat(fd, build_moment(fd, sym))
            if ms.completion_note:
                return False, ms.completion_note
            s = ms.completed
            through = 4 if ms.max_y is None else fd.max_y - 1
            d = fd.connection(s, Trunc(max_y=through))
            ok = d.is_zero() and s.max_ybdeg() <= 1
            return ok, f"symbol {ms.correction}", None if ok else _diff_payload(d)

        def lie(sym=sym):
            ms = complete_to_flat(fd, build_moment(fd, sym))
            T = 5
            for f in (g.ring.z(0), g.ring.zb(0), g.ring.z(0) * g.ring.zb(0)):
                fs = flat_section(fd, f, T)
                t = Trunc(max_deg=T - 2)
                lhs = hbar_divide(bracket(ms.completed.with_trunc(NO_TRUNC), fs.section, Trunc(max_deg=T))).restrict(t)
                rhs = lie_derivative(sym, fs.section).restrict(t)
                if lhs != rhs:
                    return False, f"f = {f}", _diff_payload(lhs - rhs)
            return True

        def invariance(sym=sym):
            t = Trunc(max_y=3, max_ybar=2)
            gens = [WeylSection.y(ctx, i) for i in range(g.n)] + [WeylSection.ybar(ctx, j) for j in range(g.n)]
            for a in gens:
                lhs = lie_derivative(sym, fd.connection(a, Trunc(max_y=4, max_ybar=2))).restrict(t)
                rhs = fd.connection(lie_derivative(sym, a), t)
                if lhs != rhs:
                    return False, str(a), _diff_payload(lhs - rhs)
            return True

        out += [
            _run(f"moment.{name}.bracket_identity", identity),
            _run(f"moment.{name}.linear_solve", linear),
            _run(f"moment.{name}.completion", completion),
            _run(f"moment.{name}.lie_derivative", lie),
            _run(f"moment.{name}.invariance", invariance),
        ]
    rng = cfg.rng("intertwiner")

    def intertwiner():
        for _ in range(5):
            a = random_section(ctx, rng, 3, 3, 1, n_terms=3, gaussian=True)
            b = random_section(ctx, rng, 3, 3, 1, n_terms=3)
            lhs = e_S(star_mw(a, b))
            rhs = star(e_S(a), e_S(b))
            if lhs != rhs:
                return False, "", _diff_payload(lhs - rhs)
        return True

    out.append(_run("moment.intertwiner", intertwiner))
    return out


def monomial_basis(ctx: WeylContext, top: int, forms: bool = True) -> list[WeylSection]:
    """Monomials ``y^a ybar^b`` with ``|a| + |b| <= top`` (and ``dz``/``dzbar`` times low ones)."""
    import itertools

    n = ctx.n
    out = []
    for d in range(top + 1):
        for ya in itertools.product(range(d + 1), repeat=n):
            for yb in itertools.product(range(d + 1), repeat=n):
                if sum(ya) + sum(yb) == d:
                    out.append(WeylSection.monomial(ctx, 1, y=ya, yb=yb))
    if forms:
        z = ctx.ring.z(0)
        for i in range(n):
            out.append(WeylSection.monomial(ctx, z, dz=(i,), y=(1,) + (0,) * (n - 1), yb=(0,) * n))
            out.append(WeylSection.monomial(ctx, 1, dzb=(i,), y=(0,) * n, yb=(1,) + (0,) * (n - 1)))
    return out


SUITES: dict[str, Callable[[CheckConfig], list[CheckResult]]] = {
    "geometry": geometry_checks,
    "weyl": weyl_checks,
    "fedosov": fedosov_checks,
    "flat": flat_checks,
    "star": star_checks,
    "fock": fock_checks,
    "tdo": tdo_suite,
    "moment": moment_suite,
}


def run_suites(cfg: CheckConfig, names: list[str]) -> list[CheckResult]:
    if names == ["all"]:
        names = list(SUITES)
    out: list[CheckResult] = []
    for name in names:
        if name not in SUITES:
            raise KeyError(name)
        out.extend(SUITES[name](cfg))
    return out
