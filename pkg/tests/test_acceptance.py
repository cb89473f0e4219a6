"""Acceptance criteria A1-A10; every test prints one PASS/FAIL line."""

import itertools
import random
import time

import pytest
import sympy as sp

from kquant.checks import monomial_basis, poisson_bracket
from kquant.coeffs import HPoly, gauss
from kquant.fedosov import residual, solve_fedosov, trace_pattern
from kquant.flatsections import (
    FlatSection,
    cp1_cocycle_check,
    flat_section,
    karabegov_check,
    level_holomorphic,
    level_u,
    quantizability_check,
    star_flat,
    tdo_checks,
    u_flat_section,
    u_seed,
)
from kquant.fock import (
    DiffOperator,
    bf_act,
    beta,
    coherent_section,
    d_beta_expected,
    fock_connection,
    quantize_to_diffop,
    random_fock_section,
    star_identity_sides,
)
from kquant.geometry import geometry_from_spec
from kquant.moment import (
    build_moment,
    complete_to_flat,
    e_S,
    inner_derivation_target,
    lie_derivative,
    star_mw,
    symmetry_from_spec,
)
from kquant.weyl import (
    NO_TRUNC,
    Trunc,
    WeylContext,
    bracket,
    evaluate_hbar,
    hbar_divide,
    omega_ybar,
    pi_0star,
    random_section,
    star,
    symbol,
)

GEOMETRIES = ["flat:1", "flat:2", "cp1", "disc"]
ALPHAS = ["zero", "hbar_omega", "berezin_toeplitz"]


class Verdict:
    """Collects failures for one criterion and prints the summary line."""

    def __init__(self, capsys, name, budget):
        self.capsys = capsys
        self.name = name
        self.budget = budget
        self.failures = []
        self.t0 = time.perf_counter()

    def check(self, ok, what):
        if not ok:
            self.failures.append(what)

    def finish(self, detail=""):
        elapsed = time.perf_counter() - self.t0
        if elapsed >= self.budget:
            self.failures.append(f"runtime {elapsed:.1f}s exceeds {self.budget}s")
        status = "PASS" if not self.failures else "FAIL"
        line = f"{self.name}: {status} ({elapsed:.2f}s){' ' + detail if detail else ''}"
        if self.failures:
            line += " -- " + "; ".join(self.failures[:5])
        with self.capsys.disabled():
            print("\n" + line)
        assert not self.failures, line


@pytest.mark.parametrize("name", GEOMETRIES)
def test_a1_fedosov_residual(capsys, name):
    v = Verdict(capsys, f"A1 [{name}] Fedosov residual zero through y-degree 4", 60)
    g = geometry_from_spec(name)
    for alpha in ALPHAS:
        fd = solve_fedosov(g, alpha, 5, verify=False)
        res = residual(fd)
        v.check(res.is_zero(), f"alpha={alpha}: residual {res}")
    v.finish()


def test_a2_star_product_axioms(capsys):
    v = Verdict(capsys, "A2 star-product axioms on flat(1)", 30)
    fd = solve_fedosov(geometry_from_spec("flat:1"), "zero", 5)
    ring = fd.geometry.ring
    z, zb, one = ring.z(0), ring.zb(0), ring.one()
    fns = [one, z, zb, z * z, z * zb, zb * zb]
    # on flat space with alpha = 0 these flat sections are finite polynomials
    O = [flat_section(fd, f, 6) for f in fns]
    v.check(all(o.exact for o in O), "flat sections are not exact")
    order = 3

    def sym(a):
        return symbol(a).truncate(order)

    for f, o in zip(fns, O):
        v.check(sym(star(o.section, O[0].section)) == HPoly.of(f), f"{f} * 1")
        v.check(sym(star(O[0].section, o.section)) == HPoly.of(f), f"1 * {f}")
    for a, b, c in itertools.product(range(6), repeat=3):
        lhs = star(star(O[a].section, O[b].section), O[c].section)
        rhs = star(O[a].section, star(O[b].section, O[c].section))
        v.check(sym(lhs) == sym(rhs), f"associativity {fns[a]}, {fns[b]}, {fns[c]}")
    lam = None
    pairs = list(itertools.combinations(range(1, 6), 2))
    for a, b in pairs:
        c1 = symbol(star(O[a].section, O[b].section))[1] - symbol(star(O[b].section, O[a].section))[1]
        pb = poisson_bracket(fd.geometry, fns[a], fns[b])
        if not pb:
            v.check(not c1, f"commutator without bracket for {fns[a]}, {fns[b]}")
            continue
        r = c1 / pb
        v.check(r.is_constant(), f"ratio not constant for {fns[a]}, {fns[b]}")
        if r.is_constant():
            if lam is None:
                lam = r.constant_value()
            v.check(r.constant_value() == lam, f"lambda differs on {fns[a]}, {fns[b]}")
    v.check(len(pairs) == 10 and lam is not None, "no Poisson constant measured")
    v.finish(f"lambda = {lam}")


def test_a3_quantizable_generators(capsys):
    v = Verdict(capsys, "A3 quantizable generators", 60)
    for name in GEOMETRIES:
        g = geometry_from_spec(name)
        for alpha in ("zero", "berezin_toeplitz"):
            fd = solve_fedosov(g, alpha, 5)
            for f in (g.ring.z(0), g.ring.z(g.n - 1) ** 2):
                v.check(flat_section(fd, f, 6).ybar_degree() == 0, f"{name}/{alpha}: O_{f} has ybar terms")
            for j in range(g.n):
                fs = flat_section(fd, u_flat_section(fd, j, 3).source, 6)
                v.check(fs.ybar_degree() == 1, f"{name}/{alpha}: ybar-degree of O_u{j + 1} is {fs.ybar_degree()}")
                v.check(pi_0star(fs.section) == u_seed(fd, j), f"{name}/{alpha}: antiholomorphic part of O_u{j + 1}")
    v.finish()


def test_a4_counterexample(capsys):
    v = Verdict(capsys, "A4 symbol-zero flat section at k = 1 only", 10)
    fd = solve_fedosov(geometry_from_spec("flat:1"), "hbar_omega", 5)
    for k in (1, 2, 5, 10):
        lv = fd.at_level(k)
        s = omega_ybar(fd.geometry, 0, hbar=lv.hbar)
        v.check(not symbol(s), "symbol is not zero")
        flat = lv.connection(s, Trunc(max_y=4)).is_zero()
        v.check(flat == (k == 1), f"k = {k}: flat = {flat}")
    v.finish()


def test_a5_bargmann_fock_module(capsys):
    v = Verdict(capsys, "A5 Fock module axiom, D^2 = 0, compatibility", 120)
    forms = [(0, 0), (0, 1), (1, 0)]
    for name in GEOMETRIES:
        fd = solve_fedosov(geometry_from_spec(name), "berezin_toeplitz", 6)
        for k in (1, 2, 3):
            lv = fd.at_level(k)
            rng = random.Random(f"A5:{name}:{k}")
            for trial in range(20):
                A = random_section(lv.ctx, rng, 2, 2, forms=forms, hbar=lv.hbar, n_terms=3)
                B = random_section(lv.ctx, rng, 2, 2, forms=forms, hbar=lv.hbar, n_terms=3)
                s = random_fock_section(lv, rng, 3, forms=forms)
                s0 = random_fock_section(lv, rng, 3)
                v.check(bf_act(star(A, B), s) == bf_act(A, bf_act(B, s)), f"{name} k={k} #{trial}: module")
                dd = fock_connection(lv, fock_connection(lv, s0, Trunc(max_y=5)), Trunc(max_y=4))
                v.check(dd.is_zero(), f"{name} k={k} #{trial}: D^2")
                T = Trunc(max_y=3)
                Ds0 = fock_connection(lv, s0, Trunc(max_y=6))
                lhs = fock_connection(lv, bf_act(A, s0), T)
                rhs = (
                    bf_act(lv.connection(A, Trunc(max_y=6)), s0, T)
                    + bf_act(A.parity_part(False), Ds0, T)
                    - bf_act(A.parity_part(True), Ds0, T)
                )
                v.check(lhs == rhs, f"{name} k={k} #{trial}: compatibility")
    v.finish("alpha = berezin_toeplitz, 20 inputs x 3 levels x 4 geometries")


def test_a6_coherent_flatness(capsys):
    v = Verdict(capsys, "A6 coherent section and its lemmas", 120)
    for name in ("flat:1", "cp1"):
        fd = solve_fedosov(geometry_from_spec(name), "berezin_toeplitz", 5)
        for _, jn, tr in trace_pattern(fd):
            v.check(jn == tr, f"{name}: J_n trace pattern")
        for k in (1, 2):
            lv = fd.at_level(k)
            d = fock_connection(lv, coherent_section(lv, 5), Trunc(max_y=4))
            v.check(d.is_zero(), f"{name} k={k}: D(e^(k beta)) = {d}")
            got = lv.connection(beta(lv.geometry, 5, lv.hbar), Trunc(max_y=4))
            v.check(got == d_beta_expected(lv, 4), f"{name} k={k}: D(beta)")
            lhs, rhs = star_identity_sides(lv, 5)
            v.check(lhs == rhs, f"{name} k={k}: star identity")
    v.finish()


def test_a7_quantization_map(capsys):
    v = Verdict(capsys, "A7 quantization map on flat(1)", 120)
    fd = solve_fedosov(geometry_from_spec("flat:1"), "berezin_toeplitz", 5)
    ring = fd.geometry.ring
    z = ring.z(0)
    d = DiffOperator.partial(ring, 0)
    for k in (1, 2, 3):
        lv = fd.at_level(k)
        Y = 5
        ozb = evaluate_hbar(flat_section(fd, ring.zb(0), 6).section, k)
        minus = gauss(sp.Rational(-1, k))
        v.check(quantize_to_diffop(lv, ozb, 3, 1) == d.scale(minus), f"k={k}: O_zbar")
        gens = {
            "z": level_holomorphic(lv, z, Y),
            "z^2+1": level_holomorphic(lv, z * z + 1, Y),
            "u": level_u(lv, 0, Y),
        }
        gens["u*u"] = star_flat(gens["u"], gens["u"], Trunc(max_y=Y))
        ops = {}
        for key, fs in gens.items():
            ops[key] = quantize_to_diffop(lv, fs.section, 3, fs.ybar_bound)
        v.check(ops["z"] == DiffOperator.multiplication(z), f"k={k}: holomorphic z")
        v.check(ops["z^2+1"] == DiffOperator.multiplication(z * z + 1), f"k={k}: holomorphic z^2+1")
        pairs = [("z", "u"), ("u", "z"), ("u", "u"), ("z^2+1", "u"), ("u", "z^2+1"), ("z", "u*u")]
        for a, b in pairs:
            prod = star_flat(gens[a], gens[b], Trunc(max_y=Y))
            q = quantize_to_diffop(lv, prod.section, 3, prod.ybar_bound)
            v.check(q == ops[a] @ ops[b], f"k={k}: quantize({a} * {b})")
        # O_z^a * O_u^b quantizes to (-1/k)^b z^a d^b for a + b <= 3
        for a_ in range(4):
            for b_ in range(4 - a_):
                fs = level_holomorphic(lv, ring.one(), Y)
                want = DiffOperator.multiplication(ring.one())
                for _ in range(a_):
                    fs = star_flat(fs, gens["z"], Trunc(max_y=Y))
                    want = want @ DiffOperator.multiplication(z)
                for _ in range(b_):
                    fs = star_flat(fs, gens["u"], Trunc(max_y=Y))
                    want = want @ d.scale(minus)
                q = quantize_to_diffop(lv, fs.section, 3, b_)
                v.check(q == want, f"k={k}: z^{a_} d^{b_}")
    v.finish()


@pytest.mark.parametrize("name", ["cp1", "disc"])
def test_a8_trace_identity(capsys, name):
    v = Verdict(capsys, f"A8 [{name}] Kähler trace identity", 5)
    g = geometry_from_spec(name)
    w = g.omega[0][0]
    v.check(g.d_rho1[0] + w.dz(0) * g.omega_inv[0][0] == g.ring.zero(), "identity with the stored d rho1")
    zz, zzb = sp.symbols("z1 zb1")
    rho1 = -sp.log(w.to_expr())
    expr = sp.diff(rho1, zz) + sp.diff(w.to_expr(), zz) / w.to_expr()
    v.check(sp.simplify(expr) == 0, "identity with rho1 = -log det omega from sympy")
    v.finish()


def test_a9_tdo_structure(capsys):
    v = Verdict(capsys, "A9 TDO structure", 60)
    lv = solve_fedosov(geometry_from_spec("cp1"), "berezin_toeplitz", 5).at_level(2)
    rep = tdo_checks(lv, karabegov=False)
    pairs = [d for d in rep.details if "pair" in d]
    v.check(len(pairs) == 10, f"{len(pairs)} sample pairs")
    v.check(rep.filtration_ok, "filtration drop")
    v.check(rep.poisson_ok, "Poisson identification")
    v.check(rep.psi_u_ok, "psi(O_u) = d/dy")
    cc = cp1_cocycle_check(4, 2)
    v.check(cc["dbar_closed"] and cc["d_closed"], "two-chart cocycle not closed")
    v.check(cc["flat_difference_is_holomorphic_section"], "cocycle flat sections")
    for name in GEOMETRIES:
        v.check(karabegov_check(geometry_from_spec(name), 3, ALPHAS), f"{name}: Karabegov form")
    v.finish(f"lambda = {rep.poisson_constant}")


def test_a10_moment_maps(capsys):
    v = Verdict(capsys, "A10 quantum moment maps on flat(1)", 120)
    fd = solve_fedosov(geometry_from_spec("flat:1"), "zero", 5)
    g = fd.geometry
    ctx = fd.ctx
    top = 4
    t = Trunc(max_y=top, max_ybar=top)
    for name in ("rotation", "translation:1"):
        sym = symmetry_from_spec(g, name)
        ms = complete_to_flat(fd, build_moment(fd, sym))
        for a in monomial_basis(ctx, top):
            lhs = inner_derivation_target(sym, fd, a, t)
            rhs = hbar_divide(bracket(ms.section, a, Trunc(top, top, None, None))).restrict(t)
            v.check(lhs == rhs, f"{name}: bracket identity on {a}")
        sec = ms.completed.with_trunc(NO_TRUNC)
        v.check(fd.connection(sec, NO_TRUNC).is_zero(), f"{name}: completed section not flat")
        rep = quantizability_check(FlatSection(sec, 2 * top, exact=True))
        v.check((rep.verdict, rep.bound) == ("exact_bound", 1), f"{name}: {rep}")
        for f in (g.ring.z(0), g.ring.zb(0), g.ring.z(0) * g.ring.zb(0)):
            fs = flat_section(fd, f, 6)
            v.check(fs.exact, f"O_{f} not exact")
            lhs = hbar_divide(bracket(sec, fs.section))
            v.check(lhs == lie_derivative(sym, fs.section), f"{name}: [s, O_{f}]")
    rng = random.Random("A10")
    wctx = WeylContext.of(g)
    for i in range(20):
        a = random_section(wctx, rng, 3, 3, 1, n_terms=3, gaussian=True)
        b = random_section(wctx, rng, 3, 3, 1, n_terms=3)
        v.check(e_S(star_mw(a, b)) == star(e_S(a), e_S(b)), f"intertwiner pair {i}")
    v.finish()
