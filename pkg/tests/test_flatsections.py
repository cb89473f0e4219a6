"""Flat sections, the induced star product and quantizability."""

import random

import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from kquant.coeffs import HPoly, gauss
from kquant.flatsections import (
    FlatSection,
    cp1_cocycle_check,
    flat_section,
    graded_symbol_psi,
    holomorphic_flat_section,
    level_holomorphic,
    level_u,
    quantizability_check,
    star_flat,
    star_of_functions,
    tdo_checks,
    u_flat_section,
    u_seed,
)
from kquant.weyl import NO_TRUNC, Trunc, WeylSection, fiber_mul, pi_0star, random_function, symbol

from conftest import geometry, solved

H = sp.Symbol("h")


def poly(ring, seed, degree=2):
    return random_function(ring, random.Random(seed), degree, 3)


def wick_functions_oracle(f, g, order):
    """Flat space: ``f * g = sum_k h^k/k! d^k f dbar^k g``."""
    z, zb = sp.symbols("z1 zb1")
    fe, ge = f.to_expr(), g.to_expr()
    return sum(H**k / sp.factorial(k) * sp.diff(fe, z, k) * sp.diff(ge, zb, k) for k in range(order + 1))


@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_flat_space_star_matches_wick_formula(s1, s2):
    fd = solved("flat:1")
    f, g = poly(fd.geometry.ring, s1), poly(fd.geometry.ring, s2)
    got = star_of_functions(fd, f, g, 2).to_expr()
    assert sp.expand(got - wick_functions_oracle(f, g, 2)) == 0


@pytest.mark.parametrize("name", ["flat:1", "cp1", "disc"])
@given(seed=st.integers(0, 10**6))
def test_symbol_and_flatness(name, seed):
    fd = solved(name)
    f = poly(fd.geometry.ring, seed)
    fs = flat_section(fd, f, 5)
    assert symbol(fs.section) == HPoly.of(f)
    assert fd.connection(fs.section.with_trunc(NO_TRUNC), Trunc(max_deg=4)).is_zero()


@pytest.mark.parametrize("name", ["cp1", "disc"])
@given(seed=st.integers(0, 10**6))
def test_separation_of_variables(name, seed):
    # holomorphic factors on the right and antiholomorphic factors on the left multiply pointwise
    fd = solved(name, "berezin_toeplitz")
    ring = fd.geometry.ring
    f = poly(ring, seed)
    a = poly(ring, seed + 1).substitute({1: ring.zero()})
    b = a.conj()
    assert star_of_functions(fd, f, a, 2) == HPoly.of(f * a)
    assert star_of_functions(fd, b, f, 2) == HPoly.of(b * f)


@pytest.mark.parametrize("name", ["cp1", "disc"])
def test_first_order_term_is_the_pairing(name):
    fd = solved(name)
    g = fd.geometry
    f, h = g.ring.z(0) ** 2, g.ring.zb(0) * g.ring.z(0)
    c1 = star_of_functions(fd, f, h, 1)[1]
    assert c1 == g.omega_inv[0][0] * f.dz(0) * h.dzb(0)


@pytest.mark.parametrize("name", ["flat:1", "flat:2", "cp1", "disc"])
@pytest.mark.parametrize("alpha", ["zero", "berezin_toeplitz"])
def test_generators_from_the_iteration(name, alpha):
    fd = solved(name, alpha)
    g = fd.geometry
    for f in (g.ring.z(0), g.ring.z(0) ** 2 * g.ring.z(g.n - 1)):
        fs = flat_section(fd, f, 6)
        assert fs.ybar_degree() == 0
        assert fs.section.restrict(Trunc(max_deg=6)) == holomorphic_flat_section(g, f, 6).section.restrict(Trunc(max_deg=6))
    for j in range(g.n):
        fs = flat_section(fd, u_flat_section(fd, j, 3).source, 6)
        assert fs.ybar_degree() == 1
        assert pi_0star(fs.section) == u_seed(fd, j)


def test_flat_space_closed_forms():
    fd = solved("flat:1")
    ctx = fd.ctx
    z, zb = fd.geometry.ring.z(0), fd.geometry.ring.zb(0)
    oz = flat_section(fd, z, 6)
    ozb = flat_section(fd, zb, 6)
    assert oz.exact and oz.section == WeylSection.function(ctx, z) + WeylSection.y(ctx, 0)
    assert ozb.exact and ozb.section == WeylSection.function(ctx, zb) + WeylSection.ybar(ctx, 0)


def test_quantizability_verdicts():
    fd = solved("flat:1")
    zz = flat_section(fd, fd.geometry.ring.z(0) * fd.geometry.ring.zb(0), 6)
    rep = quantizability_check(zz)
    assert (rep.verdict, rep.bound) == ("exact_bound", 1)
    cp = solved("cp1", "berezin_toeplitz")
    zb = cp.geometry.ring.zb(0)
    big, small = flat_section(cp, zb, 6), flat_section(cp, zb, 4)
    assert quantizability_check(big, small).verdict == "unbounded_within_test"
    ou = u_flat_section(cp, 0, 5)
    rep = quantizability_check(ou)
    assert (rep.verdict, rep.bound) == ("exact_bound", 1)


def test_products_of_generators_carry_summed_bounds():
    lv = solved("cp1", "berezin_toeplitz").at_level(2)
    ou = level_u(lv, 0, 5)
    oz = level_holomorphic(lv, lv.geometry.ring.z(0), 5)
    p = star_flat(ou, star_flat(oz, ou, Trunc(max_y=5)), Trunc(max_y=5))
    assert p.ybar_bound == 2
    assert p.section.filter(lambda k: k.ydeg <= 2).max_ybdeg() == 2
    assert quantizability_check(p).verdict == "exact_bound"


def test_psi_normalisation():
    lv = solved("disc", "berezin_toeplitz").at_level(3)
    ou = level_u(lv, 0, 4)
    uu = star_flat(ou, ou, Trunc(max_y=4))
    ctx = lv.ctx
    y = WeylSection.y(ctx, 0, hbar=lv.hbar)
    assert graded_symbol_psi(ou.section, lv.geometry, 1) == y
    assert graded_symbol_psi(uu.section, lv.geometry, 2) == fiber_mul(y, y)


@pytest.mark.parametrize("name, alpha", [("flat:2", "zero"), ("disc", "berezin_toeplitz"), ("cp1", "hbar_omega")])
def test_tdo_report(name, alpha):
    rep = tdo_checks(solved(name, alpha).at_level(2))
    assert rep.ok
    assert rep.poisson_constant == gauss(-1)
    assert len([d for d in rep.details if "pair" in d]) == 10


def test_cp1_two_chart_cocycle():
    out = cp1_cocycle_check(4, 2)
    z = geometry("cp1").ring.z(0)
    assert out["difference"] == 1 / z
    assert out["dbar_closed"] and out["d_closed"] and out["omega_from_chart1"]
    assert out["flat_difference_is_holomorphic_section"] and out["ybar_free_difference"]


def test_flat_section_rejects_short_data():
    fd = solved("cp1", "zero", 3)
    from kquant.flatsections import FlatSectionError

    with pytest.raises(FlatSectionError):
        flat_section(fd, fd.geometry.ring.zb(0), 8)
    with pytest.raises(FlatSectionError):
        holomorphic_flat_section(fd.geometry, fd.geometry.ring.zb(0), 3)
    assert isinstance(flat_section(fd, fd.geometry.ring.z(0), 4), FlatSection)
