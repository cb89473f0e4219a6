"""Bargmann-Fock module, coherent section, quantization map and prequantum operators."""

import random

import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from kquant.coeffs import gauss, parse_scalar
from kquant.flatsections import level_holomorphic, level_u, star_flat
from kquant.fock import (
    DiffOperator,
    FockError,
    bf_act,
    beta,
    coherent_section,
    d_beta_expected,
    fock_connection,
    prequantum_operator,
    quantize_to_diffop,
    random_fock_section,
    star_identity_sides,
    symbol_iso_check,
)
from kquant.weyl import Trunc, random_section, star

from conftest import geometry, solved

FORMS = [(0, 0), (0, 1), (1, 0)]


def level(name, alpha="berezin_toeplitz", k=2):
    return solved(name, alpha).at_level(k)


def fock_to_sympy(s):
    y = sp.Symbol("y1")
    return sum((v.to_expr() * y ** k.y[0] for k, v in s.terms.items()), sp.Integer(0))


@given(seed=st.integers(0, 10**6), k=st.integers(1, 4))
def test_action_matches_derivative_oracle(seed, k):
    # flat space: y multiplies, ybar acts as -hbar d/dy, and the fibre monomial y^a ybar^b is ybar^b * y^a
    lv = level("flat:1", "zero", k)
    rng = random.Random(seed)
    a = random_section(lv.ctx, rng, 2, 3, hbar=lv.hbar, n_terms=3)
    s = random_fock_section(lv, rng, 3)
    y = sp.Symbol("y1")
    se = fock_to_sympy(s)
    want = sp.Integer(0)
    for key, c in a.terms.items():
        want += c.to_expr() * sp.diff(y ** key.y[0] * se, y, key.yb[0]) * sp.Rational(-1, k) ** key.yb[0]
    assert sp.expand(fock_to_sympy(bf_act(a, s)) - want) == 0


@pytest.mark.parametrize("name", ["flat:2", "cp1", "disc"])
@given(seed=st.integers(0, 10**6))
def test_module_axiom(name, seed):
    lv = level(name)
    rng = random.Random(seed)
    A = random_section(lv.ctx, rng, 2, 2, forms=FORMS, hbar=lv.hbar, n_terms=3)
    B = random_section(lv.ctx, rng, 2, 2, forms=FORMS, hbar=lv.hbar, n_terms=3)
    s = random_fock_section(lv, rng, 3, forms=FORMS)
    assert bf_act(star(A, B), s) == bf_act(A, bf_act(B, s))


@pytest.mark.parametrize("name", ["cp1", "disc"])
@pytest.mark.parametrize("k", [1, 2])
def test_coherent_section_is_flat(name, k):
    lv = level(name, "berezin_toeplitz", k)
    assert fock_connection(lv, coherent_section(lv, 5), Trunc(max_y=4)).is_zero()


def test_coherent_section_needs_the_berezin_toeplitz_alpha():
    lv = level("cp1", "zero", 2)
    assert not fock_connection(lv, coherent_section(lv, 4), Trunc(max_y=3)).is_zero()


@pytest.mark.parametrize("name", ["flat:1", "cp1", "disc"])
def test_d_beta_and_star_identity(name):
    lv = level(name)
    got = lv.connection(beta(lv.geometry, 5, lv.hbar), Trunc(max_y=4))
    assert got == d_beta_expected(lv, 4)
    lhs, rhs = star_identity_sides(lv, 5)
    assert lhs == rhs


def test_beta_on_flat_space():
    lv = level("flat:1")
    b = beta(lv.geometry, 5, lv.hbar)
    assert {k.y[0]: v for k, v in b.terms.items()} == {1: lv.geometry.ring.zb(0)}


@pytest.mark.parametrize("name", ["flat:1", "cp1", "disc"])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_quantize_u_is_a_derivative(name, k):
    lv = level(name, "berezin_toeplitz", k)
    op = quantize_to_diffop(lv, level_u(lv, 0, 3).section, 3, 1)
    assert op == DiffOperator.partial(lv.geometry.ring, 0).scale(gauss(sp.Rational(-1, k)))


def test_quantize_at_gaussian_level():
    k = parse_scalar("1+i")
    lv = solved("disc", "berezin_toeplitz").at_level(k)
    op = quantize_to_diffop(lv, level_u(lv, 0, 3).section, 3, 1)
    assert op == DiffOperator.partial(lv.geometry.ring, 0).scale(gauss(sp.Rational(-1, 2), sp.Rational(1, 2)))


def test_quantize_holomorphic_and_products():
    lv = level("cp1", "berezin_toeplitz", 3)
    ring = lv.geometry.ring
    z = ring.z(0)
    oz = level_holomorphic(lv, z * z + z, 4)
    assert quantize_to_diffop(lv, oz.section, 3, 0) == DiffOperator.multiplication(z * z + z)
    ou = level_u(lv, 0, 4)
    prod = star_flat(oz, ou, Trunc(max_y=4))
    want = DiffOperator.multiplication(z * z + z) @ DiffOperator.partial(ring, 0).scale(gauss(sp.Rational(-1, 3)))
    assert quantize_to_diffop(lv, prod.section, 3, 1) == want


def test_diff_operator_composition_matches_sympy():
    ring = geometry("flat:1").ring
    z = ring.z(0)
    d = DiffOperator.partial(ring, 0)
    P = DiffOperator.multiplication(z * z) @ d + d @ d
    Q = d @ DiffOperator.multiplication(1 / (1 + z))
    f = z**4 + 3 * z
    x = sp.Symbol("z1")
    fe = f.to_expr()
    qf = sp.diff(fe / (1 + x), x)
    assert sp.simplify((P @ Q).apply(f).to_expr() - (x**2 * sp.diff(qf, x) + sp.diff(qf, x, 2))) == 0


def test_symbol_isomorphism_obstruction():
    lv = level("disc")
    ring = lv.geometry.ring
    assert symbol_iso_check(lv, ring.z(0) ** 3, 4)["flat"]
    out = symbol_iso_check(lv, ring.zb(0), 4)
    assert not out["flat"] and not out["obstruction"].is_zero()


def test_fock_sections_are_checked():
    lv = level("flat:1")
    with pytest.raises(FockError):
        fock_connection(lv, random_section(lv.ctx, random.Random(1), 2, 2, hbar=lv.hbar, n_terms=6))
    fd = solved("flat:1")
    with pytest.raises(FockError):
        bf_act(random_section(fd.ctx, random.Random(2), 1, 1), random_fock_section(lv, random.Random(3)))


@pytest.mark.parametrize("k", [1, 2, 5])
def test_prequantum_operator_flat(k):
    g = geometry("flat:1")
    z, zb = g.ring.z(0), g.ring.zb(0)
    Q = prequantum_operator(g, z * zb, k)
    for s in (g.ring.one(), z, z**3 + 2 * z):
        assert Q.apply(s) == (z * s.dz(0)).scale(gauss(sp.Rational(-1, k)))
    re2 = (z + zb) * (z + zb) / 4
    assert not prequantum_operator(g, re2, k).preserves_holomorphic([g.ring.one(), z])
    # on flat space the real part of z still maps holomorphic sections to holomorphic ones
    assert prequantum_operator(g, (z + zb) / 2, k).preserves_holomorphic([g.ring.one(), z, z * z])


def test_prequantum_operator_rotation_on_cp1():
    g = geometry("cp1")
    z, zb = g.ring.z(0), g.ring.zb(0)
    Q = prequantum_operator(g, z * zb / (1 + z * zb), 2)
    assert Q.preserves_holomorphic([g.ring.one(), z, z * z])
    assert not prequantum_operator(g, zb, 2).preserves_holomorphic([g.ring.one()])
