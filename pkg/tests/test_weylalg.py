"""Wick product, Koszul homotopies and the Levi-Civita connection on Weyl sections."""

import random

import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from kquant.weyl import (
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
    gamma0,
    hbar_divide,
    nabla,
    pi_0star,
    random_section,
    star,
    symbol,
)

from conftest import geometry

H = sp.Symbol("h")
FORMS = [(0, 0), (1, 0), (0, 1)]


def ctx_of(name):
    return WeylContext.of(geometry(name))


def fibre_symbols(n):
    return sp.symbols(f"y1:{n + 1}"), sp.symbols(f"yb1:{n + 1}")


def to_sympy(a: WeylSection):
    """0-form sections as sympy expressions in z, zb, y, yb, h."""
    ys, ybs = fibre_symbols(a.n)
    out = sp.Integer(0)
    for k, v in a.terms.items():
        assert not k.form_degree
        m = v.to_expr() * H**k.h
        for i in range(a.n):
            m *= ys[i] ** k.y[i] * ybs[i] ** k.yb[i]
        out += m
    return out


def wick_oracle(g, ea, eb, order):
    """``sum_k h^k/k! P^k (a ⊗ b)`` with ``P = sum H[i][j] d/dy_i ⊗ d/dyb_j``."""
    n = g.n
    ys, ybs = fibre_symbols(n)
    Hm = [[g.omega_inv[i][j].to_expr() for j in range(n)] for i in range(n)]
    pairs = [(sp.Integer(1), ea, eb)]
    total = ea * eb
    for k in range(1, order + 1):
        nxt = []
        for c, x, y in pairs:
            for i in range(n):
                for j in range(n):
                    if Hm[i][j] != 0:
                        dx, dy = sp.diff(x, ys[i]), sp.diff(y, ybs[j])
                        if dx != 0 and dy != 0:
                            nxt.append((c * Hm[i][j], dx, dy))
        pairs = nxt
        total += sum(c * x * y for c, x, y in pairs) * H**k / sp.factorial(k)
    return total


@pytest.mark.parametrize("name", ["flat:1", "flat:2", "cp1", "disc"])
@given(seed=st.integers(0, 10**6))
def test_wick_product_matches_oracle(name, seed):
    g = geometry(name)
    ctx = ctx_of(name)
    rng = random.Random(seed)
    a = random_section(ctx, rng, 3, 2, 1, n_terms=3)
    b = random_section(ctx, rng, 2, 3, 1, n_terms=3)
    got = to_sympy(star(a, b))
    want = wick_oracle(g, to_sympy(a), to_sympy(b), 3)
    assert sp.simplify(got - want) == 0


def test_generator_relations():
    ctx = ctx_of("flat:1")
    y, yb = WeylSection.y(ctx, 0), WeylSection.ybar(ctx, 0)
    h = WeylSection.monomial(ctx, 1, y=(0,), yb=(0,), h=1)
    assert star(y, yb) == fiber_mul(y, yb) + h
    assert star(yb, y) == fiber_mul(y, yb)
    assert bracket(y, yb) == h


@pytest.mark.parametrize("name", ["flat:2", "cp1"])
@given(seed=st.integers(0, 10**6))
def test_star_is_associative_on_forms(name, seed):
    rng = random.Random(seed)
    ctx = ctx_of(name)
    a, b, c = (random_section(ctx, rng, 2, 2, 1, FORMS, 3) for _ in range(3))
    assert star(star(a, b), c) == star(a, star(b, c))


@pytest.mark.parametrize("name", ["flat:1", "flat:2", "disc"])
@given(seed=st.integers(0, 10**6))
def test_koszul_homotopies(name, seed):
    rng = random.Random(seed)
    ctx = ctx_of(name)
    a = random_section(ctx, rng, 3, 3, 1, FORMS + [(1, 1)], 4)
    assert delta(delta(a)).is_zero()
    assert a - pi_0star(a) == delta10(delta10_inv(a)) + delta10_inv(delta10(a))
    fibre_constant_functions = a.filter(lambda k: not k.form_degree and not k.fiber_degree)
    assert a - fibre_constant_functions == delta(delta_inv(a)) + delta_inv(delta(a))


@pytest.mark.parametrize("name", ["flat:1", "cp1", "disc"])
@given(seed=st.integers(0, 10**6))
def test_nabla_is_a_graded_derivation(name, seed):
    g = geometry(name)
    rng = random.Random(seed)
    ctx = ctx_of(name)
    a = random_section(ctx, rng, 2, 2, 1, FORMS, 3)
    b = random_section(ctx, rng, 2, 2, 1, FORMS, 3)
    sign_a = a.parity_part(False) - a.parity_part(True)
    assert nabla(star(a, b), g) == star(nabla(a, g), b) + star(sign_a, nabla(b, g))


@pytest.mark.parametrize("name", ["flat:2", "cp1", "disc"])
@given(seed=st.integers(0, 10**6))
def test_nabla_squared_is_curvature(name, seed):
    g = geometry(name)
    rng = random.Random(seed)
    a = random_section(ctx_of(name), rng, 2, 2, 0, FORMS, 3)
    assert nabla(nabla(a, g), g) == hbar_divide(bracket(curvature_section(g), a))


def test_gamma0_generates_minus_delta():
    g = geometry("cp1")
    ctx = ctx_of("cp1")
    rng = random.Random(7)
    for _ in range(5):
        a = random_section(ctx, rng, 3, 3, 0, FORMS, 3)
        assert hbar_divide(bracket(gamma0(g), a)) == -delta(a)


@given(seed=st.integers(0, 10**6), level=st.integers(1, 5))
def test_evaluation_is_a_homomorphism(seed, level):
    rng = random.Random(seed)
    ctx = ctx_of("disc")
    a, b = (random_section(ctx, rng, 2, 2, 2, FORMS, 3) for _ in range(2))
    assert evaluate_hbar(star(a, b), level) == star(evaluate_hbar(a, level), evaluate_hbar(b, level))


def test_truncation_is_respected():
    ctx = ctx_of("flat:1")
    y, yb = WeylSection.y(ctx, 0), WeylSection.ybar(ctx, 0)
    p = star(y, yb, Trunc(max_y=0))
    assert p.max_ydeg() == 0 and symbol(p).coeffs == {1: ctx.ring.one()}
    assert star(y, y, Trunc(max_deg=1)).is_zero()
    assert NO_TRUNC.is_unbounded()


@pytest.mark.parametrize("name", ["flat:1", "flat:2", "cp1", "disc"])
def test_contracted_metric_form_is_parallel(name):
    # omega_{ij} dzbar^j ⊗ y^i is nabla-parallel; the symbol-zero flat section on flat space relies on it
    g = geometry(name)
    ctx = WeylContext.of(g)
    s = WeylSection(ctx, {})
    for i in range(g.n):
        for j in range(g.n):
            e = tuple(int(t == i) for t in range(g.n))
            s = s + WeylSection.monomial(ctx, g.omega[i][j], dzb=(j,), y=e)
    assert not s.is_zero()
    assert nabla(s, g).is_zero()
