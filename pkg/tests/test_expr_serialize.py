"""Expression parser and JSON persistence."""

import json
import random

import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from kquant.coeffs import HPoly, gauss
from kquant.expr import ParseError, parse_expression, parse_function
from kquant.serialize import (
    CacheError,
    cache_path,
    dumps,
    fedosov_from_json,
    fedosov_to_json,
    geometry_from_json,
    geometry_to_json,
    hpoly_from_json,
    hpoly_to_json,
    load_or_solve,
    section_from_json,
    section_to_json,
)
from kquant.weyl import WeylContext, random_section

from conftest import geometry, solved

Z1, ZB1, Z2, H = sp.symbols("z1 zb1 z2 h")


@pytest.mark.parametrize(
    "text, expr",
    [
        ("z1*zb1 + h", Z1 * ZB1 + H),
        ("(1+z1*zb1)^-2", (1 + Z1 * ZB1) ** -2),
        ("zb1/(1 - z1*zb1)", ZB1 / (1 - Z1 * ZB1)),
        ("2*i*z1 - 0.5*zb1", 2 * sp.I * Z1 - sp.Rational(1, 2) * ZB1),
        ("-(z1 + z2)**2 / 3", -((Z1 + Z2) ** 2) / 3),
        ("h^2*(1 + i) - h/4", H**2 * (1 + sp.I) - H / 4),
        ("--z1", Z1),
    ],
)
def test_parser_matches_sympy(text, expr):
    v = parse_expression(text, 2)
    assert sp.simplify(v.to_expr() - expr) == 0


@pytest.mark.parametrize(
    "text, pos",
    [("z1 +", 4), ("z3", 0), ("z1 $ 2", 3), ("1/(h)", 1), ("(z1", 3), ("z1^h", 3), ("", 0), ("(1+h)^-1", 7), ("1/0", 1)],
)
def test_parse_errors_report_positions(text, pos):
    with pytest.raises(ParseError) as err:
        parse_expression(text, 2)
    assert err.value.pos == pos
    assert "^" in str(err.value)


def test_functions_must_not_contain_hbar():
    assert parse_function("z1*zb1", 1) == geometry("flat:1").ring.z(0) * geometry("flat:1").ring.zb(0)
    with pytest.raises(ParseError):
        parse_function("z1 + h", 1)


@pytest.mark.parametrize("name", ["flat:2", "cp1", "disc"])
@given(seed=st.integers(0, 10**6))
def test_section_round_trip(name, seed):
    ctx = WeylContext.of(geometry(name))
    a = random_section(ctx, random.Random(seed), 3, 2, 2, [(0, 0), (1, 0), (0, 1), (1, 1)], 5, gaussian=True)
    doc = json.loads(dumps(section_to_json(a)))
    assert section_from_json(doc, ctx) == a


def test_hpoly_and_geometry_round_trip():
    g = geometry("disc")
    p = HPoly(g.ring, {0: g.omega[0][0], 2: g.d_rho[0].scale(gauss(1, -3))})
    assert hpoly_from_json(g.ring, json.loads(dumps(hpoly_to_json(p)))) == p
    assert geometry_from_json(geometry_to_json(g)) is not None
    back = geometry_from_json(json.loads(dumps(geometry_to_json(g, full=True))))
    assert back.omega == g.omega and back.ricci == g.ricci


def test_section_json_layout():
    ctx = WeylContext.of(geometry("flat:2"))
    from kquant.weyl import WeylSection

    a = WeylSection.monomial(ctx, 3, dzb=(1,), y=(2, 0), yb=(0, 1), h=1)
    (term,) = section_to_json(a)["terms"]
    assert term["dzbarJ"] == [2] and term["yK"] == [1, 1] and term["ybarL"] == [2] and term["hpow"] == 1


def test_fedosov_cache_round_trip_and_tamper_detection(tmp_path):
    fd = solved("cp1", "berezin_toeplitz", 4)
    doc = json.loads(dumps(fedosov_to_json(fd)))
    assert fedosov_from_json(doc).I == fd.I
    bad = json.loads(json.dumps(doc))
    bad["I"]["terms"][0]["coeff"]["num"][0][1] = ["7", "0"]
    with pytest.raises(CacheError, match="digest"):
        fedosov_from_json(bad)
    bad["digest"] = __import__("hashlib").sha256(dumps(bad["I"]).encode()).hexdigest()
    with pytest.raises(CacheError):
        fedosov_from_json(bad)
    with pytest.raises(CacheError):
        fedosov_from_json({"schema": "other"})


def test_load_or_solve_uses_and_verifies_cache(tmp_path):
    g = geometry("disc")
    first = load_or_solve(g, "hbar_omega", 4, tmp_path)
    path = cache_path(tmp_path, g, "hbar_omega", 4)
    assert path.exists()
    assert load_or_solve(g, "hbar_omega", 4, tmp_path).I == first.I
    doc = json.loads(path.read_text())
    doc["I"]["terms"].pop()
    path.write_text(dumps(doc))
    with pytest.raises(CacheError):
        load_or_solve(g, "hbar_omega", 4, tmp_path)
