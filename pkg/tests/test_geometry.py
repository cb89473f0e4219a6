"""Metric data of the chart presets against an independent sympy computation from the potential."""

import pytest
import sympy as sp

from kquant.coeffs import ChartRing, RationalFn
from kquant.geometry import GeometryError, check_alpha, custom, geometry_from_spec

from conftest import GEOMETRIES


def potential(name):
    if name.startswith("flat"):
        n = int(name.split(":")[1])
        zs, zbs = sp.symbols(f"z1:{n + 1}"), sp.symbols(f"zb1:{n + 1}")
        return zs, zbs, sum(a * b for a, b in zip(zs, zbs))
    z, zb = sp.symbols("z1 zb1")
    if name == "cp1":
        return (z,), (zb,), sp.log(1 + z * zb)
    return (z,), (zb,), -sp.log(1 - z * zb)


def oracle(name):
    """omega, Gamma^k_ij, R[i][j][p][q] and Ricci from the potential with sympy matrices."""
    zs, zbs, rho = potential(name)
    n = len(zs)
    W = sp.Matrix(n, n, lambda a, b: sp.diff(rho, zs[a], zbs[b]))
    Winv = sp.simplify(W.inv())
    gamma = [[[sp.simplify(sum(Winv[l, k] * sp.diff(W[j, l], zs[i]) for l in range(n))) for j in range(n)] for i in range(n)] for k in range(n)]
    R = [[[[sp.simplify(-sum(W[m, q] * sp.diff(gamma[m][i][p], zbs[j]) for m in range(n))) for q in range(n)] for p in range(n)] for j in range(n)] for i in range(n)]
    ric = sp.Matrix(n, n, lambda i, j: sp.simplify(-sp.diff(sp.log(W.det()), zs[i], zbs[j])))
    return W, gamma, R, ric


def eq(f: RationalFn, expr) -> bool:
    return sp.simplify(f.to_expr() - expr) == 0


@pytest.mark.parametrize("name", GEOMETRIES)
def test_geometry_matches_sympy_oracle(name):
    g = geometry_from_spec(name)
    W, gamma, R, ric = oracle(name)
    n = g.n
    for i in range(n):
        for j in range(n):
            assert eq(g.omega[i][j], W[i, j])
            assert eq(g.ricci[i][j], ric[i, j])
            for k in range(n):
                assert eq(g.christoffel[k][i][j], gamma[k][i][j])
                for q in range(n):
                    assert eq(g.curvature[i][j][k][q], R[i][j][k][q])


@pytest.mark.parametrize("name", GEOMETRIES)
def test_ricci_potential_and_trace_identity(name):
    g = geometry_from_spec(name)
    zs, zbs, _ = potential(name)
    W = sp.Matrix(g.n, g.n, lambda a, b: g.omega[a][b].to_expr())
    for i in range(g.n):
        assert eq(g.d_rho1[i], -sp.diff(sp.log(W.det()), zs[i]))
        for j in range(g.n):
            assert g.d_rho1[i].dzb(j) == g.ricci[i][j]


def test_cp1_curvature_value():
    g = geometry_from_spec("cp1")
    z, zb = g.ring.z(0), g.ring.zb(0)
    assert g.curvature[0][0][0][0] == 2 / (1 + z * zb) ** 4
    assert g.ricci[0][0] == 2 * g.omega[0][0]


def test_flat_has_no_connection():
    g = geometry_from_spec("flat:2")
    assert g.is_flat_metric
    assert all(not c for mat in g.christoffel for row in mat for c in row)


@pytest.mark.parametrize("name", GEOMETRIES)
@pytest.mark.parametrize("kind", ["zero", "hbar_omega", "berezin_toeplitz"])
def test_alpha_forms_have_potentials(name, kind):
    g = geometry_from_spec(name)
    a = g.alpha_form(kind)
    check_alpha(g, a)
    if kind == "berezin_toeplitz" and not g.is_flat_metric:
        assert a.matrix[1] == g.ricci


def test_custom_geometry_two_dimensional():
    ring = ChartRing(2)
    z1, z2, zb1, zb2 = ring.z(0), ring.z(1), ring.zb(0), ring.zb(1)
    q = 1 + z1 * zb1 + z2 * zb2
    d_rho = [zb1 / q, zb2 / q]
    omega = [[d_rho[i].dzb(j) for j in range(2)] for i in range(2)]
    g = custom("cp2", omega, d_rho)
    # Fubini-Study is Kähler-Einstein with Ric = 3 omega
    assert all(g.ricci[i][j] == 3 * g.omega[i][j] for i in range(2) for j in range(2))


def test_rejects_non_kahler_metric():
    ring = ChartRing(1)
    z, zb = ring.z(0), ring.zb(0)
    with pytest.raises(GeometryError):
        custom("bad", [[1 + z * z * zb]], [zb + z * zb * zb / 2])
    with pytest.raises(GeometryError):
        custom("bad", [[ring.one()]], [2 * zb])


@pytest.mark.parametrize("text", ["flat:0", "flat:x", "sphere", ""])
def test_bad_preset_names(text):
    with pytest.raises(ValueError):
        geometry_from_spec(text)
