"""Kähler chart data: metric, Christoffel symbols, curvature, potentials.

Conventions.  ``omega[i][j]`` is the metric coefficient of ``dz^i ∧ dzbar^j``.
``omega_inv[k][j]`` is the inverse pairing, characterised by
``sum_j omega[i][j] * omega_inv[k][j] == delta_ik``.  The Christoffel symbol
``gamma[k][i][j]`` of the Chern connection is ``sum_l omega_inv[k][l] * d_i omega[j][l]``
and the curvature tensor ``curvature[i][j][p][q]`` is the coefficient of
``dz^i ∧ dzbar^j ⊗ y^p ybar^q`` in the curvature section of the Weyl bundle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .coeffs import ChartRing, HPoly, RationalFn, gauss


class GeometryError(ValueError):
    """Invalid chart data; ``where`` names the failing index tuple."""

    def __init__(self, message: str, where: tuple = ()):
        super().__init__(f"{message} at index {where}" if where else message)
        self.where = where


def mat_inverse(m: list[list[RationalFn]]) -> list[list[RationalFn]]:
    """Gauss-Jordan inverse of a square matrix of rational functions."""
    n = len(m)
    ring = m[0][0].ring
    a = [row[:] + [ring.one() if i == j else ring.zero() for j in range(n)] for i, row in enumerate(m)]
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col]), None)
        if piv is None:
            raise GeometryError("metric matrix is singular", (col,))
        a[col], a[piv] = a[piv], a[col]
        inv = a[col][col].inverse()
        a[col] = [x * inv for x in a[col]]
        for r in range(n):
            if r != col and a[r][col]:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return [row[n:] for row in a]


def mat_det(m: list[list[RationalFn]]) -> RationalFn:
    n = len(m)
    if n == 1:
        return m[0][0]
    if n == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    total = m[0][0].ring.zero()
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        term = m[0][j] * mat_det(minor)
        total = total + term if j % 2 == 0 else total - term
    return total


@dataclass
class AlphaForm:
    """A closed (1,1)-form ``alpha = d dbar-potential`` with hbar-dependent coefficients.

    ``matrix[h][i][j]`` is the coefficient of ``hbar^h dz^i ∧ dzbar^j``.  The potential
    is stored through its derivatives ``d_phi[h][i]`` and ``dbar_phi[h][j]``.
    """

    kind: str
    matrix: dict[int, list[list[RationalFn]]] = field(default_factory=dict)
    d_phi: dict[int, list[RationalFn]] = field(default_factory=dict)
    dbar_phi: dict[int, list[RationalFn]] = field(default_factory=dict)

    def is_zero(self) -> bool:
        return all(not c for m in self.matrix.values() for row in m for c in row)


@dataclass
class ChartGeometry:
    """A Kähler chart with potential data.

    ``d_rho[i]`` is the holomorphic derivative of a Kähler potential,
    ``d_rho1[i]`` the holomorphic derivative of ``-log det omega``.
    """

    name: str
    n: int
    omega: list[list[RationalFn]]
    d_rho: list[RationalFn]
    d_rho1: list[RationalFn] | None = None
    validate: bool = True

    def __post_init__(self) -> None:
        self.ring = ChartRing(self.n)
        if self.validate:
            check_kahler(self)
        self.omega_inv = mat_inverse_pairing(self.omega)
        self.christoffel = christoffel_symbols(self)
        self.christoffel_bar = [[[c.conj() for c in row] for row in mat] for mat in self.christoffel]
        self.is_flat_metric = all(c.is_constant() for row in self.omega for c in row)
        if self.d_rho1 is None:
            self.d_rho1 = log_det_derivative(self, sign=-1)
        self._curv = None
        self._ricci = None

    @property
    def curvature(self) -> list:
        if self._curv is None:
            self._curv = curvature_tensor(self)
        return self._curv

    @property
    def ricci(self) -> list[list[RationalFn]]:
        if self._ricci is None:
            self._ricci = ricci_contraction(self)
        return self._ricci

    def dbar_rho(self) -> list[RationalFn]:
        return [c.conj() for c in self.d_rho]

    def alpha_form(self, kind: str) -> AlphaForm:
        return alpha_form(self, kind)

    def spec_string(self) -> str:
        return self.name

    def __repr__(self) -> str:
        return f"ChartGeometry({self.name!r})"


def mat_inverse_pairing(omega):
    """Return ``omega_inv`` with ``sum_j omega[i][j] omega_inv[k][j] = delta_ik``."""
    inv = mat_inverse(omega)
    n = len(omega)
    return [[inv[j][k] for j in range(n)] for k in range(n)]


def check_kahler(g: ChartGeometry) -> None:
    """Hermitian symmetry, the Kähler condition and the potential relation."""
    n, w = g.n, g.omega
    if len(w) != n or any(len(row) != n for row in w):
        raise GeometryError("metric matrix has the wrong shape")
    if len(g.d_rho) != n:
        raise GeometryError("potential derivative has the wrong length")
    for i in range(n):
        for j in range(n):
            if w[i][j].conj() != w[j][i]:
                raise GeometryError("metric is not Hermitian", (i, j))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if w[i][j].dz(k) != w[k][j].dz(i):
                    raise GeometryError("metric is not Kähler", (i, j, k))
    for i in range(n):
        for j in range(n):
            if g.d_rho[i].dzb(j) != w[i][j]:
                raise GeometryError("potential derivative does not reproduce the metric", (i, j))


def christoffel_symbols(g: ChartGeometry):
    n, w, h = g.n, g.omega, g.omega_inv
    dw = [[[w[j][l].dz(i) for l in range(n)] for j in range(n)] for i in range(n)]
    out = []
    for k in range(n):
        mat = []
        for i in range(n):
            row = []
            for j in range(n):
                s = g.ring.zero()
                for l in range(n):
                    if h[k][l] and dw[i][j][l]:
                        s = s + h[k][l] * dw[i][j][l]
                row.append(s)
            mat.append(row)
        out.append(mat)
    return out


def curvature_tensor(g: ChartGeometry):
    """``R[i][j][p][q] = -sum_m omega[m][q] * dbar_j gamma[m][i][p]``."""
    n = g.n
    dg = [[[[g.christoffel[m][i][p].dzb(j) for p in range(n)] for i in range(n)] for m in range(n)] for j in range(n)]
    out = []
    for i in range(n):
        a = []
        for j in range(n):
            b = []
            for p in range(n):
                c = []
                for q in range(n):
                    s = g.ring.zero()
                    for m in range(n):
                        if dg[j][m][i][p]:
                            s = s - g.omega[m][q] * dg[j][m][i][p]
                    c.append(s)
                b.append(c)
            a.append(b)
        out.append(a)
    return out


def ricci_contraction(g: ChartGeometry):
    """``Ric[i][j] = sum_{p,q} R[i][j][p][q] * omega_inv[p][q]``."""
    n, R, h = g.n, g.curvature, g.omega_inv
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            s = g.ring.zero()
            for p in range(n):
                for q in range(n):
                    if R[i][j][p][q]:
                        s = s + R[i][j][p][q] * h[p][q]
            row.append(s)
        out.append(row)
    return out


def log_det_derivative(g: ChartGeometry, sign: int = 1) -> list[RationalFn]:
    """``sign * d_i log det omega = sign * sum_{a,b} omega_inv[a][b] d_i omega[a][b]``."""
    n = g.n
    out = []
    for i in range(n):
        s = g.ring.zero()
        for a in range(n):
            for b in range(n):
                d = g.omega[a][b].dz(i)
                if d:
                    s = s + g.omega_inv[a][b] * d
        out.append(s if sign > 0 else -s)
    return out


def alpha_form(g: ChartGeometry, kind: str) -> AlphaForm:
    """The built-in closed (1,1)-forms ``zero``, ``hbar_omega`` and ``berezin_toeplitz``.

    ``hbar_omega`` has potential ``hbar * rho``; ``berezin_toeplitz`` has potential
    ``-hbar * log det omega`` so that its coefficient matrix is ``hbar * Ric``.
    """
    if kind == "zero":
        return AlphaForm("zero")
    if kind == "hbar_omega":
        return AlphaForm(
            kind,
            {1: [row[:] for row in g.omega]},
            {1: list(g.d_rho)},
            {1: g.dbar_rho()},
        )
    if kind == "berezin_toeplitz":
        mat = [row[:] for row in g.ricci]
        if all(not c for row in mat for c in row):
            return AlphaForm(kind)
        return AlphaForm(kind, {1: mat}, {1: list(g.d_rho1)}, {1: [c.conj() for c in g.d_rho1]})
    raise ValueError(f"unknown alpha kind {kind!r}")


def check_alpha(g: ChartGeometry, alpha: AlphaForm) -> None:
    """``d_i dbar_phi_j == alpha_ij`` and ``dbar_j d_phi_i == alpha_ij``; alpha closed."""
    n = g.n
    for h, mat in alpha.matrix.items():
        dbar = alpha.dbar_phi.get(h)
        dphi = alpha.d_phi.get(h)
        for i in range(n):
            for j in range(n):
                if dbar is not None and dbar[j].dz(i) != mat[i][j]:
                    raise GeometryError("dbar potential does not reproduce alpha", (h, i, j))
                if dphi is not None and dphi[i].dzb(j) != mat[i][j]:
                    raise GeometryError("d potential does not reproduce alpha", (h, i, j))
                for k in range(n):
                    if mat[i][j].dz(k) != mat[k][j].dz(i):
                        raise GeometryError("alpha is not closed", (h, i, j, k))


def u_function(g: ChartGeometry, alpha: AlphaForm, j: int) -> HPoly:
    """``u_j = d_j (rho - phi)`` as a polynomial in hbar."""
    out = HPoly(g.ring, {0: g.d_rho[j]})
    for h, vec in alpha.d_phi.items():
        out = out - HPoly(g.ring, {h: vec[j]})
    return out


# presets -----------------------------------------------------------------------


def flat(n: int) -> ChartGeometry:
    ring = ChartRing(n)
    omega = [[ring.one() if i == j else ring.zero() for j in range(n)] for i in range(n)]
    return ChartGeometry(f"flat:{n}", n, omega, [ring.zb(i) for i in range(n)], [ring.zero() for _ in range(n)])


def cp1() -> ChartGeometry:
    """Fubini-Study chart with potential ``log(1 + z zbar)``."""
    ring = ChartRing(1)
    z, zb = ring.z(0), ring.zb(0)
    q = 1 + z * zb
    return ChartGeometry("cp1", 1, [[q**-2]], [zb / q], [zb * gauss(2) / q])


def disc() -> ChartGeometry:
    """Poincaré disc chart with potential ``-log(1 - z zbar)``."""
    ring = ChartRing(1)
    z, zb = ring.z(0), ring.zb(0)
    q = 1 - z * zb
    return ChartGeometry("disc", 1, [[q**-2]], [zb / q], [zb * gauss(-2) / q])


def custom(name: str, omega, d_rho, d_rho1=None) -> ChartGeometry:
    n = len(omega)
    return ChartGeometry(name, n, omega, d_rho, d_rho1)


def cp1_second_chart_d_rho() -> RationalFn:
    """Holomorphic derivative, in the coordinate z, of the potential of the chart w = 1/z.

    The second chart carries ``log(1 + w wbar)``; its w-derivative ``wbar/(1 + w wbar)``
    is pulled back along ``w = 1/z`` and multiplied by ``dw/dz``.
    """
    ring = ChartRing(1)
    w, wb = ring.z(0), ring.zb(0)
    d_w = wb / (1 + w * wb)
    z, zb = ring.z(0), ring.zb(0)
    pulled = d_w.substitute({0: z.inverse(), 1: zb.inverse()})
    return pulled * (-(z**-2))


def geometry_from_spec(text: str) -> ChartGeometry:
    """Parse ``flat:n``, ``flat``, ``cp1`` or ``disc``."""
    t = text.strip()
    if t == "cp1":
        return cp1()
    if t == "disc":
        return disc()
    if t == "flat":
        return flat(1)
    if t.startswith("flat:"):
        try:
            n = int(t[5:])
        except ValueError:
            raise ValueError(f"bad dimension in geometry {text!r}") from None
        if n < 1:
            raise ValueError("dimension must be positive")
        return flat(n)
    raise ValueError(f"unknown geometry {text!r}; expected flat:n, cp1 or disc")


ALPHA_KINDS = ("zero", "hbar_omega", "berezin_toeplitz")
