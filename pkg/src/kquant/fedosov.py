"""Fedosov connections of Wick type on a Kähler chart.

For a closed (1,1)-form ``alpha`` with hbar-dependent coefficients the connection is

    D = nabla - delta + (1/hbar) [I, -]

where ``I`` is a (0,1)-form valued in the Weyl bundle, normalised by
``delta10_inv(I) = 0`` and without y-free terms, solving

    nabla I - delta I + (1/hbar) I * I + R = -alpha.

Equivalently, with ``gamma = gamma0 + I`` (``gamma0`` from :func:`weyl.gamma0`),
``D = nabla + (1/hbar)[gamma, -]`` and the Weyl curvature
``nabla gamma + (1/hbar) gamma * gamma + R`` equals the central form ``omega - alpha``.

The (1,1) component of the equation is linear in ``I``,
``delta10 I = nabla10 I + R + alpha``, and is solved by fixpoint iteration of
``I = delta10_inv(R + alpha + nabla10 I)``.  The part of ``I`` that is linear in
ybar comes from the curvature, the ybar-free part ``J`` from ``alpha``.  The
(0,2) component is verified, not imposed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .coeffs import HPoly, as_scalar, gauss, hbar_at
from .geometry import AlphaForm, ChartGeometry, alpha_form, check_alpha
from .weyl import (
    NO_TRUNC,
    Trunc,
    WeylContext,
    WeylSection,
    bracket,
    curvature_section,
    delta,
    delta10_inv,
    evaluate_hbar,
    gamma0,
    hbar_divide,
    iterate_nabla_tilde,
    nabla,
    nabla10,
    one_form,
    star,
    two_form,
)


class FedosovError(RuntimeError):
    pass


def alpha_section(g: ChartGeometry, alpha: AlphaForm, trunc: Trunc = NO_TRUNC, hbar=None) -> WeylSection:
    out = WeylSection.zero(WeylContext.of(g), trunc, hbar)
    for h, mat in sorted(alpha.matrix.items()):
        out = out + two_form(g, mat, h, trunc, hbar)
    return out


def omega_section(g: ChartGeometry, trunc: Trunc = NO_TRUNC, hbar=None) -> WeylSection:
    return two_form(g, g.omega, 0, trunc, hbar)


@dataclass
class FedosovData:
    """Solved Fedosov data through fibre y-degree ``max_y``."""

    geometry: ChartGeometry
    alpha: AlphaForm
    max_y: int
    I: WeylSection
    meta: dict = field(default_factory=dict)

    @property
    def ctx(self) -> WeylContext:
        return WeylContext.of(self.geometry)

    @property
    def i_part(self) -> WeylSection:
        """The ybar-linear part (curvature driven)."""
        return self.I.filter(lambda k: k.ybdeg == 1)

    @property
    def j_part(self) -> WeylSection:
        """The ybar-free part (driven by alpha)."""
        return self.I.filter(lambda k: k.ybdeg == 0)

    @property
    def gamma(self) -> WeylSection:
        return gamma0(self.geometry, self.I.trunc) + self.I

    def trunc(self) -> Trunc:
        return Trunc(max_y=self.max_y, max_ybar=1)

    def connection(self, a: WeylSection, trunc: Trunc | None = None) -> WeylSection:
        """``D a = nabla a - delta a + (1/hbar)[I, a]`` for a formal section ``a``."""
        t = a.trunc if trunc is None else trunc
        b = bracket(self.I, a, trunc=_hbar_room(t))
        return (nabla(a, self.geometry) - delta(a)).restrict(t) + hbar_divide(b).restrict(t)

    def at_level(self, k: int) -> "LevelData":
        return LevelData(self, k)

    def karabegov_form(self) -> dict[int, list]:
        """``(1/hbar)(omega - alpha)`` as ``{hbar power: matrix}`` (powers may be -1)."""
        g = self.geometry
        n = g.n
        out = {-1: [row[:] for row in g.omega]}
        for h, mat in self.alpha.matrix.items():
            cur = out.get(h - 1, [[g.ring.zero()] * n for _ in range(n)])
            out[h - 1] = [[cur[i][j] - mat[i][j] for j in range(n)] for i in range(n)]
        return {h: m for h, m in out.items() if any(c for row in m for c in row)}

    def cache_key(self) -> str:
        payload = json.dumps({"geometry": self.geometry.name, "alpha": self.alpha.kind, "max_y": self.max_y})
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _hbar_room(t: Trunc) -> Trunc:
    """Truncation for a bracket that will be divided by hbar once."""
    return Trunc(
        t.max_y,
        t.max_ybar,
        None if t.max_h is None else t.max_h + 1,
        None if t.max_deg is None else t.max_deg + 2,
    )


def resolve_alpha(g: ChartGeometry, alpha) -> AlphaForm:
    if isinstance(alpha, AlphaForm):
        return alpha
    return alpha_form(g, alpha)


def solve_fedosov(g: ChartGeometry, alpha="zero", max_y: int = 5, verify: bool = True) -> FedosovData:
    """Solve for ``I`` through y-degree ``max_y`` and (optionally) verify the residual."""
    alpha = resolve_alpha(g, alpha)
    check_alpha(g, alpha)
    t = Trunc(max_y=max_y, max_ybar=1)
    source = (curvature_section(g, t) + alpha_section(g, alpha, t)).restrict(t)
    cur = WeylSection.zero(WeylContext.of(g), t)
    for _ in range(max_y + 2):
        nxt = delta10_inv(source + nabla10(cur, g)).restrict(t)
        if nxt == cur:
            break
        cur = nxt
    else:
        raise FedosovError("fixpoint iteration did not stabilise")
    fd = FedosovData(g, alpha, max_y, cur)
    j_series = j_from_potential(g, alpha, max_y)
    if not (fd.j_part == j_series):
        raise FedosovError("ybar-free part disagrees with the potential series")
    if verify:
        res = residual(fd)
        if not res.is_zero():
            raise FedosovError(f"Fedosov residual is nonzero: {res}")
    return fd


def j_from_potential(g: ChartGeometry, alpha: AlphaForm, max_y: int) -> WeylSection:
    """``sum_{k>=1} (nabla_tilde10)^k (dbar phi)`` through y-degree ``max_y``."""
    t = Trunc(max_y=max_y, max_ybar=1)
    out = WeylSection.zero(WeylContext.of(g), t)
    for h, vec in alpha.dbar_phi.items():
        seed = one_form(g, anti=vec, h=h, trunc=t)
        out = out + iterate_nabla_tilde(seed, g, max_y, include_zero=False)
    return out


def curvature_expression(fd: FedosovData, trunc: Trunc) -> WeylSection:
    """``nabla gamma + (1/hbar) gamma * gamma + R`` restricted to ``trunc``."""
    g = fd.geometry
    gam = fd.gamma
    sq = star(gam, gam, trunc=_hbar_room(trunc))
    return (nabla(gam, g).restrict(trunc) + hbar_divide(sq).restrict(trunc) + curvature_section(g, trunc)).restrict(trunc)


def residual(fd: FedosovData) -> WeylSection:
    """``nabla gamma + gamma*gamma/hbar + R - (omega - alpha)`` through y-degree ``max_y - 1``."""
    g = fd.geometry
    t = Trunc(max_y=fd.max_y - 1, max_ybar=2)
    central = (omega_section(g, t) - alpha_section(g, fd.alpha, t))
    return curvature_expression(fd, t) - central


def measured_central_curvature(fd: FedosovData) -> WeylSection:
    """Fibre-constant part of the Weyl curvature computed from the solved connection."""
    t = Trunc(max_y=fd.max_y - 1, max_ybar=2)
    return curvature_expression(fd, t).filter(lambda k: not any(k.y) and not any(k.yb))


def measured_karabegov_form(fd: FedosovData) -> dict[int, list]:
    """Coefficient matrices of ``(1/hbar) * central curvature``, keyed by hbar power."""
    g = fd.geometry
    n = g.n
    cc = measured_central_curvature(fd)
    out: dict[int, list] = {}
    for k, v in cc.terms.items():
        if len(k.dz) != 1 or len(k.dzb) != 1:
            raise FedosovError("central curvature is not a (1,1)-form")
        m = out.setdefault(k.h - 1, [[g.ring.zero()] * n for _ in range(n)])
        m[k.dz[0]][k.dzb[0]] = m[k.dz[0]][k.dzb[0]] + v
    return out


def trace_of(section: WeylSection, g: ChartGeometry) -> WeylSection:
    """``sum omega_inv[i][k] d/dy^i d/dybar^k`` applied fibrewise."""
    n = g.n
    acc: dict = {}
    for key, v in section.terms.items():
        for i in range(n):
            if not key.y[i]:
                continue
            for k in range(n):
                if not key.yb[k] or not g.omega_inv[i][k]:
                    continue
                ny = tuple(e - (1 if a == i else 0) for a, e in enumerate(key.y))
                nyb = tuple(e - (1 if a == k else 0) for a, e in enumerate(key.yb))
                nk = key._replace(y=ny, yb=nyb)
                val = (v * g.omega_inv[i][k]).scale(gauss(key.y[i] * key.yb[k]))
                acc[nk] = acc[nk] + val if nk in acc else val
    return WeylSection(section.ctx, acc, section.trunc, section.hbar)


def trace_pattern(fd: FedosovData) -> list[tuple[int, WeylSection, WeylSection]]:
    """Pairs ``(J_n, hbar * trace(I_{n+1}))`` for the Berezin-Toeplitz form.

    The ybar-free part of ``I`` in y-degree n equals hbar times the trace of its
    ybar-linear part in y-degree n+1.
    """
    out = []
    for n_deg in range(1, fd.max_y):
        jn = fd.j_part.filter(lambda k, d=n_deg: k.ydeg == d)
        inext = fd.i_part.filter(lambda k, d=n_deg + 1: k.ydeg == d)
        tr = trace_of(inext, fd.geometry)
        tr = WeylSection(tr.ctx, {k._replace(h=k.h + 1): v for k, v in tr.terms.items()}, NO_TRUNC)
        out.append((n_deg, jn.with_trunc(NO_TRUNC), tr))
    return out


class LevelData:
    """Fedosov data evaluated at hbar = 1/k."""

    def __init__(self, fd: FedosovData, k: int):
        self.fd = fd
        self.k = k
        self.geometry = fd.geometry
        self.hbar = hbar_at(k)
        self.I = evaluate_hbar(fd.I, k)
        self.ctx = fd.ctx

    @property
    def gamma(self) -> WeylSection:
        return gamma0(self.geometry, self.I.trunc, self.hbar) + self.I

    def connection(self, a: WeylSection, trunc: Trunc | None = None) -> WeylSection:
        """``D a = nabla a - delta a + k [I_k, a]`` with the Wick product at hbar = 1/k."""
        t = a.trunc if trunc is None else trunc
        b = bracket(self.I, a, trunc=t)
        return (nabla(a, self.geometry) - delta(a)).restrict(t) + b.scale(as_scalar(self.k))

    def function(self, f) -> WeylSection:
        if isinstance(f, HPoly):
            f = f.evaluate(self.k)
        return WeylSection.function(self.ctx, f, NO_TRUNC, self.hbar)
