"""JSON persistence for coefficients, sections, geometries and solved connections.

Rationals are written as decimal strings ``"p/q"``; a Gaussian rational is a
pair ``[re, im]``.  Every top-level document carries a ``"schema"`` field.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .coeffs import ChartRing, HPoly, RationalFn, scalar_from_parts, scalar_parts
from .fedosov import FedosovData, j_from_potential, residual, resolve_alpha
from .geometry import ChartGeometry, custom, geometry_from_spec
from .weyl import TermIndex, Trunc, WeylContext, WeylSection

SCHEMA = "kquant/1"


class CacheError(RuntimeError):
    pass


def dumps(doc) -> str:
    """Deterministic JSON text."""
    return json.dumps(doc, sort_keys=True, indent=1, ensure_ascii=False)


def scalar_to_json(c) -> list[str]:
    return list(scalar_parts(c))


def scalar_from_json(d):
    return scalar_from_parts(d[0], d[1])


def _poly_to_json(terms) -> list:
    return [[list(m), scalar_to_json(c)] for m, c in terms]


def rf_to_json(f: RationalFn) -> dict:
    return {
        "num": _poly_to_json(f.numerator_terms()),
        "den": [[_poly_to_json((m, c) for m, c in items), e] for items, e in f.denominator_factors()],
    }


def _poly_from_json(ring: ChartRing, terms) -> RationalFn:
    p = ring.RI.from_dict({tuple(m): scalar_from_json(c) for m, c in terms})
    return RationalFn._from_poly_any(p)


def rf_from_json(ring: ChartRing, d: dict) -> RationalFn:
    out = _poly_from_json(ring, d["num"])
    for terms, e in d["den"]:
        out = out / _poly_from_json(ring, terms) ** e
    return out


def hpoly_to_json(p: HPoly) -> dict:
    return {str(k): rf_to_json(v) for k, v in sorted(p.coeffs.items())}


def hpoly_from_json(ring: ChartRing, d: dict) -> HPoly:
    return HPoly(ring, {int(k): rf_from_json(ring, v) for k, v in d.items()})


def _multiset(exps) -> list[int]:
    out = []
    for i, e in enumerate(exps):
        out.extend([i + 1] * e)
    return out


def _exponents(ms, n: int) -> tuple:
    exps = [0] * n
    for i in ms:
        exps[i - 1] += 1
    return tuple(exps)


def _trunc_to_json(t: Trunc) -> dict:
    return {"maxY": t.max_y, "maxYbar": t.max_ybar, "maxH": t.max_h, "maxDeg": t.max_deg}


def _trunc_from_json(d: dict) -> Trunc:
    return Trunc(d.get("maxY"), d.get("maxYbar"), d.get("maxH"), d.get("maxDeg"))


def section_to_json(a: WeylSection) -> dict:
    terms = []
    for k in sorted(a.terms, key=lambda k: (k.form_degree, k.dz, k.dzb, k.fiber_degree, k.y, k.yb, k.h)):
        terms.append(
            {
                "dzI": [i + 1 for i in k.dz],
                "dzbarJ": [j + 1 for j in k.dzb],
                "yK": _multiset(k.y),
                "ybarL": _multiset(k.yb),
                "hpow": k.h,
                "coeff": rf_to_json(a.terms[k]),
            }
        )
    return {
        "n": a.n,
        "hbar": None if a.hbar is None else scalar_to_json(a.hbar),
        "trunc": _trunc_to_json(a.trunc),
        "terms": terms,
    }


def section_from_json(d: dict, ctx: WeylContext | None = None) -> WeylSection:
    n = d["n"]
    ring = ChartRing(n)
    if ctx is None:
        from .weyl import flat_context

        ctx = flat_context(n)
    terms = {}
    for t in d["terms"]:
        key = TermIndex(
            tuple(i - 1 for i in t["dzI"]),
            tuple(j - 1 for j in t["dzbarJ"]),
            _exponents(t["yK"], n),
            _exponents(t["ybarL"], n),
            t["hpow"],
        )
        terms[key] = rf_from_json(ring, t["coeff"])
    hbar = None if d.get("hbar") is None else scalar_from_json(d["hbar"])
    return WeylSection(ctx, terms, _trunc_from_json(d.get("trunc", {})), hbar)


def _matrix_to_json(m) -> list:
    return [[rf_to_json(c) for c in row] for row in m]


def geometry_to_json(g: ChartGeometry, full: bool = False) -> dict:
    doc = {
        "name": g.name,
        "n": g.n,
        "omega": _matrix_to_json(g.omega),
        "d_rho": [rf_to_json(c) for c in g.d_rho],
        "d_rho1": [rf_to_json(c) for c in g.d_rho1],
    }
    if full:
        doc["omega_inv"] = _matrix_to_json(g.omega_inv)
        doc["christoffel"] = [_matrix_to_json(m) for m in g.christoffel]
        doc["ricci"] = _matrix_to_json(g.ricci)
    return doc


def geometry_from_json(d: dict) -> ChartGeometry:
    n = d["n"]
    ring = ChartRing(n)
    omega = [[rf_from_json(ring, c) for c in row] for row in d["omega"]]
    d_rho = [rf_from_json(ring, c) for c in d["d_rho"]]
    d_rho1 = [rf_from_json(ring, c) for c in d["d_rho1"]] if "d_rho1" in d else None
    try:
        preset = geometry_from_spec(d["name"])
    except ValueError:
        preset = None
    if preset is not None and preset.omega == omega and preset.d_rho == d_rho:
        return preset
    return custom(d["name"], omega, d_rho, d_rho1)


def fedosov_to_json(fd: FedosovData) -> dict:
    body = section_to_json(fd.I)
    digest = hashlib.sha256(dumps(body).encode()).hexdigest()
    return {
        "schema": SCHEMA,
        "kind": "fedosov",
        "geometry": geometry_to_json(fd.geometry),
        "alpha": fd.alpha.kind,
        "max_y": fd.max_y,
        "I": body,
        "digest": digest,
    }


def fedosov_from_json(doc: dict, g: ChartGeometry | None = None) -> FedosovData:
    """Rebuild cached data and re-verify it; any mismatch raises :class:`CacheError`."""
    if doc.get("schema") != SCHEMA or doc.get("kind") != "fedosov":
        raise CacheError(f"unsupported cache document (schema {doc.get('schema')!r})")
    if g is None:
        g = geometry_from_json(doc["geometry"])
    alpha = resolve_alpha(g, doc["alpha"])
    I = section_from_json(doc["I"], WeylContext.of(g))
    fd = FedosovData(g, alpha, doc["max_y"], I.with_trunc(Trunc(max_y=doc["max_y"], max_ybar=1)))
    if hashlib.sha256(dumps(doc["I"]).encode()).hexdigest() != doc.get("digest"):
        raise CacheError("cache digest mismatch")
    j = j_from_potential(g, alpha, fd.max_y)
    if not fd.j_part == j:
        raise CacheError(f"cached ybar-free part disagrees with the potential series: {fd.j_part - j}")
    res = residual(fd)
    if not res.is_zero():
        raise CacheError(f"cached connection fails the residual check: {res}")
    return fd


def cache_path(cache_dir, g: ChartGeometry, alpha: str, max_y: int) -> Path:
    key = hashlib.sha256(dumps(geometry_to_json(g)).encode()).hexdigest()[:12]
    safe = g.name.replace(":", "-").replace("/", "_")
    return Path(cache_dir) / f"fedosov-{safe}-{alpha}-y{max_y}-{key}.json"


def load_or_solve(g: ChartGeometry, alpha: str, max_y: int, cache_dir=None) -> FedosovData:
    """Solve the Fedosov equation, consulting and filling an on-disk cache."""
    from .fedosov import solve_fedosov

    if cache_dir is None:
        return solve_fedosov(g, alpha, max_y)
    path = cache_path(cache_dir, g, alpha, max_y)
    if path.exists():
        return fedosov_from_json(json.loads(path.read_text()), g)
    fd = solve_fedosov(g, alpha, max_y)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(fedosov_to_json(fd)))
    return fd

