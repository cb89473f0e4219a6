"""Command-line driver: ``kquant <subcommand> [options]``.

Exit status is 0 on success, 1 when a check or computation fails and 2 for
usage or parse errors.  ``--format json`` output is deterministic for a fixed
configuration and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import sympy as sp

from .coeffs import HPoly, RationalFn, as_scalar, parse_scalar, scalar_str
from .expr import ParseError, parse_expression
from .geometry import ChartGeometry, GeometryError, geometry_from_spec
from .serialize import (
    SCHEMA,
    CacheError,
    dumps,
    geometry_from_json,
    geometry_to_json,
    hpoly_to_json,
    load_or_solve,
    rf_to_json,
    scalar_to_json,
    section_to_json,
)
from .weyl import NO_TRUNC, Trunc, WeylSection, describe_term

ALPHA_ALIASES = {
    "0": "zero",
    "zero": "zero",
    "hbar_omega": "hbar_omega",
    "hbar*omega": "hbar_omega",
    "h*omega": "hbar_omega",
    "berezin_toeplitz": "berezin_toeplitz",
    "bt": "berezin_toeplitz",
}


class UsageError(ValueError):
    pass


class Failure(RuntimeError):
    """A computation or check that ran but did not succeed (exit status 1)."""


@dataclass
class RunConfig:
    geometry: ChartGeometry
    alpha: str
    level: object
    max_y: int
    max_ybar: int | None
    max_h: int
    fmt: str
    cache: str | None
    seed: int

    def fedosov(self):
        return load_or_solve(self.geometry, self.alpha, self.max_y, self.cache)

    def describe(self) -> dict:
        return {
            "geometry": self.geometry.name,
            "alpha": self.alpha,
            "level": None if self.level is None else scalar_to_json(self.level),
            "max_y_degree": self.max_y,
            "max_h_degree": self.max_h,
            "seed": self.seed,
        }


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("bound must be positive")
    return v


def _nonnegative(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("bound must be non-negative")
    return v


def _level(text: str):
    try:
        v = parse_scalar(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not v:
        raise argparse.ArgumentTypeError("level must be nonzero")
    return v


def load_geometry(text: str) -> ChartGeometry:
    """A preset name or the path of a JSON geometry file."""
    path = Path(text)
    if text.endswith(".json") or path.is_file():
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read geometry file {text}: {exc}") from None
        return geometry_from_json(doc.get("geometry", doc))
    try:
        return geometry_from_spec(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--geometry", default="flat:1", help="flat:n, cp1, disc or a JSON geometry file")
    common.add_argument("--alpha", default="zero", help="zero, hbar_omega or berezin_toeplitz")
    common.add_argument("--level", type=_level, default=None, help="k, so that hbar = 1/k (Gaussian rational)")
    common.add_argument("--max-y-degree", type=_positive, default=5, dest="max_y")
    common.add_argument("--max-ybar-degree", type=_positive, default=None, dest="max_ybar")
    common.add_argument("--max-h-degree", type=_nonnegative, default=2, dest="max_h")
    common.add_argument("--format", choices=["text", "json", "latex"], default="text", dest="fmt")
    common.add_argument("--cache", default=None, help="directory for solved connections")
    common.add_argument("--seed", type=int, default=0)

    p = argparse.ArgumentParser(prog="kquant", description="Fedosov quantization of Kähler charts.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("geometry", parents=[common], help="metric, connection and curvature data")
    sub.add_parser("fedosov", parents=[common], help="solve the Fedosov equation")
    sp_star = sub.add_parser("star", parents=[common], help="star products of two functions")
    sp_star.add_argument("--f", required=True)
    sp_star.add_argument("--g", required=True)
    sp_flat = sub.add_parser("flat", parents=[common], help="flat section of a function")
    sp_flat.add_argument("--fn", required=True)
    sp_q = sub.add_parser("quantize", parents=[common], help="differential operator of a quantizable function")
    sp_q.add_argument("--fn", required=True)
    sp_q.add_argument("--order", type=_positive, default=3, help="largest operator order tried")
    sp_m = sub.add_parser("moment", parents=[common], help="quantum moment section of a symmetry")
    sp_m.add_argument("--symmetry", required=True, help="rotation or translation:i")
    sp_c = sub.add_parser("check", parents=[common], help="run invariant suites")
    sp_c.add_argument("suites", nargs="*", default=["all"])
    sp_c.add_argument("--timings", action="store_true", help="include elapsed times in JSON output")
    return p


def make_config(args) -> RunConfig:
    alpha = ALPHA_ALIASES.get(args.alpha.strip().lower())
    if alpha is None:
        raise UsageError(f"unknown alpha {args.alpha!r}; expected zero, hbar_omega or berezin_toeplitz")
    return RunConfig(load_geometry(args.geometry), alpha, args.level, args.max_y, args.max_ybar, args.max_h, args.fmt, args.cache, args.seed)


# formatting ---------------------------------------------------------------------


def _fn_text(f) -> str:
    if isinstance(f, HPoly):
        return str(f.to_expr())
    return str(f)


def _fn_latex(f) -> str:
    if isinstance(f, HPoly):
        return sp.latex(f.to_expr(sp.Symbol(r"\hbar")))
    return f.latex()


def _fn_json(f):
    return hpoly_to_json(f) if isinstance(f, HPoly) else rf_to_json(f)


def _section_lines(a: WeylSection) -> list[str]:
    if a.is_zero():
        return ["  0"]
    out = []
    for k, v in a:
        out.append(f"  {describe_term(k)}: {v}")
    return out


def emit(cfg: RunConfig, doc: dict, text_lines: list[str], latex_lines: list[str] | None = None) -> None:
    if cfg.fmt == "json":
        full = {"schema": SCHEMA, "config": cfg.describe()}
        full.update(doc)
        print(dumps(full))
    elif cfg.fmt == "latex":
        print("\n".join(latex_lines if latex_lines is not None else text_lines))
    else:
        print("\n".join(text_lines))


def _matrix_text(m) -> list[str]:
    return ["  [" + ", ".join(str(c) for c in row) + "]" for row in m]


# subcommands ---------------------------------------------------------------------


def cmd_geometry(cfg: RunConfig, args) -> int:
    g = cfg.geometry
    n = g.n
    flat_conn = all(not c for mat in g.christoffel for row in mat for c in row)
    lines = [f"geometry {g.name} (n = {n})", "omega[i][j] (coefficient of dz^i dzbar^j):"]
    lines += _matrix_text(g.omega)
    lines += ["inverse pairing:"] + _matrix_text(g.omega_inv)
    if flat_conn:
        lines.append("Christoffel symbols: Gamma = 0")
    else:
        lines.append("Christoffel symbols Gamma^k_ij:")
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    c = g.christoffel[k][i][j]
                    if c:
                        lines.append(f"  Gamma^{k + 1}_{i + 1}{j + 1} = {c}")
    lines.append("curvature R[i][j][k][l] (nonzero entries):")
    curv_entries = _curvature_entries(g)
    lines += [f"  R[{a}][{b}][{c}][{d}] = {v}" for (a, b, c, d), v in curv_entries] or ["  0"]
    lines += ["Ricci form:"] + _matrix_text(g.ricci)
    lines.append("d rho = [" + ", ".join(str(c) for c in g.d_rho) + "]")
    lines.append("d rho1 (rho1 = -log det omega) = [" + ", ".join(str(c) for c in g.d_rho1) + "]")
    doc = {
        "kind": "geometry",
        "geometry": geometry_to_json(g, full=True),
        "flat_connection": flat_conn,
        "curvature": [{"index": list(idx), "value": rf_to_json(v)} for idx, v in curv_entries],
    }
    latex = [r"\omega = " + sp.latex(sp.Matrix([[c.to_expr() for c in row] for row in g.omega]))]
    latex.append(r"\mathrm{Ric} = " + sp.latex(sp.Matrix([[c.to_expr() for c in row] for row in g.ricci])))
    emit(cfg, doc, lines, latex)
    return 0


def _curvature_entries(g: ChartGeometry):
    """Nonzero entries of ``R[i][j][p][q]`` (coefficient of dz^i ∧ dzbar^j), 1-based."""
    out = []

    def walk(obj, idx):
        if isinstance(obj, list):
            for t, sub in enumerate(obj):
                walk(sub, idx + (t + 1,))
        elif obj:
            out.append((idx, obj))

    walk(g.curvature, ())
    return out


def cmd_fedosov(cfg: RunConfig, args) -> int:
    from .fedosov import residual

    fd = cfg.fedosov()
    res = residual(fd)
    I = fd.I if cfg.max_ybar is None else fd.I.restrict(Trunc(max_ybar=cfg.max_ybar))
    I = I.filter(lambda k: k.h <= cfg.max_h + 1)
    kar = fd.karabegov_form()
    lines = [
        f"Fedosov connection on {cfg.geometry.name}, alpha = {cfg.alpha}, through y-degree {fd.max_y}",
        f"residual: {'zero' if res.is_zero() else 'NONZERO'} through y-degree {fd.max_y - 1}",
        "I (terms with hbar-power <= max-h-degree + 1):",
    ]
    lines += _section_lines(I)
    lines.append("Karabegov form (1/hbar)(omega - alpha):")
    for h, mat in sorted(kar.items()):
        lines.append(f"  hbar^{h}: " + "; ".join(", ".join(str(c) for c in row) for row in mat))
    doc = {
        "kind": "fedosov",
        "residual_zero": res.is_zero(),
        "I": section_to_json(I),
        "karabegov": {str(h): [[rf_to_json(c) for c in row] for row in mat] for h, mat in sorted(kar.items())},
    }
    if not res.is_zero():
        doc["residual"] = section_to_json(res)
        lines.append("residual:")
        lines += _section_lines(res)
    emit(cfg, doc, lines, [I.latex()])
    return 0 if res.is_zero() else 1


def _parse(text: str, n: int):
    v = parse_expression(text, n)
    if set(v.coeffs) <= {0}:
        return v[0] if v.coeffs else RationalFn.const(v.ring, 0)
    return v


def cmd_star(cfg: RunConfig, args) -> int:
    from .flatsections import star_of_functions

    n = cfg.geometry.n
    f = _parse(args.f, n)
    g = _parse(args.g, n)
    order = cfg.max_h
    fd = cfg.fedosov()
    if fd.max_y < 2 * order - 1:
        raise Failure(f"hbar-order {order} needs --max-y-degree of at least {2 * order - 1}")
    fg = star_of_functions(fd, f, g, order)
    gf = star_of_functions(fd, g, f, order)
    lines = [f"f*g = {_fn_text(fg)}", f"g*f = {_fn_text(gf)}", f"(through hbar^{order})"]
    latex = [r"f \star g = " + _fn_latex(fg), r"g \star f = " + _fn_latex(gf)]
    if cfg.level is not None:
        lines += [f"at k = {scalar_str(cfg.level)}:", f"  f*g = {fg.evaluate(cfg.level)}", f"  g*f = {gf.evaluate(cfg.level)}"]
    doc = {"kind": "star", "f": args.f, "g": args.g, "order": order, "f_star_g": _fn_json(fg), "g_star_f": _fn_json(gf)}
    emit(cfg, doc, lines, latex)
    return 0


def _quantizable_seed(fd, f, max_deg: int):
    """The y-free part of ``O_f`` when it stabilises between two truncations, else None."""
    from .flatsections import flat_section
    from .weyl import pi_0star

    small = pi_0star(flat_section(fd, f, max_deg).section).with_trunc(NO_TRUNC)
    large = pi_0star(flat_section(fd, f, max_deg + 2).section).with_trunc(NO_TRUNC)
    return small if small == large else None


def cmd_flat(cfg: RunConfig, args) -> int:
    from .flatsections import evaluate_flat, flat_section, quantizability_check

    n = cfg.geometry.n
    f = _parse(args.fn, n)
    fd = cfg.fedosov()
    T = fd.max_y + 1
    fs = flat_section(fd, f, T)
    smaller = flat_section(fd, f, T - 2) if T > 3 else None
    report = quantizability_check(fs, smaller)
    sec = fs.section
    title = f"O_f for f = {_fn_text(f)} through Fedosov degree {T}"
    if cfg.level is not None:
        ev = evaluate_flat(fs, cfg.level)
        sec = ev.section
        title += f", at k = {scalar_str(cfg.level)} (exact through fibre degree {ev.max_deg})"
    if cfg.max_ybar is not None:
        sec = sec.restrict(Trunc(max_ybar=cfg.max_ybar))
    lines = [title, f"quantizability: {report}"] + _section_lines(sec)
    doc = {"kind": "flat", "fn": args.fn, "max_deg": T, "verdict": report.verdict, "bound": report.bound, "section": section_to_json(sec)}
    emit(cfg, doc, lines, [sec.latex()])
    return 0


def quantize_function(cfg: RunConfig, fd, f, order: int):
    """Differential operator of ``O_f`` at level ``cfg.level`` together with a note on its provenance."""
    from .flatsections import level_holomorphic, reconstruct_from_antiholomorphic
    from .fock import quantize_to_diffop
    from .weyl import evaluate_hbar

    g = cfg.geometry
    if cfg.alpha != "berezin_toeplitz" and not (g.is_flat_metric and cfg.alpha == "zero"):
        raise Failure("operators are read off the coherent Fock section, which is flat only for alpha = berezin_toeplitz")
    lv = fd.at_level(cfg.level)
    if isinstance(f, RationalFn) and f.is_holomorphic():
        fs = level_holomorphic(lv, f, order + 1)
        return quantize_to_diffop(lv, fs.section, order, 0), "holomorphic: multiplication operator"
    T = order + 1
    if fd.max_y < T + 2:
        fd = load_or_solve(cfg.geometry, cfg.alpha, T + 2, cfg.cache)
    seed = _quantizable_seed(fd, f, T)
    if seed is None:
        raise Failure("the antiholomorphic part of O_f grows with the truncation; f is not quantizable within the test")
    N = seed.max_ybdeg()
    if N > order:
        raise Failure(f"O_f has ybar-degree {N} > --order {order}")
    sec = reconstruct_from_antiholomorphic(cfg.geometry, evaluate_hbar(seed, cfg.level), N + 1)
    return quantize_to_diffop(lv, sec, max(order, N), N), f"ybar-degree {N}, stable between truncations"


def cmd_quantize(cfg: RunConfig, args) -> int:
    if cfg.level is None:
        raise UsageError("quantize needs --level")
    n = cfg.geometry.n
    f = _parse(args.fn, n)
    fd = cfg.fedosov()
    op, note = quantize_function(cfg, fd, f, args.order)
    lines = [f"quantize({_fn_text(f)}) at k = {scalar_str(cfg.level)} = {op}", f"  ({note})"]
    doc = {"kind": "quantize", "fn": args.fn, "operator": op.to_json(), "note": note}
    emit(cfg, doc, lines, [op.latex()])
    return 0


def cmd_moment(cfg: RunConfig, args) -> int:
    from .fock import quantize_to_diffop
    from .moment import MomentError, build_moment, complete_to_flat, symmetry_from_spec
    from .weyl import evaluate_hbar

    g = cfg.geometry
    try:
        sym = symmetry_from_spec(g, args.symmetry)
    except (MomentError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    fd = cfg.fedosov()
    ms = complete_to_flat(fd, build_moment(fd, sym))
    lines = [f"moment section of {args.symmetry} on {g.name}, alpha = {cfg.alpha}", "s_V:"]
    lines += _section_lines(ms.section)
    doc = {"kind": "moment", "symmetry": args.symmetry, "section": section_to_json(ms.section)}
    status = 0
    if ms.completion_note:
        lines.append(f"completion: {ms.completion_note}")
        doc["completion_note"] = ms.completion_note
        status = 1
    else:
        lines.append(f"completed by adding {_fn_text(ms.correction)}:")
        lines += _section_lines(ms.completed)
        doc["correction"] = hpoly_to_json(ms.correction)
        doc["completed"] = section_to_json(ms.completed)
        doc["ybar_degree"] = ms.completed.max_ybdeg()
        if cfg.level is not None and ms.completed.max_ybdeg() <= 1:
            lv = fd.at_level(cfg.level)
            q = evaluate_hbar(ms.completed.with_trunc(Trunc(max_y=3)), cfg.level)
            op = quantize_to_diffop(lv, q, 2, 1)
            lines.append(f"quantized at k = {scalar_str(cfg.level)}: {op}")
            doc["operator"] = op.to_json()
    emit(cfg, doc, lines, [ms.section.latex()])
    return status


def cmd_check(cfg: RunConfig, args) -> int:
    from .checks import SUITES, CheckConfig, run_suites

    names = args.suites or ["all"]
    bad = [s for s in names if s != "all" and s not in SUITES]
    if bad:
        raise UsageError(f"unknown suite(s) {', '.join(bad)}; choose from all, {', '.join(SUITES)}")
    level = cfg.level if cfg.level is not None else 2
    cc = CheckConfig(cfg.geometry, cfg.alpha, level, cfg.max_y, cfg.seed, cfg.fedosov())
    results = run_suites(cc, names)
    failed = [r for r in results if not r.passed]
    lines = [f"seed {cfg.seed}, geometry {cfg.geometry.name}, alpha {cfg.alpha}, level {scalar_str(as_scalar(level))}"]
    lines += [f"{r.line()}  [{r.elapsed:.2f}s]" for r in results]
    lines.append(f"{len(results) - len(failed)} passed, {len(failed)} failed")
    checks = []
    for r in results:
        d = r.to_json()
        if args.timings:
            d["elapsed"] = round(r.elapsed, 3)
        checks.append(d)
    doc = {"kind": "check", "suites": names, "checks": checks, "passed": not failed}
    emit(cfg, doc, lines)
    return 1 if failed else 0


COMMANDS = {
    "geometry": cmd_geometry,
    "fedosov": cmd_fedosov,
    "star": cmd_star,
    "flat": cmd_flat,
    "quantize": cmd_quantize,
    "moment": cmd_moment,
    "check": cmd_check,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = make_config(args)
        return COMMANDS[args.command](cfg, args)
    except ParseError as exc:
        print(f"kquant: parse error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, GeometryError) as exc:
        print(f"kquant: {exc}", file=sys.stderr)
        return 2
    except CacheError as exc:
        print(f"kquant: cache rejected: {exc}", file=sys.stderr)
        return 1
    except Failure as exc:
        print(f"kquant: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, ValueError, ArithmeticError) as exc:
        print(f"kquant: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
