"""Command-line driver and the check runner."""

import json

import pytest

from kquant.checks import CheckConfig, run_suites
from kquant.cli import main
from kquant.serialize import cache_path, dumps, geometry_to_json
from kquant.weyl import WeylSection

from conftest import geometry


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_geometry_flat_has_no_connection(capsys):
    code, out, _ = run(capsys, "geometry", "--geometry", "flat:2")
    assert code == 0 and "Gamma = 0" in out


def test_geometry_cp1_curvature_table(capsys):
    code, out, _ = run(capsys, "geometry", "--geometry", "cp1")
    assert code == 0
    assert "R[1][1][1][1] = 2/(z1*zb1 + 1)**4" in out
    assert "Gamma^1_11 = -2*zb1/(z1*zb1 + 1)" in out


@pytest.mark.parametrize(
    "argv",
    [
        ["geometry", "--geometry", "sphere"],
        ["star", "--f", "z1 +", "--g", "z1"],
        ["fedosov", "--alpha", "omega"],
        ["quantize", "--fn", "zb1"],
        ["quantize", "--fn", "zb1", "--level", "0"],
        ["moment", "--symmetry", "rotation", "--geometry", "flat:2"],
        ["check", "nonsense"],
        ["frobnicate"],
        ["star", "--f", "z1", "--g", "z5"],
    ],
)
def test_usage_errors_exit_2(capsys, argv):
    code, _, _ = run(capsys, *argv)
    assert code == 2


def test_star_ordered_pair(capsys):
    code, out, _ = run(capsys, "star", "--f", "zb1", "--g", "z1", "--geometry", "flat:1")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "f*g = z1*zb1"
    assert lines[1] == "g*f = h + z1*zb1"


def test_quantize_antiholomorphic_coordinate(capsys):
    code, out, _ = run(capsys, "quantize", "--fn", "zb1", "--level", "3")
    assert code == 0 and "= (-1/3)*d1" in out
    code, out, _ = run(capsys, "quantize", "--fn", "zb1", "--level", "3", "--format", "latex")
    assert out.strip() == r"\left(- \frac{1}{3}\right) \partial_{1}"


def test_quantize_reports_non_quantizable(capsys):
    code, _, err = run(capsys, "quantize", "--fn", "zb1", "--level", "2", "--geometry", "cp1", "--alpha", "bt")
    assert code == 1 and "not quantizable" in err
    code, out, _ = run(capsys, "quantize", "--fn", "(1-2*h)*zb1/(1+z1*zb1)", "--level", "2", "--geometry", "cp1", "--alpha", "bt")
    assert code == 0 and "(-1/2)*d1" in out


def test_flat_listing(capsys):
    code, out, _ = run(capsys, "flat", "--fn", "z1^2")
    assert code == 0
    assert "exact_bound(0)" in out
    assert "  y1^2: 1" in out.splitlines()


def test_moment_command(capsys):
    code, out, _ = run(capsys, "moment", "--symmetry", "rotation", "--level", "2")
    assert code == 0
    assert "quantized at k = 2: (I/4) + (I*z1/2)*d1" in out


def test_json_output_is_deterministic(capsys):
    argv = ["fedosov", "--geometry", "cp1", "--alpha", "berezin_toeplitz", "--max-y-degree", "4", "--format", "json"]
    _, first, _ = run(capsys, *argv)
    _, second, _ = run(capsys, *argv)
    assert first == second
    doc = json.loads(first)
    assert doc["schema"] == "kquant/1" and doc["residual_zero"]
    argv = ["check", "weyl", "fock", "--geometry", "disc", "--seed", "5", "--format", "json"]
    _, a, _ = run(capsys, *argv)
    _, b, _ = run(capsys, *argv)
    assert a == b and json.loads(a)["passed"]


def test_check_all_flat(capsys):
    code, out, _ = run(capsys, "check", "all", "--geometry", "flat:1")
    assert code == 0
    assert "0 failed" in out


def test_check_fedosov_cp1(capsys):
    code, out, _ = run(capsys, "check", "fedosov", "--geometry", "cp1", "--max-y-degree", "5")
    assert code == 0
    assert "PASS  fedosov.residual  (through y-degree 4)" in out


def test_tampered_cache_fails(capsys, tmp_path):
    argv = ["fedosov", "--geometry", "disc", "--alpha", "bt", "--max-y-degree", "4", "--cache", str(tmp_path)]
    assert run(capsys, *argv)[0] == 0
    path = cache_path(tmp_path, geometry("disc"), "berezin_toeplitz", 4)
    doc = json.loads(path.read_text())
    doc["I"]["terms"][0]["coeff"]["num"][0][1] = ["3", "0"]
    path.write_text(dumps(doc))
    code, _, err = run(capsys, *argv)
    assert code == 1 and "cache rejected" in err


def test_custom_geometry_file(capsys, tmp_path):
    path = tmp_path / "disc.json"
    doc = geometry_to_json(geometry("disc"))
    doc["name"] = "my-disc"
    path.write_text(dumps(doc))
    code, out, _ = run(capsys, "check", "geometry", "fedosov", "--geometry", str(path))
    assert code == 0 and "my-disc" in out


def test_failing_check_is_reported():
    cfg = CheckConfig(geometry("flat:1"), "zero", 2, 5, 0)
    fd = cfg.fd()
    fd.I = WeylSection.monomial(fd.ctx, 1, dzb=(0,), y=(2,), yb=(0,))
    results = {r.name: r for r in run_suites(cfg, ["fedosov"])}
    assert not results["fedosov.residual"].passed
    assert "difference" in results["fedosov.residual"].payload
