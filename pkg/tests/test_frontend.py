import json
from importlib import resources
from pathlib import Path

import jsonschema
import pytest
from click.testing import CliRunner

from jetvar.algebra import GradedPoly
from jetvar.frontend import (
    GradingInconsistency,
    IndexArityMismatch,
    TheorySyntaxError,
    UnknownIdentifier,
    parse,
    print_model,
    to_latex,
)
from jetvar.frontend.cli import main
from jetvar.models import builtin

FIXTURES = Path(__file__).parent / "fixtures"
NAMES = ["free-scalar", "maxwell", "yang-mills-su2", "chern-simons-3d", "gravitation-gauge"]

REPORT_SCHEMA = {
    "type": "object",
    "required": ["model", "checks", "engine-version"],
    "additionalProperties": False,
    "properties": {
        "model": {"type": "string"},
        "engine-version": {"type": "string"},
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "status", "residual", "millis"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "status": {"enum": ["pass", "fail"]},
                    "residual": {"type": ["string", "null"]},
                    "millis": {"type": "number", "minimum": 0},
                },
            },
        },
    },
}

HEAD = """model t
dimension 2
range g 3
field a[g,base] even
field y even
field psi odd
"""


def golden(name):
    return resources.files("jetvar").joinpath(f"theories/{name}.theory").read_text()


def run(*args):
    return CliRunner().invoke(main, list(args))


# -- parser -------------------------------------------------------------------------------------


def test_empty_document_needs_dimension():
    with pytest.raises(TheorySyntaxError) as err:
        parse("")
    assert "dimension" in str(err.value)


def test_index_arity_mismatch():
    with pytest.raises(IndexArityMismatch) as err:
        parse(HEAD + "lagrangian = a[r]*a[r]\n")
    info = err.value.as_dict()
    assert info["line"] == 7 and info["column"] == 14
    assert info["excerpt"].splitlines()[1] == " " * 13 + "^"


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier):
        parse(HEAD + "lagrangian = b*y\n")


def test_odd_lagrangian_is_a_grading_error():
    with pytest.raises(GradingInconsistency):
        parse(HEAD + "lagrangian = psi*y\n")


def test_derivation_parity_is_checked():
    with pytest.raises(GradingInconsistency):
        parse(HEAD + "derivation s even {\n  y -> psi\n}\n")


def test_syntax_error_lists_expected_tokens():
    with pytest.raises(TheorySyntaxError) as err:
        parse(HEAD + "lagrangian = y*(y + \n")
    assert err.value.expected


def test_offsets_count_bytes():
    text = "# été\n" + HEAD + "lagrangian = q\n"
    with pytest.raises(UnknownIdentifier) as err:
        parse(text)
    assert err.value.offset == text.encode().index(b"q\n")


def test_index_used_three_times():
    with pytest.raises(IndexArityMismatch):
        parse(HEAD + "lagrangian = a[r,0]*a[r,0]*a[r,1]\n")


def test_jet_suffix_is_symmetric():
    m1 = parse(HEAD + "lagrangian = y*y[;01]\n")
    m2 = parse(HEAD + "lagrangian = y*y[;1,0]\n")
    assert m1.lagrangian == m2.lagrangian


def test_summation_and_macros():
    m = parse(HEAD + "param h[g,g] killing = delta\nlet sq[r] = a[r,0]*a[r,0]\nlagrangian = h[r,s]*a[r,0]*a[s,0] - sq[0]\n")
    text = str(m.lagrangian.coefficient)
    assert text == "a[1,0]^2 + a[2,0]^2"


def test_parse_is_deterministic():
    text = golden("chern-simons-3d")
    assert parse(text) == parse(text)


@pytest.mark.parametrize("name", NAMES)
def test_golden_file_matches_builtin(name):
    assert parse(golden(name)) == builtin(name)


@pytest.mark.parametrize("name", NAMES)
def test_print_parse_round_trip(name):
    m = builtin(name)
    assert parse(print_model(m)) == m


def test_latex_rendering():
    m = builtin("yang-mills-su2")
    abar = m.theory.antifields[m.fields[1]]
    assert to_latex(GradedPoly.var(abar)) == r"\bar{a}_{01}"
    assert to_latex(GradedPoly.var(abar), physics=True) == r"\bar{a}_{12}"
    y = builtin("free-scalar").fields[0]
    assert to_latex(GradedPoly.var(y.with_jet((0, 1))).scale(-2)) == "-2 y_{,01}"


# -- command line ------------------------------------------------------------------------------------


def test_el_latex_for_free_scalar():
    res = run("el", "--model", "free-scalar", "--format", "latex")
    assert res.exit_code == 0
    assert res.output.strip() == "-y_{,00} + y_{,11}"


def test_verify_report_is_schema_valid():
    res = run("verify", "--model", "yang-mills-su2", "--format", "json")
    assert res.exit_code == 0
    report = json.loads(res.output)
    jsonschema.validate(report, REPORT_SCHEMA)
    assert {c["status"] for c in report["checks"]} == {"pass"}


def test_verify_accepts_builtin_name_or_file():
    assert run("verify", "maxwell").exit_code == 0
    assert run("verify", str(FIXTURES / "maxwell-reducible.theory")).exit_code == 0


def test_verify_order_is_independent_of_jobs():
    one = json.loads(run("verify", "chern-simons-3d", "--format", "json").output)
    many = json.loads(run("verify", "chern-simons-3d", "--format", "json", "--jobs", "3").output)
    assert [c["name"] for c in one["checks"]] == [c["name"] for c in many["checks"]]
    assert [c["status"] for c in one["checks"]] == [c["status"] for c in many["checks"]]


def test_broken_jacobi_exits_one_with_residual():
    res = run("brst", str(FIXTURES / "broken-jacobi.theory"))
    assert res.exit_code == 1
    assert "residual: a[0,0]: 1/2*a[1,0]*c[0]*c[1]" in res.output
    res = run("verify", str(FIXTURES / "broken-jacobi.theory"), "--format", "json")
    assert res.exit_code == 1
    jsonschema.validate(json.loads(res.output), REPORT_SCHEMA)


def test_parse_error_exits_two():
    res = run("el", str(FIXTURES / "bad-arity.theory"))
    assert res.exit_code == 2
    res = run("el", str(FIXTURES / "bad-arity.theory"), "--format", "json")
    assert res.exit_code == 2
    err = json.loads(res.output)
    assert err["error"] == "IndexArityMismatch" and err["offset"] == 66


@pytest.mark.parametrize("args", [
    ["el"],
    ["el", "--model", "no-such-model"],
    ["el", "missing.theory"],
    ["symmetry", "--model", "free-scalar", "--derivation", "boost"],
    ["el", "--model", "free-scalar", "--format", "yaml"],
    ["kt", "--model", "free-scalar"],
])
def test_usage_errors_exit_two(args):
    assert run(*args).exit_code == 2


def test_jet_cap_exits_two():
    assert run("el", "--model", "maxwell", "--max-jet-order", "1").exit_code == 2
    assert run("el", "--model", "maxwell", "--max-jet-order", "2").exit_code == 0


def test_symmetry_command():
    res = run("symmetry", "--model", "free-scalar", "--derivation", "translation")
    assert (res.exit_code, res.output.strip()) == (0, "yes")
    res = run("symmetry", "--model", "yang-mills-su2", "--derivation", "colour1", "--format", "json")
    assert json.loads(res.output)["symmetry"] is True


def test_current_command():
    res = run("current", "--model", "free-scalar", "--derivation", "translation")
    assert res.exit_code == 0
    assert res.output.splitlines() == ["J^0: 1/2*y[;0]^2 + 1/2*y[;1]^2", "J^1: -y[;0]*y[;1]"]


@pytest.mark.parametrize("cmd", ["ni", "kt", "brst", "master"])
def test_check_commands_pass_on_yang_mills(cmd):
    res = run(cmd, "--model", "yang-mills-su2", "--format", "json")
    assert res.exit_code == 0
    jsonschema.validate(json.loads(res.output), REPORT_SCHEMA)


def test_extend_command_matches_builtin():
    res = run("extend", "--model", "maxwell")
    assert res.exit_code == 0
    assert res.output.strip() == str(builtin("maxwell").extended.coefficient)
