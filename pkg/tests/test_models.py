import itertools
from fractions import Fraction
from importlib import resources

import pytest

from jetvar.algebra import GradedPoly, Kind
from jetvar.brst import check_master_equation
from jetvar.errors import UnknownModel
from jetvar.frontend import parse
from jetvar.models import (
    BUILTINS,
    Param,
    builtin,
    chern_simons_printed_brst,
    corrupted_yang_mills,
    free_scalar,
    levi_civita_values,
    parameter_problems,
    verify_model,
    yang_mills,
)
from jetvar.symmetry import is_nilpotent, nilpotency_residuals

NAMES = ["free-scalar", "maxwell", "yang-mills-su2", "chern-simons-3d", "gravitation-gauge"]


def golden(name):
    return resources.files("jetvar").joinpath(f"theories/{name}.theory").read_text()


def test_gallery_names():
    assert sorted(BUILTINS) == sorted(NAMES)
    with pytest.raises(UnknownModel):
        builtin("quantum-gravity")


@pytest.mark.parametrize("name", NAMES)
def test_every_builtin_verifies(name):
    report = verify_model(builtin(name))
    failed = [(c.name, c.residual) for c in report.checks if not c.passed]
    assert failed == []
    assert report.checks


def test_yang_mills_roster():
    m = builtin("yang-mills-su2")
    assert m.dim == 4
    assert len(m.fields) == 12
    assert all(v.parity == 0 for v in m.fields)
    ghosts = m.theory.ghosts[0]
    assert [g.parity for g in ghosts] == [1, 1, 1] and all(g.ghost == 1 for g in ghosts)
    cbar = m.theory.ghost_antifields[0][0]
    assert (cbar.parity, cbar.ghost, cbar.antifield) == (0, -2, 2)
    abar = m.theory.antifields[m.fields[0]]
    assert (abar.parity, abar.ghost, abar.antifield) == (1, -1, 1)


def test_free_scalar_dimension_is_configurable():
    m = free_scalar(3)
    assert m.dim == 3
    assert verify_model(m).passed


def test_maxwell_gauge_operator_is_nilpotent():
    assert is_nilpotent(builtin("maxwell").derivation("gauge"))


def test_jacobi_violation_breaks_brst():
    m = corrupted_yang_mills()
    res = nilpotency_residuals(m.derivation("brst"))
    assert res
    report = verify_model(m)
    status = {c.name: c for c in report.checks}
    assert not status["brst-nilpotency"].passed
    assert status["brst-nilpotency"].residual
    assert not status["parameters"].passed


def test_every_single_structure_constant_mutation_breaks_brst():
    for entry in itertools.product(range(3), repeat=3):
        assert not is_nilpotent(corrupted_yang_mills(entry).derivation("brst")), entry


def test_deleting_ghost_term_breaks_brst():
    b = builtin("yang-mills-su2").derivation("brst")
    crippled = b.restricted(lambda v: v.kind != Kind.GHOST)
    res = nilpotency_residuals(crippled)
    assert res
    # every residual is quadratic in the ghosts
    assert all(len(odd) == 2 for p in res.values() for (_, odd) in p.terms)


def test_parameter_checks():
    assert parameter_problems(Param("f", ("g",) * 3, "structure", levi_civita_values(3)), {"g": 3}) == []
    bad = dict(levi_civita_values(3))
    bad[(0, 1, 2)] = 2
    assert parameter_problems(Param("f", ("g",) * 3, "structure", bad), {"g": 3})
    singular = Param("g", ("base", "base"), "metric", {(0, 0): 1})
    assert parameter_problems(singular, {"base": 2})
    lopsided = Param("g", ("base", "base"), "metric", {(0, 1): 1, (1, 0): 2})
    assert parameter_problems(lopsided, {"base": 2})


def test_yang_mills_accepts_other_metrics():
    m = yang_mills(metric=[1, 1, 1, 1], name="yang-mills-euclidean")
    assert verify_model(m).passed


# -- the printed forms of some operators ---------------------------------------------------


def test_chern_simons_brst_needs_colour_ghost_transport():
    res = nilpotency_residuals(chern_simons_printed_brst())
    assert res
    for p in res.values():
        for (_, odd) in p.terms:
            names = sorted(v.name for v in odd)
            assert names == ["c", "xi"]
    assert is_nilpotent(builtin("chern-simons-3d").derivation("brst"))


def test_printed_yang_mills_extension_fails_master_equation():
    text = golden("yang-mills-su2").replace(
        "let U[r,l] = -f[r,j,i]*c[j]*a[i,l] + c[r;l]", "let U[r,l] = -f[r,i,j]*c[j]*a[i,l] + c[r;l]")
    printed = parse(text)
    assert printed.extended != builtin("yang-mills-su2").extended
    assert not check_master_equation(printed.extended, printed.theory)
    assert check_master_equation(builtin("yang-mills-su2").extended, printed.theory)


def test_printed_chern_simons_extension_fails_master_equation():
    text = golden("chern-simons-3d").replace(
        "let B[r] = -1/2*f[r,i,j]*c[i]*c[j] - xi[m]*c[r;m]", "let B[r] = -1/2*f[r,i,j]*c[i]*c[j]")
    printed = parse(text)
    assert not check_master_equation(printed.extended, printed.theory)


# -- structural equality ------------------------------------------------------------------------


def test_model_equality_reports_differences():
    a = builtin("maxwell")
    b = parse(golden("maxwell").replace("ni c = -d[l](E(a[l]))", "ni c = d[l](E(a[l]))"))
    assert a != b
    assert a.differences(b) == ["tower"]


def test_gravitation_symmetric_marker_weight():
    m = builtin("gravitation-gauge")
    w = m.params["wsym"]
    assert w(0, 0) == 1 and w(0, 1) == Fraction(1, 2)
    sigma = [v for v in m.fields if v.name == "sigma"]
    assert len(sigma) == 10
    assert m.lagrangian is None
    assert m.extended.coefficient != GradedPoly()
