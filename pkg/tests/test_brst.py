from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jetvar.algebra import GradedPoly, Kind, MultiIndex, Var
from jetvar.brst import (
    NoetherIdentityData,
    antibracket,
    check_gauge_condition,
    check_kt_nilpotency,
    check_master_equation,
    conservation_residual,
    extend_lagrangian,
    gauge_operator,
    kt_differential,
    master_form,
    ni_from_gauge,
    noether_current,
    tower_residuals,
    verify_ni,
)
from jetvar.calculus import Density, euler_lagrange
from jetvar.errors import NotASymmetry, NotNilpotent, RosterMismatch, UnpairedAntifield
from jetvar.frontend import parse_file
from jetvar.models import builtin
from jetvar.symmetry import Derivation, apply, is_nilpotent

FIXTURES = Path(__file__).parent / "fixtures"

# toy pairing: one even field and its odd antifield
y = Var(Kind.FIELD, 0, (), 0, name="y")
ybar = Var(Kind.ANTIFIELD, 0, (), 1, antifield=1, name="ybar")
w = Var(Kind.FIELD, 1, (), 1, name="w")
wbar = Var(Kind.ANTIFIELD, 1, (), 0, antifield=1, name="wbar")
PAIRS = [(y, ybar), (w, wbar)]


def P(v):
    return GradedPoly.var(v)


@pytest.fixture(scope="module")
def ym():
    m = builtin("yang-mills-su2")
    return m, m.euler_lagrange()


def _flip_derivative_terms(ni, r=0):
    """Tower with the sign of every derivative term of identity ``r`` flipped."""
    gens = [dict(g) for g in ni.generators]
    gens[r] = {k: (-p if k[1] else p) for k, p in gens[r].items()}
    return NoetherIdentityData(ni.stage, gens, ni.ghosts, ni.ghost_antifields)


# -- Noether identities and Koszul-Tate ---------------------------------------------------


def test_yang_mills_identities_vanish(ym):
    m, el = ym
    assert verify_ni(m.tower[0], el) == GradedPoly()


def test_any_identity_against_zero_equations():
    m = builtin("yang-mills-su2")
    zero = euler_lagrange(Density(GradedPoly(), 4), m.fields)
    assert verify_ni(m.tower[0], zero) == GradedPoly()


def test_flipped_sign_breaks_identity_and_koszul_tate(ym):
    m, el = ym
    bad = _flip_derivative_terms(m.tower[0])
    assert verify_ni(bad, el) != GradedPoly()
    assert not check_kt_nilpotency(kt_differential(m.theory, [bad], el))
    assert check_kt_nilpotency(kt_differential(m.theory, m.tower, el))


def test_koszul_tate_values(ym):
    m, el = ym
    delta = kt_differential(m.theory, m.tower, el)
    a = m.fields[5]
    abar = m.theory.antifields[a]
    assert apply(delta, P(abar)) == el[a]
    assert apply(delta, P(a)) == GradedPoly()


def test_tower_residuals_empty_for_builtins():
    for name in ("maxwell", "yang-mills-su2", "chern-simons-3d"):
        m = builtin(name)
        assert tower_residuals(m.theory, m.tower, m.euler_lagrange()) == {}


def test_tower_must_match_roster():
    m = builtin("maxwell")
    ym_tower = builtin("yang-mills-su2").tower
    with pytest.raises(RosterMismatch):
        kt_differential(m.theory, ym_tower, m.euler_lagrange())


def test_reducible_tower():
    m = parse_file(FIXTURES / "maxwell-reducible.theory")
    el = m.euler_lagrange()
    assert check_kt_nilpotency(kt_differential(m.theory, m.tower, el))
    u = gauge_operator(m.theory, m.tower)
    e = m.theory.ghosts[1][0]
    c0, c1 = m.theory.ghosts[0]
    assert u[c0] == P(e) and u[c1] == -P(e)
    assert is_nilpotent(u)
    assert check_gauge_condition(m.theory, u, el)


# -- gauge operator ----------------------------------------------------------------------------


def test_gauge_operator_reproduces_model_gauge():
    for name in ("maxwell", "yang-mills-su2", "chern-simons-3d"):
        m = builtin(name)
        assert gauge_operator(m.theory, m.tower) == m.derivation("gauge"), name


def test_gauge_condition_detects_wrong_sign(ym):
    m, el = ym
    u = m.derivation("gauge")
    assert check_gauge_condition(m.theory, u, el)
    a = m.fields[0]
    bad = dict(u.components)
    bad[a] = -bad[a]
    assert not check_gauge_condition(m.theory, Derivation(bad, 1), el)


def test_identities_recovered_from_gauge_operator():
    m = builtin("yang-mills-su2")
    ro = m.roster
    markers = {f: P(ro.marker(f.name, *f.idx)) for f in m.fields}
    derived = ni_from_gauge(m.derivation("gauge"), markers, m.tower[0].ghosts)
    for r, expr in enumerate(derived):
        expected = GradedPoly()
        for (t, jet), coeff in m.tower[0].generators[r].items():
            expected = expected + coeff * P(ro.marker(t.name, *t.idx, jet=jet))
        assert expr == expected


# -- antibracket ---------------------------------------------------------------------------------


def test_toy_antibracket_sign_convention():
    L = P(ybar) * P(y) * P(y)
    # two equal halves with opposite sign: odd L brackets to zero with itself
    assert antibracket(L, L, PAIRS).coefficient == GradedPoly()
    assert master_form(L, PAIRS).coefficient == (P(ybar) * P(y) ** 3).scale(4)


def test_bracket_without_antifields_vanishes():
    L = P(y.with_jet((0,))) ** 2
    assert antibracket(L, L, PAIRS).coefficient == GradedPoly()
    assert check_master_equation(builtin("yang-mills-su2").lagrangian, builtin("yang-mills-su2").theory)


def test_unpaired_antifield_is_rejected():
    stray = Var(Kind.ANTIFIELD, 7, (), 1, antifield=1, name="zbar")
    with pytest.raises(UnpairedAntifield):
        antibracket(P(stray) * P(y), P(y), PAIRS)


_toy_gens = [y, y.with_jet((0,)), ybar, ybar.with_jet((0,)), w, wbar, wbar.with_jet((0,))]


@st.composite
def toy_polys(draw, parity):
    out = GradedPoly()
    for _ in range(draw(st.integers(1, 3))):
        factors = draw(st.lists(st.sampled_from(_toy_gens), min_size=1, max_size=3))
        term = GradedPoly.product(factors, draw(st.integers(1, 3)))
        if term and term.parity() == parity:
            out = out + term
    return out


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 1), st.integers(0, 1), st.data())
def test_antibracket_graded_symmetry(a, b, data):
    L1 = data.draw(toy_polys(a))
    L2 = data.draw(toy_polys(b))
    s = -1 if (L1 and L2 and a and b) else 1
    assert antibracket(L1, L2, PAIRS).coefficient == antibracket(L2, L1, PAIRS).coefficient.scale(s)


# -- extended Lagrangians ----------------------------------------------------------------------------


def test_maxwell_extension():
    m = builtin("maxwell")
    ext = extend_lagrangian(m.lagrangian, m.derivation("brst"), m.theory)
    c = m.theory.ghosts[0][0]
    extra = GradedPoly()
    for a in m.fields:
        extra = extra + P(c.with_jet(a.idx)) * P(m.theory.antifields[a])
    assert ext.coefficient == m.lagrangian.coefficient + extra
    assert check_master_equation(ext, m.theory)


def test_extension_requires_nilpotent_brst():
    m = builtin("yang-mills-su2")
    b = m.derivation("brst")
    crippled = b.restricted(lambda v: v.kind != Kind.GHOST)
    assert not is_nilpotent(crippled)
    with pytest.raises(NotNilpotent):
        extend_lagrangian(m.lagrangian, crippled, m.theory)


def test_extension_solves_master_equation_for_all_builtins():
    for name in ("maxwell", "yang-mills-su2", "chern-simons-3d"):
        m = builtin(name)
        ext = extend_lagrangian(m.lagrangian, m.derivation("brst"), m.theory)
        assert check_master_equation(ext, m.theory), name


# -- Noether currents ---------------------------------------------------------------------------------


def test_free_scalar_energy_current():
    m = builtin("free-scalar")
    yv = m.fields[0]
    y0, y1 = P(yv.with_jet((0,))), P(yv.with_jet((1,)))
    d = m.derivation("translation")
    J = noether_current(d, m.lagrangian)
    assert J.components[0] == (y0 ** 2 + y1 ** 2) / 2
    assert J.components[1] == -(y0 * y1)
    assert conservation_residual(J, d, m.lagrangian) == GradedPoly()


def test_zero_derivation_has_zero_current():
    m = builtin("free-scalar")
    assert noether_current(Derivation({}), m.lagrangian).components == {}


def test_yang_mills_colour_currents_are_conserved():
    m = builtin("yang-mills-su2")
    for k in range(3):
        d = m.derivation(f"colour{k}")
        J = noether_current(d, m.lagrangian)
        assert J.components
        assert conservation_residual(J, d, m.lagrangian) == GradedPoly()


def test_non_symmetry_has_no_current():
    m = builtin("free-scalar")
    yv = m.fields[0]
    with pytest.raises(NotASymmetry):
        noether_current(Derivation({yv: P(yv)}), m.lagrangian)


def test_multi_index_keys_are_normalized():
    ni = NoetherIdentityData(0, [{(y, (1, 0)): GradedPoly.const(2)}])
    assert ni.family(0, y) == {MultiIndex((0, 1)): GradedPoly.const(2)}
