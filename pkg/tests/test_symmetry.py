import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from strategies import CHI, PSI, Y, Z, derivations, polys

from jetvar.algebra import GradedPoly, base_coordinate
from jetvar.calculus import Density
from jetvar.errors import EvenDerivation
from jetvar.models import builtin
from jetvar.symmetry import (
    Derivation,
    apply,
    commutator,
    is_nilpotent,
    is_variational_symmetry,
    lie_derivative,
    nilpotency_residuals,
)


def P(v):
    return GradedPoly.var(v)


def test_components_must_be_jet_free_and_vertical():
    with pytest.raises(ValueError):
        Derivation({Y.with_jet((0,)): P(Z)})
    with pytest.raises(ValueError):
        Derivation({base_coordinate(0): P(Z)})


def test_component_parity_is_checked():
    with pytest.raises(ValueError):
        Derivation({Y: P(CHI)}, parity=0)
    Derivation({Y: P(CHI)}, parity=1)


def test_prolongation_to_jets():
    d = Derivation({Y: P(Z) * P(Z)})
    assert d.on(Y.with_jet((1,))) == (P(Z) * P(Z.with_jet((1,)))).scale(2)


def test_odd_derivation_passes_odd_factors_with_a_sign():
    d = Derivation({PSI: P(Y)}, parity=1)
    # d(chi psi) = -chi d(psi)
    assert apply(d, P(CHI) * P(PSI)) == -(P(CHI) * P(Y))


@settings(max_examples=100, deadline=None)
@given(st.sampled_from([0, 1]), st.integers(0, 1), st.data())
def test_graded_leibniz_rule(parity, a, data):
    d = data.draw(derivations(parity))
    p = data.draw(polys(a))
    q = data.draw(polys())
    s = -1 if parity and p.parity() else 1
    assert apply(d, p * q) == apply(d, p) * q + (p * apply(d, q)).scale(s)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([0, 1]), st.sampled_from([0, 1]), st.data())
def test_commutator_acts_as_graded_commutator(pa, pb, data):
    d1 = data.draw(derivations(pa))
    d2 = data.draw(derivations(pb))
    p = data.draw(polys(max_terms=2))
    s = -1 if pa and pb else 1
    expected = apply(d1, apply(d2, p)) - apply(d2, apply(d1, p)).scale(s)
    assert apply(commutator(d1, d2), p) == expected


def test_nilpotency():
    d = Derivation({Y: P(CHI)}, parity=1)
    assert is_nilpotent(d)
    d2 = Derivation({PSI: P(Y), Y: P(CHI)}, parity=1)
    assert nilpotency_residuals(d2) == {PSI: P(CHI)}
    with pytest.raises(EvenDerivation):
        is_nilpotent(Derivation({Y: P(Z)}))


def test_free_scalar_symmetries():
    m = builtin("free-scalar")
    assert is_variational_symmetry(m.derivation("translation"), m.lagrangian)
    assert is_variational_symmetry(m.derivation("shift"), m.lagrangian)
    scaling = Derivation({m.fields[0]: P(m.fields[0])})
    assert not is_variational_symmetry(scaling, m.lagrangian)


def test_lie_derivative_is_a_density():
    m = builtin("free-scalar")
    out = lie_derivative(m.derivation("shift"), m.lagrangian)
    assert isinstance(out, Density) and out.dim == 2
    with pytest.raises(TypeError):
        lie_derivative(m.derivation("shift"), m.lagrangian.coefficient)


def test_yang_mills_brst_is_gauge_symmetry_on_fields():
    m = builtin("yang-mills-su2")
    gauge = m.derivation("gauge")
    assert is_variational_symmetry(gauge, m.lagrangian)
    assert gauge == m.derivation("brst").restricted(lambda v: v in m.fields)
