import math
import random
from fractions import Fraction
from itertools import product

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from strategies import (
    DIM,
    FIELDS,
    FIRST_ORDER_EVEN,
    PHI,
    PSI,
    Y,
    Z,
    derivations,
    families,
    jets,
    lagrangians,
    polys,
)

from jetvar.algebra import GradedPoly, MultiIndex, base_coordinate
from jetvar.calculus import (
    CurrentVector,
    Density,
    contract,
    divergence_potential,
    eta,
    eta_family,
    euler_lagrange,
    horizontal_differential,
    is_variationally_trivial,
    iterated_total,
    jet_order_cap,
    lepage_decompose,
    total_derivative,
    variational_residual,
)
from jetvar.errors import JetOrderExceeded
from jetvar.symmetry import apply

lams = st.integers(0, DIM - 1)


def P(v):
    return GradedPoly.var(v)


# -- total derivatives -------------------------------------------------------------


def test_total_derivative_shifts_jets_and_hits_coordinates():
    x0 = base_coordinate(0)
    p = P(x0) * P(Y.with_jet((1,)))
    assert total_derivative(p, 0) == P(Y.with_jet((1,))) + P(x0) * P(Y.with_jet((0, 1)))


@settings(max_examples=120, deadline=None)
@given(polys(), lams, lams)
def test_total_derivatives_commute(p, a, b):
    assert total_derivative(total_derivative(p, a), b) == total_derivative(total_derivative(p, b), a)


@settings(max_examples=100, deadline=None)
@given(polys(), polys(), lams)
def test_total_derivative_is_leibniz(p, q, lam):
    assert total_derivative(p * q, lam) == total_derivative(p, lam) * q + p * total_derivative(q, lam)


def test_jet_cap_is_enforced():
    p = P(Y.with_jet((0, 0)))
    with jet_order_cap(2):
        with pytest.raises(JetOrderExceeded):
            total_derivative(p, 1)
    assert total_derivative(p, 1) == P(Y.with_jet((0, 0, 1)))


def test_jet_cap_default_comes_from_environment(monkeypatch):
    monkeypatch.setenv("JETVAR_MAX_JET_ORDER", "1")
    with pytest.raises(JetOrderExceeded):
        iterated_total(P(Y), (0, 1))
    monkeypatch.setenv("JETVAR_MAX_JET_ORDER", "3")
    assert iterated_total(P(Y), (0, 1)) == P(Y.with_jet((0, 1)))


# -- Euler-Lagrange operator -----------------------------------------------------------


def test_free_scalar_wave_operator():
    y0, y1 = Y.with_jet((0,)), Y.with_jet((1,))
    L = Density((P(y0) ** 2 - P(y1) ** 2) / 2, 2)
    el = euler_lagrange(L)
    assert el[Y] == P(Y.with_jet((1, 1))) - P(Y.with_jet((0, 0)))


def test_odd_field_uses_left_derivatives():
    # L = psi psi_0: E = psi_0 - d_0(-psi) = 2 psi_0
    L = P(PSI) * P(PSI.with_jet((0,)))
    assert euler_lagrange(L)[PSI] == P(PSI.with_jet((0,))).scale(2)


@settings(max_examples=120, deadline=None)
@given(polys(0, max_terms=3), lams)
def test_el_of_total_derivative_vanishes(j, lam):
    assert variational_residual(total_derivative(j, lam)) == {}


@settings(max_examples=100, deadline=None)
@given(polys(0, max_terms=2), polys(0, max_terms=2))
def test_el_of_horizontal_differential_vanishes(a, b):
    assert is_variationally_trivial(horizontal_differential(CurrentVector({0: a, 1: b})))


def _cubic_field(rng):
    return {(i, j): Fraction(rng.randint(-4, 4), rng.randint(1, 3))
            for i in range(4) for j in range(4) if i + j <= 3}


def _jet_value(field, jet, x, t):
    """Exact mixed derivative of a polynomial field sum c_ij x^i t^j."""
    n0, n1 = jet.count(0), jet.count(1)
    total = 0.0
    for (i, j), c in field.items():
        if i >= n0 and j >= n1:
            k = math.perm(i, n0) * math.perm(j, n1)
            total += float(c) * k * x ** (i - n0) * t ** (j - n1)
    return total


def _evaluate(p, values):
    total = 0.0
    for (even, odd), c in p.terms.items():
        assert not odd
        term = float(c)
        for v, e in even:
            term *= values[v] ** e
        total += term
    return total


def _values_at(fields, x, t, order=3):
    vals = {base_coordinate(0): x, base_coordinate(1): t}
    for f, coeffs in fields.items():
        for v in jets(f, order):
            vals[v] = _jet_value(coeffs, tuple(v.jet), x, t)
    return vals


def _fd_euler_lagrange(L, fields, target, x, t, h=1e-2, delta=1e-4):
    """E = dL/dy - sum_mu D_mu(dL/dy_mu) with every derivative taken numerically."""

    def dL(v, xx, tt):
        vals = _values_at(fields, xx, tt)
        up, down = dict(vals), dict(vals)
        up[v] += delta
        down[v] -= delta
        return (_evaluate(L, up) - _evaluate(L, down)) / (2 * delta)

    out = dL(target, x, t)
    for mu in range(DIM):
        v = target.with_jet((mu,))
        step = (h, 0.0) if mu == 0 else (0.0, h)

        def g(k):
            return dL(v, x + k * step[0], t + k * step[1])

        # fourth-order central difference
        out -= (-g(2) + 8 * g(1) - 8 * g(-1) + g(-2)) / (12 * h)
    return out


def test_el_agrees_with_finite_differences():
    rng = random.Random(20240611)
    grid = [(-0.9 + 1.8 * i / 7, -0.8 + 1.6 * j / 3) for i, j in product(range(8), range(4))]
    pool = FIRST_ORDER_EVEN + [base_coordinate(0), base_coordinate(1)]
    for trial in range(6):
        L = GradedPoly()
        for _ in range(4):
            factors = [rng.choice(pool) for _ in range(rng.randint(1, 3))]
            L = L + GradedPoly.product(factors, Fraction(rng.randint(-3, 3) or 1, rng.randint(1, 2)))
        fields = {Y: _cubic_field(rng), Z: _cubic_field(rng)}
        el = euler_lagrange(L, [Y, Z])
        for x, t in grid:
            vals = _values_at(fields, x, t)
            for target in (Y, Z):
                exact = _evaluate(el[target], vals)
                approx = _fd_euler_lagrange(L, fields, target, x, t)
                assert abs(exact - approx) <= 1e-6 * max(1.0, abs(exact)), (trial, target, x, t)


# -- first variational formula -------------------------------------------------------------


@settings(max_examples=100, deadline=None)
@given(lagrangians(max_terms=3), st.sampled_from([0, 1]), st.data())
def test_first_variational_formula(L, parity, data):
    d = data.draw(derivations(parity))
    el, xi = lepage_decompose(L)
    j = contract(d.components, xi)
    rhs = j.divergence()
    for f in FIELDS:
        rhs = rhs + d[f] * el[f]
    assert apply(d, L) == rhs


def test_lepage_peels_to_euler_lagrange():
    L = P(Y.with_jet((0, 1))) * P(Z) + P(Y.with_jet((0,))) ** 2 * P(Z.with_jet((1,)))
    el, _ = lepage_decompose(L)
    assert el == euler_lagrange(L)


# -- vertical derivations --------------------------------------------------------------------


@settings(max_examples=120, deadline=None)
@given(polys(), st.sampled_from([0, 1]), lams, st.data())
def test_derivations_commute_with_total_derivatives(p, parity, lam, data):
    d = data.draw(derivations(parity))
    assert apply(d, total_derivative(p, lam)) == total_derivative(apply(d, p), lam)


# -- divergence potentials --------------------------------------------------------------------


@settings(max_examples=100, deadline=None)
@given(polys(0, max_terms=2), polys(0, max_terms=2))
def test_divergence_potential_inverts_divergence(a, b):
    t = horizontal_differential(CurrentVector({0: a, 1: b}))
    assert divergence_potential(t, DIM).divergence() == t


# -- eta transform ----------------------------------------------------------------------------


def test_eta_of_constant_family_is_itself():
    f = {MultiIndex(()): P(Y)}
    assert eta(f, MultiIndex(())) == P(Y)


def test_eta_weights_repeated_indices():
    # f^{00} = y: eta^{0} = 2 d_0 y (two embeddings of {0} in {0,0})
    f = {MultiIndex((0, 0)): P(Y)}
    assert eta(f, MultiIndex((0,))) == P(Y.with_jet((0,))).scale(2)
    assert eta(f, MultiIndex(())) == P(Y.with_jet((0, 0)))


@settings(max_examples=100, deadline=None)
@given(families())
def test_eta_is_the_formal_adjoint(f):
    # sum eta(f)^L d_L phi == sum (-1)^|L| d_L(f^L phi)
    lhs = GradedPoly()
    for multi, val in eta_family(f).items():
        lhs = lhs + val * P(PHI.with_jet(multi))
    rhs = GradedPoly()
    for multi, val in f.items():
        term = iterated_total(val * P(PHI), multi)
        rhs = rhs - term if len(multi) & 1 else rhs + term
    assert lhs == rhs


@settings(max_examples=100, deadline=None)
@given(families())
def test_eta_is_an_involution(f):
    k = max(len(m) for m in f)
    twice = eta_family(eta_family(f, k), k)
    assert twice == {m: v for m, v in f.items() if v}
