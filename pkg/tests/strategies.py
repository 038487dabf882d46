"""Hypothesis strategies for random graded polynomials on a 2-dimensional base."""

from itertools import combinations_with_replacement

from hypothesis import strategies as st

from jetvar.algebra import GradedPoly, Kind, MultiIndex, Var, base_coordinate
from jetvar.symmetry import Derivation

DIM = 2
Y = Var(Kind.FIELD, 0, (), 0, name="y")
Z = Var(Kind.FIELD, 1, (), 0, name="z")
PSI = Var(Kind.FIELD, 2, (), 1, name="psi")
CHI = Var(Kind.GHOST, 3, (), 1, ghost=1, name="chi")
PHI = Var(Kind.FIELD, 4, (), 0, name="phi")  # test function, kept out of random data
FIELDS = (Y, Z, PSI)


def jets(v: Var, max_order: int, dim: int = DIM) -> list:
    out = []
    for k in range(max_order + 1):
        for combo in combinations_with_replacement(range(dim), k):
            out.append(v.with_jet(MultiIndex(combo)))
    return out


EVEN_POOL = jets(Y, 2) + jets(Z, 2) + [base_coordinate(0), base_coordinate(1)]
ODD_POOL = jets(PSI, 2) + jets(CHI, 1)
FIRST_ORDER_EVEN = jets(Y, 1) + jets(Z, 1)

coeffs = st.fractions(min_value=-3, max_value=3, max_denominator=3).filter(lambda c: c != 0)


@st.composite
def monomials(draw, parity=None, even_pool=EVEN_POOL, odd_pool=ODD_POOL, max_even=3, max_odd=2):
    evens = draw(st.lists(st.sampled_from(even_pool), max_size=max_even))
    choices = [k for k in range(max_odd + 1) if parity is None or k % 2 == parity]
    if not odd_pool:
        choices = [0]
    n_odd = draw(st.sampled_from(choices))
    odds = draw(st.lists(st.sampled_from(odd_pool), min_size=n_odd, max_size=n_odd, unique=True)) if n_odd else []
    return GradedPoly.product(evens + odds, draw(coeffs))


@st.composite
def polys(draw, parity=None, max_terms=4, **kw):
    out = GradedPoly()
    for m in draw(st.lists(monomials(parity, **kw), min_size=1, max_size=max_terms)):
        out = out + m
    return out


def lagrangians(max_terms=4):
    return polys(parity=0, max_terms=max_terms)


@st.composite
def derivations(draw, parity=0, max_terms=2):
    comps = {}
    for f in FIELDS:
        if draw(st.booleans()):
            comps[f] = draw(polys((parity + f.parity) & 1, max_terms=max_terms, max_even=2))
    return Derivation(comps, parity)


@st.composite
def families(draw, max_order=2, max_terms=2):
    """Coefficient family ``Lambda -> poly`` of even polynomials."""
    keys = []
    for k in range(max_order + 1):
        keys += [MultiIndex(c) for c in combinations_with_replacement(range(DIM), k)]
    chosen = draw(st.lists(st.sampled_from(keys), min_size=1, max_size=3, unique=True))
    return {m: draw(polys(0, max_terms=max_terms, max_even=2, odd_pool=())) for m in chosen}
