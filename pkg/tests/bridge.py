"""Translate jetvar polynomials into the reference algebra of ``oracle``."""

from oracle import Ext
from strategies import EVEN_POOL, ODD_POOL

from jetvar.algebra import GradedPoly

N_EVEN, N_ODD = len(EVEN_POOL), len(ODD_POOL)
EVEN_INDEX = {v: i for i, v in enumerate(EVEN_POOL)}
ODD_INDEX = {v: k for k, v in enumerate(ODD_POOL)}


def gen(v) -> Ext:
    if v in EVEN_INDEX:
        return Ext.even_gen(N_EVEN, N_ODD, EVEN_INDEX[v])
    return Ext.odd_gen(N_EVEN, N_ODD, ODD_INDEX[v])


def to_ext(p: GradedPoly) -> Ext:
    """Multiply out every stored monomial in the order jetvar keeps its factors."""
    out = Ext(N_EVEN, N_ODD)
    for (even, odd), c in p.terms.items():
        term = Ext.const(N_EVEN, N_ODD, c)
        for v, e in even:
            for _ in range(e):
                term = term * gen(v)
        for v in odd:
            term = term * gen(v)
        out = out + term
    return out


def d_left(x: Ext, v) -> Ext:
    return x.d_even(EVEN_INDEX[v]) if v in EVEN_INDEX else x.d_odd_left(ODD_INDEX[v])


def d_right(x: Ext, v) -> Ext:
    return x.d_even(EVEN_INDEX[v]) if v in EVEN_INDEX else x.d_odd_right(ODD_INDEX[v])
