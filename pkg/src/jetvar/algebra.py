"""Exact Grassmann-graded polynomial arithmetic over jet coordinates.

Generators are :class:`Var` values: base coordinates ``x^l``, fields ``s^A``,
antifields, ghosts, ghost antifields and Euler-Lagrange placeholders, each
carrying a symmetric :class:`MultiIndex` of base derivatives.

A :class:`GradedPoly` stores every term in a canonical form: the even
factors as a sorted tuple of ``(Var, exponent)`` pairs and the odd factors
as a strictly increasing tuple of ``Var``.  Reordering odd factors into that
order flips the sign of the coefficient once per transposition, and a
repeated odd factor kills the term.  Structural equality is therefore an
exact zero test.
"""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from typing import Iterable, Iterator, Union

Scalar = Union[int, Fraction]

DEFAULT_MAX_JET_ORDER = 10


def default_max_jet_order() -> int:
    """Jet-order cap from ``JETVAR_MAX_JET_ORDER``, else 10."""
    raw = os.environ.get("JETVAR_MAX_JET_ORDER")
    if raw is None or raw.strip() == "":
        return DEFAULT_MAX_JET_ORDER
    return int(raw)


def as_scalar(value) -> Scalar:
    """Exact rational from an int, Fraction or rational string; ints stay ints."""
    if isinstance(value, bool):
        raise TypeError("booleans are not coefficients")
    if isinstance(value, int):
        return value
    if isinstance(value, Fraction):
        return value.numerator if value.denominator == 1 else value
    if isinstance(value, str):
        return as_scalar(Fraction(value))
    raise TypeError(f"not an exact rational: {value!r}")


def _norm(c):
    if type(c) is Fraction and c.denominator == 1:
        return c.numerator
    return c


class Kind(IntEnum):
    BASE = 0
    FIELD = 1
    ANTIFIELD = 2
    GHOST = 3
    GHOST_ANTIFIELD = 4
    MARKER = 5


class MultiIndex(tuple):
    """Symmetric multi-index stored as the sorted tuple of its base indices.

    ``MultiIndex([1, 0, 1])`` and ``MultiIndex([1, 1, 0])`` are the same
    object value; ``+`` is multiset union.
    """

    __slots__ = ()

    def __new__(cls, indices: Iterable[int] = ()):
        return tuple.__new__(cls, sorted(int(i) for i in indices))

    @classmethod
    def from_counts(cls, counts: dict[int, int]) -> "MultiIndex":
        out = []
        for lam, k in counts.items():
            if k < 0:
                raise ValueError("negative multiplicity")
            out.extend([lam] * k)
        return cls(out)

    @property
    def order(self) -> int:
        return len(self)

    @property
    def counts(self) -> dict[int, int]:
        return dict(Counter(self))

    def __add__(self, other):
        return MultiIndex(tuple.__add__(self, tuple(other)))

    def add(self, lam: int) -> "MultiIndex":
        return MultiIndex(tuple.__add__(self, (lam,)))

    def remove(self, lam: int) -> "MultiIndex":
        items = list(self)
        items.remove(lam)
        return tuple.__new__(MultiIndex, items)

    def contains(self, other: "MultiIndex") -> bool:
        mine = self.counts
        return all(mine.get(k, 0) >= v for k, v in other.counts.items())

    def minus(self, other: "MultiIndex") -> "MultiIndex":
        mine = Counter(self)
        mine.subtract(other)
        if any(v < 0 for v in mine.values()):
            raise ValueError(f"{tuple(other)} is not contained in {tuple(self)}")
        return MultiIndex(mine.elements())

    def sort_key(self):
        return (len(self), tuple(self))

    def __repr__(self):
        return f"MultiIndex({list(self)})"


EMPTY = MultiIndex()


class Var(tuple):
    """One generator ``s^A_Lambda`` with its gradings.

    Layout: ``(kind, slot, order, jet, parity, ghost, antifield, name, idx)``.
    Comparison is tuple comparison, so the total order is kind, then slot,
    then graded-lexicographic jet.  ``slot`` is unique per generator within
    a theory; ``name`` and ``idx`` only matter for display.
    """

    __slots__ = ()

    def __new__(cls, kind, slot: int, jet: Iterable[int] = EMPTY, parity: int = 0,
                ghost: int = 0, antifield: int = 0, name: str = "", idx: tuple = ()):
        if not isinstance(jet, MultiIndex):
            jet = MultiIndex(jet)
        kind = int(kind)
        if kind == Kind.BASE and jet:
            raise ValueError("base coordinates carry no jet")
        return tuple.__new__(cls, (kind, slot, len(jet), jet, parity & 1, ghost, antifield,
                                   name, tuple(idx)))

    def __getnewargs__(self):
        return (self[0], self[1], self[3], self[4], self[5], self[6], self[7], self[8])

    @property
    def kind(self) -> Kind:
        return Kind(self[0])

    @property
    def slot(self) -> int:
        return self[1]

    @property
    def order(self) -> int:
        return self[2]

    @property
    def jet(self) -> MultiIndex:
        return self[3]

    @property
    def parity(self) -> int:
        return self[4]

    @property
    def ghost(self) -> int:
        return self[5]

    @property
    def antifield(self) -> int:
        return self[6]

    @property
    def name(self) -> str:
        return self[7]

    @property
    def idx(self) -> tuple:
        return self[8]

    @property
    def grading(self) -> "Grading":
        return Grading(self[4], self[5], self[6])

    def base(self) -> "Var":
        if not self[3]:
            return self
        return tuple.__new__(Var, self[:2] + (0, EMPTY) + self[4:])

    def with_jet(self, jet: Iterable[int]) -> "Var":
        if not isinstance(jet, MultiIndex):
            jet = MultiIndex(jet)
        if self[0] == Kind.BASE and jet:
            raise ValueError("base coordinates carry no jet")
        return tuple.__new__(Var, self[:2] + (len(jet), jet) + self[4:])

    def shifted(self, lam: int) -> "Var":
        jet = self[3].add(lam)
        return tuple.__new__(Var, self[:2] + (len(jet), jet) + self[4:])

    def label(self) -> str:
        """Text form used by the theory-file printer, e.g. ``a[1,0;2]``."""
        inner = ",".join(str(i) for i in self[8])
        if self[0] == Kind.MARKER:
            return "E(" + _plain_label(self[7], self[8], self[3]) + ")"
        return _plain_label(self[7], self[8], self[3]) if (inner or self[3]) else self[7]

    def __repr__(self):
        return f"Var({self.label()})"

    __str__ = label


def _plain_label(name: str, idx: tuple, jet: MultiIndex) -> str:
    inner = ",".join(str(i) for i in idx)
    if jet:
        inner += ";" + ",".join(str(j) for j in jet)
    return f"{name}[{inner}]" if (idx or jet) else name


def base_coordinate(lam: int) -> Var:
    """The base coordinate ``x^lam`` (even, degree zero in every grading)."""
    return Var(Kind.BASE, lam, EMPTY, 0, 0, 0, "x", (lam,))


@dataclass(frozen=True)
class Grading:
    parity: int = 0
    ghost: int = 0
    antifield: int = 0

    def __add__(self, other: "Grading") -> "Grading":
        return Grading((self.parity + other.parity) & 1, self.ghost + other.ghost,
                       self.antifield + other.antifield)


class _Mixed:
    def __repr__(self):
        return "MIXED"


MIXED = _Mixed()


# ---------------------------------------------------------------------------
# canonical monomials


def _sort_odd(odd) -> tuple[tuple | None, int]:
    """Sort odd factors; returns (sorted, sign), or (None, 0) on a repeat."""
    items = list(odd)
    sign = 1
    for i in range(1, len(items)):
        j = i
        cur = items[j]
        while j > 0 and items[j - 1] > cur:
            items[j] = items[j - 1]
            j -= 1
            sign = -sign
        items[j] = cur
    for i in range(1, len(items)):
        if items[i] == items[i - 1]:
            return None, 0
    return tuple(items), sign


def _merge_odd(a: tuple, b: tuple) -> tuple[tuple | None, int]:
    """Concatenate two sorted odd tuples into sorted order, tracking the sign."""
    out = []
    i = j = 0
    na, nb = len(a), len(b)
    swaps = 0
    while i < na and j < nb:
        x, y = a[i], b[j]
        if x < y:
            out.append(x)
            i += 1
        elif y < x:
            out.append(y)
            swaps += na - i
            j += 1
        else:
            return None, 0
    out.extend(a[i:])
    out.extend(b[j:])
    return tuple(out), (-1 if swaps & 1 else 1)


def _merge_even(a: tuple, b: tuple) -> tuple:
    if not a:
        return b
    if not b:
        return a
    d = dict(a)
    for v, e in b:
        d[v] = d.get(v, 0) + e
    return tuple(sorted(d.items()))


@dataclass(frozen=True)
class GradedMonomial:
    """A normalized monomial: ``coefficient * prod(even) * prod(odd)``."""

    coefficient: Scalar
    even: tuple
    odd: tuple

    @property
    def key(self):
        return (self.even, self.odd)


def normalize(raw: Iterable[tuple[Var, int]], coeff) -> GradedMonomial | None:
    """Canonical monomial for an ordered product, or ``None`` when it vanishes.

    ``raw`` lists ``(variable, exponent)`` factors in written order.  Even
    factors commute freely; odd factors are sorted with one sign flip per
    transposition, and an odd factor occurring twice gives zero.
    """
    coeff = as_scalar(coeff)
    if coeff == 0:
        return None
    even: dict[Var, int] = {}
    odd: list[Var] = []
    for v, e in raw:
        if e < 0:
            raise ValueError("negative exponent")
        if e == 0:
            continue
        if v[4]:
            if e > 1:
                return None
            odd.append(v)
        else:
            even[v] = even.get(v, 0) + e
    odd_sorted, sign = _sort_odd(odd)
    if odd_sorted is None:
        return None
    return GradedMonomial(coeff * sign, tuple(sorted(even.items())), odd_sorted)


# ---------------------------------------------------------------------------
# polynomials


class GradedPoly:
    """Exact polynomial in graded generators; treat instances as immutable."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: dict | None = None):
        self.terms = terms if terms is not None else {}
        self._hash = None

    # -- construction ------------------------------------------------------

    @classmethod
    def _from_raw(cls, raw: dict) -> "GradedPoly":
        return cls({k: _norm(c) for k, c in raw.items() if c != 0})

    @classmethod
    def const(cls, c) -> "GradedPoly":
        c = as_scalar(c)
        return cls({((), ()): c} if c != 0 else {})

    @classmethod
    def var(cls, v: Var, coeff=1) -> "GradedPoly":
        coeff = as_scalar(coeff)
        if coeff == 0:
            return cls()
        if v[4]:
            return cls({((), (v,)): coeff})
        return cls({(((v, 1),), ()): coeff})

    @classmethod
    def monomial(cls, raw: Iterable[tuple[Var, int]], coeff=1) -> "GradedPoly":
        m = normalize(raw, coeff)
        if m is None:
            return cls()
        return cls({m.key: m.coefficient})

    @classmethod
    def product(cls, factors: Iterable[Var], coeff=1) -> "GradedPoly":
        return cls.monomial(((v, 1) for v in factors), coeff)

    # -- queries -----------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    def __len__(self):
        return len(self.terms)

    def monomials(self) -> Iterator[GradedMonomial]:
        for (even, odd), c in self.terms.items():
            yield GradedMonomial(c, even, odd)

    def variables(self) -> set[Var]:
        out: set[Var] = set()
        for even, odd in self.terms:
            out.update(v for v, _ in even)
            out.update(odd)
        return out

    def generators(self) -> set[Var]:
        """Jet-free generators underlying the non-base variables."""
        return {v.base() for v in self.variables() if v[0] != Kind.BASE}

    def max_jet_order(self) -> int:
        return max((v[2] for v in self.variables()), default=0)

    def constant_term(self) -> Scalar:
        return self.terms.get(((), ()), 0)

    def coefficients(self) -> list[Scalar]:
        return list(self.terms.values())

    def grading(self):
        """Common :class:`Grading` of all terms, or ``MIXED``; zero gets Grading()."""
        found = None
        for even, odd in self.terms:
            g = _key_grading(even, odd)
            if found is None:
                found = g
            elif g != found:
                return MIXED
        return found if found is not None else Grading()

    def parity(self) -> int:
        g = self.grading()
        if g is MIXED:
            found = {len(odd) & 1 for _, odd in self.terms}
            if len(found) > 1:
                raise ValueError("polynomial is not parity-homogeneous")
            return found.pop()
        return g.parity

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, GradedPoly):
            other = GradedPoly.const(other)
        if not other.terms:
            return self
        if not self.terms:
            return other
        out = dict(self.terms)
        for k, c in other.terms.items():
            s = out.get(k, 0) + c
            if s == 0:
                out.pop(k, None)
            else:
                out[k] = _norm(s)
        return GradedPoly(out)

    __radd__ = __add__

    def __neg__(self):
        return GradedPoly({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        if not isinstance(other, GradedPoly):
            other = GradedPoly.const(other)
        return self + (-other)

    def __rsub__(self, other):
        return GradedPoly.const(other) - self

    def scale(self, c) -> "GradedPoly":
        c = as_scalar(c)
        if c == 0:
            return GradedPoly()
        if c == 1:
            return self
        return GradedPoly({k: _norm(v * c) for k, v in self.terms.items()})

    def __mul__(self, other):
        if not isinstance(other, GradedPoly):
            return self.scale(other)
        out: dict = {}
        get = out.get
        for (ea, oa), ca in self.terms.items():
            for (eb, ob), cb in other.terms.items():
                if oa and ob:
                    odd, sign = _merge_odd(oa, ob)
                    if not sign:
                        continue
                else:
                    odd, sign = (oa or ob), 1
                key = (_merge_even(ea, eb), odd)
                c = ca * cb
                out[key] = get(key, 0) + (c if sign > 0 else -c)
        return GradedPoly._from_raw(out)

    def __rmul__(self, other):
        return self.scale(other)

    def __truediv__(self, other):
        return self.scale(Fraction(1) / as_scalar(other))

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power")
        out = GradedPoly.const(1)
        for _ in range(k):
            out = out * self
        return out

    # -- comparison --------------------------------------------------------

    def __eq__(self, other):
        if isinstance(other, GradedPoly):
            return self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self.terms == GradedPoly.const(other).terms
        return NotImplemented

    def __ne__(self, other):
        r = self.__eq__(other)
        return r if r is NotImplemented else not r

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    # -- display -----------------------------------------------------------

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda kc: _term_sort_key(kc[0]))

    def __str__(self):
        return to_text(self)

    def __repr__(self):
        return f"GradedPoly({to_text(self)})"


def _key_grading(even, odd) -> Grading:
    p = len(odd) & 1
    gh = ant = 0
    for v, e in even:
        gh += v[5] * e
        ant += v[6] * e
    for v in odd:
        gh += v[5]
        ant += v[6]
    return Grading(p, gh, ant)


def grading_of(p: GradedPoly):
    """Common grading of ``p`` or ``MIXED``."""
    return p.grading()


def poly_mul(a: GradedPoly, b: GradedPoly) -> GradedPoly:
    return a * b


def _term_sort_key(key):
    even, odd = key
    deg = sum(e for _, e in even) + len(odd)
    return (deg, even, odd)


def _format_coeff(c) -> str:
    if isinstance(c, Fraction):
        return f"{c.numerator}/{c.denominator}"
    return str(c)


def to_text(p: GradedPoly) -> str:
    """Theory-file syntax for ``p``; parses back to the same polynomial."""
    if not p.terms:
        return "0"
    parts = []
    for (even, odd), c in p.sorted_terms():
        factors = [v.label() + (f"^{e}" if e > 1 else "") for v, e in even]
        factors += [v.label() for v in odd]
        neg = c < 0
        mag = -c if neg else c
        if not factors:
            body = _format_coeff(mag)
        elif mag == 1:
            body = "*".join(factors)
        else:
            body = _format_coeff(mag) + "*" + "*".join(factors)
        parts.append(("- " if neg else "+ ") + body)
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else "-" + text[2:]


ZERO = GradedPoly()
ONE = GradedPoly.const(1)
