"""Evolutionary derivations and their action on densities.

A derivation is fixed by its values on jet-free generators; on a jet
``s^A_Lambda`` it acts as ``d_Lambda`` of the generator's value, so it
commutes with every total derivative.  Derivations act from the left.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .algebra import MIXED, GradedPoly, Kind, Var, ZERO
from .calculus import Density, _coeff, is_variationally_trivial, iterated_total
from .errors import EvenDerivation


@dataclass(frozen=True)
class Derivation:
    """Left graded derivation of the given parity with generating components."""

    components: Mapping[Var, GradedPoly] = field(default_factory=dict)
    parity: int = 0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        clean = {}
        for v, p in self.components.items():
            if v.jet:
                raise ValueError(f"component keyed by a jet variable {v}")
            if v.kind == Kind.BASE:
                raise ValueError("derivations are vertical; base coordinates are inert")
            if not isinstance(p, GradedPoly):
                p = GradedPoly.const(p)
            if p:
                g = p.grading()
                if g is not MIXED and g.parity != (self.parity + v.parity) & 1:
                    raise ValueError(
                        f"component on {v} has parity {g.parity}, expected "
                        f"{(self.parity + v.parity) & 1}")
                clean[v] = p
        object.__setattr__(self, "components", clean)
        object.__setattr__(self, "parity", self.parity & 1)

    def __getitem__(self, v: Var) -> GradedPoly:
        return self.components.get(v, ZERO)

    def is_zero(self) -> bool:
        return not self.components

    def restricted(self, keep) -> "Derivation":
        """The derivation with only the components whose generator passes ``keep``."""
        return Derivation({v: p for v, p in self.components.items() if keep(v)}, self.parity, self.name)

    def scaled(self, c) -> "Derivation":
        return Derivation({v: p.scale(c) for v, p in self.components.items()}, self.parity, self.name)

    def __add__(self, other: "Derivation") -> "Derivation":
        if other.parity != self.parity:
            raise ValueError("cannot add derivations of different parity")
        out = dict(self.components)
        for v, p in other.components.items():
            out[v] = out.get(v, ZERO) + p
        return Derivation(out, self.parity, self.name)

    def on(self, v: Var, cap: int | None = None) -> GradedPoly:
        """Value on a single (possibly jet) generator."""
        comp = self.components.get(v.base())
        if comp is None or v.kind == Kind.BASE:
            return ZERO
        return iterated_total(comp, v.jet, cap)

    def __call__(self, p, cap: int | None = None):
        return apply(self, p, cap)


def apply(d: Derivation, p, cap: int | None = None):
    """Action of ``d`` on a polynomial (or on the coefficient of a density)."""
    if isinstance(p, Density):
        return Density(apply(d, p.coefficient, cap), p.dim)
    if not d.components or not p.terms:
        return ZERO
    cache: dict = {}

    def value(w):
        got = cache.get(w)
        if got is None:
            got = cache[w] = d.on(w, cap)
        return got

    parity = d.parity
    out = ZERO
    for (even, odd), c in p.terms.items():
        for i, (w, e) in enumerate(even):
            dv = value(w)
            if not dv:
                continue
            rest = even[:i] + ((w, e - 1),) + even[i + 1:] if e > 1 else even[:i] + even[i + 1:]
            out = out + dv * GradedPoly({(rest, odd): c * e})
        for i, w in enumerate(odd):
            dv = value(w)
            if not dv:
                continue
            sign = -1 if (parity and i & 1) else 1
            left = GradedPoly({(even, odd[:i]): c * sign})
            right = GradedPoly({((), odd[i + 1:]): 1})
            out = out + left * dv * right
    return out


def lie_derivative(d: Derivation, L, cap: int | None = None) -> Density:
    if not isinstance(L, Density):
        raise TypeError("lie_derivative expects a Density")
    return Density(apply(d, L.coefficient, cap), L.dim)


def is_variational_symmetry(d: Derivation, L, cap: int | None = None) -> bool:
    """True iff the Lie derivative of ``L`` along ``d`` is variationally trivial."""
    return is_variationally_trivial(apply(d, _coeff(L), cap), cap)


def commutator(d1: Derivation, d2: Derivation, cap: int | None = None) -> Derivation:
    """Graded commutator ``d1 d2 - (-1)^(|d1||d2|) d2 d1`` on generating components."""
    sign = -1 if (d1.parity and d2.parity) else 1
    keys = set(d1.components) | set(d2.components)
    out = {}
    for v in sorted(keys):
        val = apply(d1, d2[v], cap) - apply(d2, d1[v], cap).scale(sign)
        if val:
            out[v] = val
    return Derivation(out, d1.parity ^ d2.parity)


def nilpotency_residuals(d: Derivation, generators: Iterable[Var] | None = None,
                         cap: int | None = None) -> dict:
    """``d(d(g))`` for every generator whose value is nonzero."""
    if d.parity == 0:
        raise EvenDerivation("an even derivation is never nilpotent")
    gens = sorted(d.components) if generators is None else sorted(generators)
    out = {}
    for g in gens:
        r = apply(d, d.on(g, cap), cap)
        if r:
            out[g] = r
    return out


def is_nilpotent(d: Derivation, generators: Iterable[Var] | None = None,
                 cap: int | None = None) -> bool:
    """True iff ``d(d(g)) = 0`` on every generator; ``d`` must be odd.

    Generators outside ``d.components`` are sent to zero by ``d``, so the
    components' keys are enough.  On jets the square is the total
    derivative of the square on the generator.
    """
    return not nilpotency_residuals(d, generators, cap)
