"""Variational calculus on polynomial densities.

Graded partial derivatives, total derivatives, the Euler-Lagrange operator,
the boundary (Lepage) data of a density, the eta transform of Noether
identity coefficients and a homotopy that writes a variationally trivial
density as an explicit divergence.
"""

from __future__ import annotations

import contextlib
import contextvars
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Iterable, Mapping

from .algebra import (
    EMPTY,
    GradedPoly,
    Kind,
    MultiIndex,
    Var,
    ZERO,
    _sort_odd,
    base_coordinate,
    default_max_jet_order,
)
from .errors import JetOrderExceeded

_CAP: contextvars.ContextVar[int | None] = contextvars.ContextVar("jetvar_cap", default=None)


def current_cap() -> int:
    cap = _CAP.get()
    return default_max_jet_order() if cap is None else cap


@contextlib.contextmanager
def jet_order_cap(cap: int | None):
    """Temporarily override the jet-order cap (``None`` restores the default)."""
    token = _CAP.set(cap)
    try:
        yield
    finally:
        _CAP.reset(token)


# ---------------------------------------------------------------------------
# value types


@dataclass(frozen=True)
class Density:
    """The coefficient of ``coefficient * dx^0 ^ ... ^ dx^(dim-1)``."""

    coefficient: GradedPoly
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("base dimension must be at least 1")

    def __add__(self, other: "Density") -> "Density":
        _same_dim(self, other)
        return Density(self.coefficient + other.coefficient, self.dim)

    def __sub__(self, other: "Density") -> "Density":
        _same_dim(self, other)
        return Density(self.coefficient - other.coefficient, self.dim)

    def is_zero(self) -> bool:
        return self.coefficient.is_zero()


def _same_dim(a: Density, b: Density):
    if a.dim != b.dim:
        raise ValueError(f"densities over different bases ({a.dim} vs {b.dim})")


@dataclass(frozen=True)
class EulerLagrangeResult:
    components: dict

    def __getitem__(self, v: Var) -> GradedPoly:
        return self.components.get(v, ZERO)

    def is_zero(self) -> bool:
        return all(p.is_zero() for p in self.components.values())

    def nonzero(self) -> dict:
        return {k: p for k, p in self.components.items() if not p.is_zero()}


@dataclass(frozen=True)
class CurrentVector:
    components: dict = field(default_factory=dict)

    def __getitem__(self, lam: int) -> GradedPoly:
        return self.components.get(lam, ZERO)

    def divergence(self, cap: int | None = None) -> GradedPoly:
        out = ZERO
        for lam, p in sorted(self.components.items()):
            out = out + total_derivative(p, lam, cap)
        return out


def _coeff(L) -> GradedPoly:
    return L.coefficient if isinstance(L, Density) else L


# ---------------------------------------------------------------------------
# partial derivatives


def partial(p: GradedPoly, v: Var) -> GradedPoly:
    """Left graded partial derivative: odd ``v`` is moved to the front first."""
    out: dict = {}
    if v[4]:
        for (even, odd), c in p.terms.items():
            if v in odd:
                i = odd.index(v)
                key = (even, odd[:i] + odd[i + 1:])
                out[key] = out.get(key, 0) + (-c if i & 1 else c)
    else:
        for (even, odd), c in p.terms.items():
            for i, (w, e) in enumerate(even):
                if w == v:
                    rest = even[:i] + ((w, e - 1),) + even[i + 1:] if e > 1 else even[:i] + even[i + 1:]
                    key = (rest, odd)
                    out[key] = out.get(key, 0) + c * e
                    break
    return GradedPoly._from_raw(out)


def right_partial(p: GradedPoly, v: Var) -> GradedPoly:
    """Right graded partial derivative: odd ``v`` is moved to the back first."""
    if not v[4]:
        return partial(p, v)
    out: dict = {}
    for (even, odd), c in p.terms.items():
        if v in odd:
            i = odd.index(v)
            key = (even, odd[:i] + odd[i + 1:])
            out[key] = out.get(key, 0) + (-c if (len(odd) - 1 - i) & 1 else c)
    return GradedPoly._from_raw(out)


def _all_partials(p: GradedPoly, side: str = "left") -> dict:
    """Every nonzero partial of ``p`` in one pass, keyed by variable."""
    acc: dict = defaultdict(dict)
    for (even, odd), c in p.terms.items():
        for i, (w, e) in enumerate(even):
            if w[0] == Kind.BASE:
                continue
            rest = even[:i] + ((w, e - 1),) + even[i + 1:] if e > 1 else even[:i] + even[i + 1:]
            bucket = acc[w]
            key = (rest, odd)
            bucket[key] = bucket.get(key, 0) + c * e
        n = len(odd)
        for i, w in enumerate(odd):
            flips = i if side == "left" else n - 1 - i
            bucket = acc[w]
            key = (even, odd[:i] + odd[i + 1:])
            bucket[key] = bucket.get(key, 0) + (-c if flips & 1 else c)
    return {w: q for w, raw in acc.items() if (q := GradedPoly._from_raw(raw))}


# ---------------------------------------------------------------------------
# total derivatives


def _shift(v: Var, lam: int, cap: int) -> Var:
    w = v.shifted(lam)
    if w[2] > cap:
        raise JetOrderExceeded(v.name or str(v), w[2], cap)
    return w


def total_derivative(p: GradedPoly, lam: int, cap: int | None = None) -> GradedPoly:
    """``d_lam p``: the even derivation sending each jet to its ``lam``-shift."""
    if cap is None:
        cap = current_cap()
    out: dict = {}
    get = out.get
    shift_cache: dict = {}
    for (even, odd), c in p.terms.items():
        for i, (w, e) in enumerate(even):
            if w[0] == Kind.BASE:
                if w[1] != lam:
                    continue
                rest = even[:i] + ((w, e - 1),) + even[i + 1:] if e > 1 else even[:i] + even[i + 1:]
                key = (rest, odd)
                out[key] = get(key, 0) + c * e
                continue
            ws = shift_cache.get(w)
            if ws is None:
                ws = shift_cache[w] = _shift(w, lam, cap)
            d = dict(even)
            if e > 1:
                d[w] = e - 1
            else:
                del d[w]
            d[ws] = d.get(ws, 0) + 1
            key = (tuple(sorted(d.items())), odd)
            out[key] = get(key, 0) + c * e
        for i, w in enumerate(odd):
            ws = shift_cache.get(w)
            if ws is None:
                ws = shift_cache[w] = _shift(w, lam, cap)
            if ws in odd:
                continue
            new, sign = _sort_odd(odd[:i] + (ws,) + odd[i + 1:])
            key = (even, new)
            out[key] = get(key, 0) + (c if sign > 0 else -c)
    return GradedPoly._from_raw(out)


def iterated_total(p: GradedPoly, multi: Iterable[int], cap: int | None = None) -> GradedPoly:
    """``d_Lambda p`` for a multi-index given as any iterable of base indices."""
    for lam in multi:
        if p.is_zero():
            break
        p = total_derivative(p, lam, cap)
    return p


def horizontal_differential(current: CurrentVector, cap: int | None = None) -> GradedPoly:
    return current.divergence(cap)


# ---------------------------------------------------------------------------
# Euler-Lagrange operator


def _group_partials(p: GradedPoly, side: str) -> dict:
    """``{generator: {jet: partial}}`` for every non-base variable of ``p``."""
    grouped: dict = defaultdict(dict)
    for w, q in _all_partials(p, side).items():
        grouped[w.base()][w.jet] = q
    return grouped


def _el_component(by_jet: Mapping, cap) -> GradedPoly:
    out = ZERO
    for jet, q in sorted(by_jet.items(), key=lambda kv: kv[0].sort_key()):
        term = iterated_total(q, jet, cap)
        out = out - term if len(jet) & 1 else out + term
    return out


def euler_lagrange(L, over: Iterable[Var] | None = None, side: str = "left",
                   cap: int | None = None) -> EulerLagrangeResult:
    """``E_A = sum_Lambda (-1)^|Lambda| d_Lambda (partial^Lambda_A L)``.

    ``over`` lists jet-free generators; by default every generator appearing
    in ``L``.  ``side="right"`` uses right partials, which differ from the
    left ones only on odd generators.
    """
    p = _coeff(L)
    grouped = _group_partials(p, side)
    keys = sorted(grouped) if over is None else [v.base() for v in over]
    return EulerLagrangeResult({v: _el_component(grouped.get(v, {}), cap) for v in keys})


def variational_residual(L, cap: int | None = None) -> dict:
    """Nonzero Euler-Lagrange components of ``L`` over all of its generators."""
    p = _coeff(L)
    out = {}
    for v, by_jet in sorted(_group_partials(p, "left").items()):
        e = _el_component(by_jet, cap)
        if e:
            out[v] = e
    return out


def is_variationally_trivial(L, cap: int | None = None) -> bool:
    """True iff every Euler-Lagrange component of ``L`` vanishes identically."""
    p = _coeff(L)
    for v, by_jet in sorted(_group_partials(p, "left").items()):
        if _el_component(by_jet, cap):
            return False
    return True


# ---------------------------------------------------------------------------
# boundary data


def lepage_decompose(L, cap: int | None = None):
    """Euler-Lagrange components plus boundary coefficients ``Xi``.

    ``Xi`` maps ``(generator, Sigma, lam)`` to a polynomial such that for
    every evolutionary derivation ``u``

        u(L) = sum_A u^A E_A + sum_lam d_lam contract(u, Xi)^lam.

    Derivatives are peeled off the highest jets first; from a jet
    ``Lambda`` the smallest base index is removed.
    """
    p = _coeff(L)
    grouped = _group_partials(p, "left")
    xi: dict = {}
    components = {}
    for v in sorted(grouped):
        q = dict(grouped[v])
        top = max((len(j) for j in q), default=0)
        for order in range(top, 0, -1):
            for jet in sorted((j for j in q if len(j) == order), key=MultiIndex.sort_key):
                val = q.pop(jet)
                if val.is_zero():
                    continue
                lam = jet[0]
                rest = jet.remove(lam)
                key = (v, rest, lam)
                xi[key] = xi.get(key, ZERO) + val
                q[rest] = q.get(rest, ZERO) - total_derivative(val, lam, cap)
        components[v] = q.get(EMPTY, ZERO)
    xi = {k: val for k, val in xi.items() if val}
    return EulerLagrangeResult(components), xi


def contract(components: Mapping[Var, GradedPoly], xi: Mapping, cap: int | None = None) -> CurrentVector:
    """``sum d_Sigma(u^A) * Xi[A, Sigma, lam]`` for each ``lam``."""
    out: dict = {}
    memo: dict = {}
    for (v, rest, lam), val in sorted(xi.items(), key=lambda kv: (kv[0][0], kv[0][1].sort_key(), kv[0][2])):
        u = components.get(v)
        if u is None or u.is_zero():
            continue
        key = (v, rest)
        if key not in memo:
            memo[key] = iterated_total(u, rest, cap)
        term = memo[key] * val
        if term:
            out[lam] = out.get(lam, ZERO) + term
    return CurrentVector({k: q for k, q in out.items() if q})


# ---------------------------------------------------------------------------
# explicit divergence of a trivial density


def _split_by_degree(p: GradedPoly) -> dict:
    """Split ``p`` by total degree in non-base generators."""
    parts: dict = defaultdict(dict)
    for (even, odd), c in p.terms.items():
        deg = len(odd) + sum(e for w, e in even if w[0] != Kind.BASE)
        parts[deg][(even, odd)] = c
    return {k: GradedPoly(raw) for k, raw in parts.items()}


def _antiderivative_x0(p: GradedPoly) -> GradedPoly:
    """Integrate a polynomial in base coordinates only with respect to ``x^0``."""
    x0 = base_coordinate(0)
    out: dict = {}
    for (even, odd), c in p.terms.items():
        d = dict(even)
        hit = next((w for w in d if w[0] == Kind.BASE and w[1] == 0), None)
        e = d.get(hit, 0) if hit is not None else 0
        if hit is not None:
            d[hit] = e + 1
        else:
            d[x0] = 1
        key = (tuple(sorted(d.items())), odd)
        out[key] = out.get(key, 0) + Fraction(c, e + 1)
    return GradedPoly._from_raw(out)


def divergence_potential(T, dim: int | None = None, cap: int | None = None) -> CurrentVector:
    """A current ``sigma`` with ``sum_lam d_lam sigma^lam = T`` for trivial ``T``.

    Each piece of degree ``k >= 1`` in the non-base generators is handled by
    the Euler vector field: its boundary contraction divided by ``k``.  The
    degree-zero piece is a polynomial in the base coordinates and is
    integrated in ``x^0``.  The caller is responsible for ``T`` being
    variationally trivial; the result is checked only by its divergence.
    """
    p = _coeff(T)
    out: dict = {}
    for k, part in sorted(_split_by_degree(p).items()):
        if k == 0:
            prim = _antiderivative_x0(part)
            if prim:
                out[0] = out.get(0, ZERO) + prim
            continue
        _, xi = lepage_decompose(part, cap)
        euler = {v: GradedPoly.var(v) for v in {key[0] for key in xi}}
        cur = contract(euler, xi, cap)
        for lam, q in cur.components.items():
            out[lam] = out.get(lam, ZERO) + q.scale(Fraction(1, k))
    return CurrentVector({k: q for k, q in out.items() if q})


# ---------------------------------------------------------------------------
# eta transform


def _embed_weight(sigma: MultiIndex, big: MultiIndex) -> int:
    """Number of ways to pick the multiset ``sigma`` out of ``big``."""
    w = 1
    sc = sigma.counts
    for lam, m in big.counts.items():
        w *= comb(m, sc.get(lam, 0))
    return w


def eta(f: Mapping[MultiIndex, GradedPoly], multi: MultiIndex, k: int | None = None,
        cap: int | None = None) -> GradedPoly:
    """Eta transform of a coefficient family at ``multi``.

    ``sum_Sigma (-1)^|Sigma+Lambda| w(Sigma, Lambda) d_Sigma f^(Sigma+Lambda)``
    where ``w`` counts the embeddings of ``Sigma`` into ``Sigma+Lambda``.
    Only families with ``|Sigma+Lambda| <= k`` contribute.
    """
    if not isinstance(multi, MultiIndex):
        multi = MultiIndex(multi)
    if k is None:
        k = max((len(m) for m in f), default=0)
    out = ZERO
    for big, val in sorted(f.items(), key=lambda kv: kv[0].sort_key()):
        if len(big) > k or not big.contains(multi) or val.is_zero():
            continue
        sigma = big.minus(multi)
        w = _embed_weight(sigma, big)
        term = iterated_total(val, sigma, cap).scale(w)
        out = out - term if len(big) & 1 else out + term
    return out


def eta_family(f: Mapping[MultiIndex, GradedPoly], k: int | None = None,
               cap: int | None = None) -> dict:
    """All nonzero ``eta(f)^Lambda``, keyed by ``Lambda``."""
    subs = set()
    for big in f:
        for sub in _submultisets(big):
            subs.add(sub)
    out = {}
    for sub in sorted(subs, key=MultiIndex.sort_key):
        val = eta(f, sub, k, cap)
        if val:
            out[sub] = val
    return out


def _submultisets(m: MultiIndex):
    counts = sorted(m.counts.items())
    def rec(i):
        if i == len(counts):
            yield ()
            return
        lam, c = counts[i]
        for tail in rec(i + 1):
            for j in range(c + 1):
                yield (lam,) * j + tail
    for items in rec(0):
        yield MultiIndex(items)


def to_density(p, dim: int) -> Density:
    return p if isinstance(p, Density) else Density(p, dim)

