"""Field-antifield machinery.

Noether identities are supplied as coefficient families.  From them this
module assembles the Koszul-Tate differential, the gauge operator, the
extended Lagrangian and the antibracket, and checks each of them exactly.

Sign conventions:

* the Koszul-Tate differential is built as an odd right derivation and
  returned as the left derivation ``D(g) = (-1)^(|g|+1) * delta(g)``; both
  have the same square up to sign, so nilpotency is unaffected;
* gauge operator components put the ghost jet on the left of its
  coefficient;
* the antibracket takes right variational derivatives in antifields and
  left ones in fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .algebra import GradedPoly, Kind, MultiIndex, Var, ZERO
from .calculus import (
    CurrentVector,
    Density,
    EulerLagrangeResult,
    _coeff,
    _submultisets,
    contract,
    divergence_potential,
    euler_lagrange,
    eta,
    is_variationally_trivial,
    iterated_total,
    lepage_decompose,
)
from .errors import NotASymmetry, NotNilpotent, RosterMismatch, UnpairedAntifield
from .symmetry import Derivation, apply, is_nilpotent, nilpotency_residuals


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class NoetherIdentityData:
    """One stage of a Noether identity tower.

    ``generators[r]`` maps ``(target, Lambda)`` to the coefficient of
    ``d_Lambda`` applied to the target's Euler-Lagrange component (stage 0)
    or to the target ghost antifield (higher stages).  ``ghosts[r]`` and
    ``ghost_antifields[r]`` are the generators attached to identity ``r``;
    ``corrections[r]``, if given, is added to the Koszul-Tate value of
    ``ghost_antifields[r]``.
    """

    stage: int
    generators: Sequence[Mapping[tuple, GradedPoly]]
    ghosts: Sequence[Var] = ()
    ghost_antifields: Sequence[Var] = ()
    corrections: Sequence[GradedPoly] | None = None

    def __post_init__(self):
        if self.stage < 0:
            raise ValueError("stage must be non-negative")
        gens = []
        for g in self.generators:
            clean = {}
            for (target, jet), p in g.items():
                if not isinstance(jet, MultiIndex):
                    jet = MultiIndex(jet)
                if not isinstance(p, GradedPoly):
                    p = GradedPoly.const(p)
                if p:
                    clean[(target.base(), jet)] = clean.get((target.base(), jet), ZERO) + p
            gens.append(clean)
        object.__setattr__(self, "generators", tuple(gens))
        object.__setattr__(self, "ghosts", tuple(self.ghosts))
        object.__setattr__(self, "ghost_antifields", tuple(self.ghost_antifields))
        if self.corrections is not None:
            object.__setattr__(self, "corrections", tuple(self.corrections))

    def __len__(self):
        return len(self.generators)

    def family(self, r: int, target: Var) -> dict:
        """``{Lambda: coefficient}`` of identity ``r`` on one target."""
        return {jet: p for (t, jet), p in self.generators[r].items() if t == target}

    def targets(self) -> list:
        return sorted({t for g in self.generators for (t, _) in g})

    def scaled(self, c) -> "NoetherIdentityData":
        gens = [{k: p.scale(c) for k, p in g.items()} for g in self.generators]
        corr = None if self.corrections is None else [p.scale(c) for p in self.corrections]
        return NoetherIdentityData(self.stage, gens, self.ghosts, self.ghost_antifields, corr)


@dataclass(frozen=True)
class ExtendedTheory:
    """Fields with their antifields plus ghosts and ghost antifields per stage."""

    fields: Sequence[Var]
    antifields: Mapping[Var, Var]
    ghosts: Sequence[Sequence[Var]] = ()
    ghost_antifields: Sequence[Sequence[Var]] = ()
    dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        object.__setattr__(self, "antifields", dict(self.antifields))
        object.__setattr__(self, "ghosts", tuple(tuple(s) for s in self.ghosts))
        object.__setattr__(self, "ghost_antifields", tuple(tuple(s) for s in self.ghost_antifields))
        if len(self.ghosts) != len(self.ghost_antifields):
            raise RosterMismatch("ghost and ghost-antifield rosters have different depths")
        for k, (gs, gas) in enumerate(zip(self.ghosts, self.ghost_antifields)):
            if len(gs) != len(gas):
                raise RosterMismatch(f"stage {k}: {len(gs)} ghosts but {len(gas)} ghost antifields")
        missing = [f for f in self.fields if f not in self.antifields]
        if missing:
            raise RosterMismatch(f"fields without antifields: {missing}")

    @classmethod
    def from_tower(cls, fields, antifields, tower: Sequence[NoetherIdentityData], dim: int = 1):
        return cls(fields, antifields, [t.ghosts for t in tower], [t.ghost_antifields for t in tower], dim)

    def pairing(self) -> list:
        out = [(f, self.antifields[f]) for f in self.fields]
        for gs, gas in zip(self.ghosts, self.ghost_antifields):
            out.extend(zip(gs, gas))
        return out

    def stage_targets(self, stage: int) -> list:
        """Generators whose Noether coefficients stage ``stage`` is built from."""
        return list(self.fields) if stage == 0 else list(self.ghosts[stage - 1])

    def stage_target_antifield(self, stage: int, target: Var) -> Var:
        if stage == 0:
            return self.antifields[target]
        prev = self.ghosts[stage - 1]
        return self.ghost_antifields[stage - 1][prev.index(target)]


def _check_tower(theory: ExtendedTheory, tower: Sequence[NoetherIdentityData]):
    if len(tower) != len(theory.ghosts):
        raise RosterMismatch(f"tower of depth {len(tower)} for a theory with {len(theory.ghosts)} ghost stages")
    for k, ni in enumerate(tower):
        if ni.stage != k:
            raise RosterMismatch(f"tower entry {k} has stage {ni.stage}")
        if len(ni) != len(theory.ghosts[k]):
            raise RosterMismatch(f"stage {k}: {len(ni)} identities for {len(theory.ghosts[k])} ghosts")
        allowed = set(theory.stage_targets(k))
        for t in ni.targets():
            if t not in allowed:
                raise RosterMismatch(f"stage {k} identity refers to {t}, which is not a stage-{k} target")


# ---------------------------------------------------------------------------
# Noether identities


def ni_residuals(ni: NoetherIdentityData, el) -> list:
    """``sum Delta^{A,Lambda} d_Lambda E_A`` for each identity of a stage-0 tower entry."""
    comps = el.components if isinstance(el, EulerLagrangeResult) else el
    out = []
    for g in ni.generators:
        res = ZERO
        for (target, jet), coeff in sorted(g.items(), key=lambda kv: (kv[0][0], kv[0][1].sort_key())):
            e = comps.get(target, ZERO)
            if e:
                res = res + coeff * iterated_total(e, jet)
        out.append(res)
    return out


def verify_ni(ni: NoetherIdentityData, el) -> GradedPoly:
    """Residual of the first failing identity, or zero when all of them hold."""
    for res in ni_residuals(ni, el):
        if res:
            return res
    return ZERO


# ---------------------------------------------------------------------------
# Koszul-Tate differential


def _antifield_combination(theory: ExtendedTheory, ni: NoetherIdentityData, r: int) -> GradedPoly:
    out = ZERO
    for (target, jet), coeff in sorted(ni.generators[r].items(), key=lambda kv: (kv[0][0], kv[0][1].sort_key())):
        bar = theory.stage_target_antifield(ni.stage, target)
        out = out + coeff * GradedPoly.var(bar.with_jet(jet))
    if ni.corrections is not None and r < len(ni.corrections):
        out = out + ni.corrections[r]
    return out


def kt_right_values(theory: ExtendedTheory, tower: Sequence[NoetherIdentityData], el) -> dict:
    """Values of the right Koszul-Tate derivation on antifield generators."""
    _check_tower(theory, tower)
    comps = el.components if isinstance(el, EulerLagrangeResult) else el
    out = {}
    for f in theory.fields:
        out[theory.antifields[f]] = comps.get(f, ZERO)
    for ni in tower:
        for r, bar in enumerate(ni.ghost_antifields):
            out[bar] = _antifield_combination(theory, ni, r)
    return out


def kt_differential(theory: ExtendedTheory, tower: Sequence[NoetherIdentityData], el) -> Derivation:
    """Koszul-Tate differential as a left derivation.

    On an antifield of an even field the value is its Euler-Lagrange
    component; in general ``D(g) = (-1)^(|g|+1) delta(g)`` where ``delta``
    is the right derivation of :func:`kt_right_values`.
    """
    right = kt_right_values(theory, tower, el)
    comps = {g: (p if g.parity else -p) for g, p in right.items()}
    return Derivation(comps, 1, "kt")


def check_kt_nilpotency(delta: Derivation) -> bool:
    return is_nilpotent(delta)


def tower_residuals(theory: ExtendedTheory, tower: Sequence[NoetherIdentityData], el) -> dict:
    """Nonzero squares of the Koszul-Tate differential, keyed by generator."""
    return nilpotency_residuals(kt_differential(theory, tower, el))


# ---------------------------------------------------------------------------
# gauge operator


def gauge_operator(theory: ExtendedTheory, tower: Sequence[NoetherIdentityData],
                   cap: int | None = None) -> Derivation:
    """Odd derivation ``u^A = sum_r sum_Lambda c^r_Lambda eta(Delta^A_r)^Lambda``.

    Stage ``k`` identities contribute components on the stage ``k-1``
    ghosts in the same way.
    """
    _check_tower(theory, tower)
    comps: dict = {}
    for ni in tower:
        for r, ghost in enumerate(ni.ghosts):
            for target in sorted({t for (t, _) in ni.generators[r]}):
                fam = ni.family(r, target)
                k = max(len(j) for j in fam)
                subs = {}
                for big in fam:
                    for sub in _submultisets(big):
                        subs[sub] = None
                acc = comps.get(target, ZERO)
                for sub in sorted(subs, key=MultiIndex.sort_key):
                    coeff = eta(fam, sub, k, cap)
                    if coeff:
                        acc = acc + GradedPoly.var(ghost.with_jet(sub)) * coeff
                comps[target] = acc
    return Derivation(comps, 1, "gauge")


def gauge_residual(u: Derivation, el, fields: Iterable[Var] | None = None) -> GradedPoly:
    """``sum_A u^A E_A`` over fields (all components of ``el`` by default)."""
    comps = el.components if isinstance(el, EulerLagrangeResult) else el
    keys = sorted(comps) if fields is None else sorted(fields)
    out = ZERO
    for f in keys:
        e = comps.get(f, ZERO)
        if e and u[f]:
            out = out + u[f] * e
    return out


def check_gauge_condition(theory: ExtendedTheory | None, u: Derivation, el) -> bool:
    """True iff ``sum_A u^A E_A`` over the fields is variationally trivial."""
    fields = None if theory is None else theory.fields
    return is_variationally_trivial(gauge_residual(u, el, fields))


# ---------------------------------------------------------------------------
# antibracket and master equation


def _pairing_list(pairing) -> list:
    if isinstance(pairing, ExtendedTheory):
        return pairing.pairing()
    return list(pairing)


def _check_paired(p: GradedPoly, pairing: list):
    bars = {b.base() for _, b in pairing}
    for g in p.generators():
        if g.kind in (Kind.ANTIFIELD, Kind.GHOST_ANTIFIELD) and g not in bars:
            raise UnpairedAntifield(f"antifield {g} has no partner in the pairing")


def _parity(p: GradedPoly) -> int:
    return p.parity() if p else 0


def _half_bracket(first: GradedPoly, second: GradedPoly, pairing: list) -> GradedPoly:
    """``sum_a (right d first / d zbar_a) (left d second / d z^a)``."""
    bars = [b for _, b in pairing]
    zs = [z for z, _ in pairing]
    right = euler_lagrange(first, bars, side="right").components
    left = euler_lagrange(second, zs, side="left").components
    out = ZERO
    for z, b in pairing:
        rb = right[b.base()]
        if rb:
            lz = left[z.base()]
            if lz:
                out = out + rb * lz
    return out


def antibracket(L1, L2, pairing) -> Density:
    """Antibracket of two densities.

    ``{L, L'} = (dR L / d zbar_a)(dL L' / d z^a)
              + (-1)^(|L||L'|) (dR L' / d zbar_a)(dL L / d z^a)``
    with variational derivatives throughout.
    """
    pairs = _pairing_list(pairing)
    p1, p2 = _coeff(L1), _coeff(L2)
    _check_paired(p1, pairs)
    _check_paired(p2, pairs)
    sign = -1 if (_parity(p1) and _parity(p2)) else 1
    val = _half_bracket(p1, p2, pairs) + _half_bracket(p2, p1, pairs).scale(sign)
    dim = L1.dim if isinstance(L1, Density) else (L2.dim if isinstance(L2, Density) else 1)
    return Density(val, dim)


def master_form(L, pairing) -> Density:
    """``2 (dR L / d zbar_a)(dL L / d z^a)``, the one-sided form of ``{L, L}``."""
    pairs = _pairing_list(pairing)
    p = _coeff(L)
    _check_paired(p, pairs)
    dim = L.dim if isinstance(L, Density) else 1
    return Density(_half_bracket(p, p, pairs).scale(2), dim)


def check_master_equation(L, pairing) -> bool:
    """True iff ``{L, L}`` is variationally trivial."""
    return is_variationally_trivial(antibracket(L, L, pairing))


def extend_lagrangian(L: Density, b: Derivation, theory: ExtendedTheory,
                      check: bool = True) -> Density:
    """``L + b(sum_a z^a zbar_a)`` for a nilpotent ``b``."""
    if check:
        res = nilpotency_residuals(b)
        if res:
            first = min(res)
            raise NotNilpotent(f"b is not nilpotent; b(b({first})) = {res[first]}")
    extra = ZERO
    for z, bar in theory.pairing():
        extra = extra + GradedPoly.var(z) * GradedPoly.var(bar)
    return Density(L.coefficient + apply(b, extra), L.dim)


# ---------------------------------------------------------------------------
# Noether currents


def noether_current(d: Derivation, L: Density, check: bool = True) -> CurrentVector:
    """Current ``J = contract(d, Xi) - sigma`` of a variational symmetry.

    ``sigma`` is an explicit divergence potential of the Lie derivative of
    ``L``.  The result satisfies ``sum_lam d_lam J^lam = -sum_A d^A E_A``.
    """
    lie = apply(d, L.coefficient)
    if check and not is_variationally_trivial(lie):
        raise NotASymmetry("the Lie derivative of the density is not a divergence")
    _, xi = lepage_decompose(L)
    cur = contract(d.components, xi)
    if not lie:
        return cur
    sigma = divergence_potential(lie, L.dim)
    if sigma.divergence() != lie:
        raise NotASymmetry("could not write the Lie derivative as an explicit divergence")
    out = dict(cur.components)
    for lam, q in sigma.components.items():
        out[lam] = out.get(lam, ZERO) - q
    return CurrentVector({k: q for k, q in out.items() if q})


def conservation_residual(J: CurrentVector, d: Derivation, L: Density) -> GradedPoly:
    """``sum d_lam J^lam + sum_A d^A E_A``; zero when ``J`` is conserved on shell."""
    el = euler_lagrange(L)
    return J.divergence() + gauge_residual(d, el)


# ---------------------------------------------------------------------------
# identities from a gauge operator


def ni_from_gauge(u: Derivation, markers: Mapping[Var, GradedPoly], ghosts: Sequence[Var]) -> list:
    """Noether identities implied by a gauge operator.

    ``markers`` maps each field to a placeholder expression for its
    Euler-Lagrange component (usually a marker variable).  The identity
    for ghost ``c`` is the variational derivative of ``sum_A u^A E_A`` in
    ``c``, returned with the placeholders left symbolic.
    """
    total = ZERO
    for f, e in sorted(markers.items()):
        if u[f]:
            total = total + u[f] * e
    el = euler_lagrange(total, list(ghosts), side="left")
    return [el[g] for g in ghosts]


def identity_from_markers(expr: GradedPoly, markers: Mapping[Var, Var]) -> dict:
    """Split ``sum coeff * d_Lambda E_A`` written in marker jets into a family.

    Every term must be linear in the marker variables; the result maps
    ``(field, Lambda)`` to the coefficient standing in front of the marker.
    """
    inverse = {m.base(): f for f, m in markers.items()}
    out: dict = {}
    for (even, odd), c in expr.terms.items():
        hit = [(i, w) for i, (w, e) in enumerate(even) if w.base() in inverse]
        if len(hit) != 1 or even[hit[0][0]][1] != 1 or any(w.base() in inverse for w in odd):
            raise ValueError("expression is not linear in the markers")
        i, w = hit[0]
        key = (inverse[w.base()], w.jet)
        rest = GradedPoly({(even[:i] + even[i + 1:], odd): c})
        out[key] = out.get(key, ZERO) + rest
    return {k: p for k, p in out.items() if p}


__all__ = [
    "NoetherIdentityData", "ExtendedTheory", "ni_residuals", "verify_ni", "kt_right_values",
    "kt_differential", "check_kt_nilpotency", "tower_residuals", "gauge_operator",
    "gauge_residual", "check_gauge_condition", "antibracket", "master_form",
    "check_master_equation", "extend_lagrangian", "noether_current",
    "conservation_residual", "ni_from_gauge", "identity_from_markers",
]
