"""Built-in field theories and whole-model verification.

Every model bundles a field roster, constant parameters, a Lagrangian (the
gravitation model has none), its Noether identity tower, named derivations
and the extended Lagrangian.  The same objects can be written to and read
from theory files, see :mod:`jetvar.frontend`.
"""

from __future__ import annotations

import itertools
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from .algebra import GradedPoly, Kind, Var, ZERO, as_scalar
from .brst import (
    ExtendedTheory,
    NoetherIdentityData,
    antibracket,
    extend_lagrangian,
    gauge_operator,
    gauge_residual,
    identity_from_markers,
    kt_differential,
    ni_from_gauge,
    ni_residuals,
)
from .calculus import Density, euler_lagrange, variational_residual
from .errors import ModelError, UnknownModel
from .symmetry import Derivation, nilpotency_residuals

BASE_RANGE = "base"


# ---------------------------------------------------------------------------
# roster


@dataclass(frozen=True)
class FieldDecl:
    """Declaration of an indexed family of generators."""

    name: str
    kind: Kind
    ranges: tuple = ()
    parity: int = 0
    ghost: int = 0
    antifield: int = 0
    stage: int | None = None
    partner: str | None = None
    symmetric: bool = False
    maxorder: int | None = None


class Roster:
    """Slot assignment for declared generators.

    Slots are handed out in declaration order, and inside one declaration
    in lexicographic order of the index tuple.  A symmetric declaration
    only owns nondecreasing index tuples.
    """

    def __init__(self, dim: int, ranges: Mapping[str, int], decls: Sequence[FieldDecl]):
        self.dim = dim
        self.ranges = dict(ranges)
        self.ranges[BASE_RANGE] = dim
        self.decls = {d.name: d for d in decls}
        self.order = [d.name for d in decls]
        self._vars: dict = {}
        self._by_decl: dict = {}
        slot = 0
        for d in decls:
            tuples = self.index_tuples(d)
            out = []
            for idx in tuples:
                v = Var(d.kind, slot, (), d.parity, d.ghost, d.antifield, d.name, idx)
                self._vars[(d.name, idx)] = v
                out.append(v)
                slot += 1
            self._by_decl[d.name] = out

    def size(self, rng: str) -> int:
        try:
            return self.ranges[rng]
        except KeyError:
            raise ModelError(f"unknown index range {rng!r}") from None

    def index_tuples(self, d: FieldDecl) -> list:
        sizes = [range(self.size(r)) for r in d.ranges]
        tuples = list(itertools.product(*sizes))
        if d.symmetric:
            tuples = [t for t in tuples if list(t) == sorted(t)]
        return tuples

    def canonical(self, name: str, idx: tuple) -> tuple:
        d = self.decls[name]
        idx = tuple(idx)
        if len(idx) != len(d.ranges):
            raise ModelError(f"{name} takes {len(d.ranges)} indices, got {len(idx)}")
        for i, r in zip(idx, d.ranges):
            if not 0 <= i < self.size(r):
                raise ModelError(f"index {i} out of range {r} for {name}")
        return tuple(sorted(idx)) if d.symmetric else idx

    def var(self, name: str, *idx, jet=()) -> Var:
        v = self._vars[(name, self.canonical(name, idx))]
        return v.with_jet(jet) if jet else v

    def p(self, name: str, *idx, jet=()) -> GradedPoly:
        return GradedPoly.var(self.var(name, *idx, jet=jet))

    def marker(self, name: str, *idx, jet=()) -> Var:
        v = self.var(name, *idx)
        return Var(Kind.MARKER, v.slot, jet, v.parity, 0, 0, v.name, v.idx)

    def generators(self, name: str) -> list:
        return list(self._by_decl[name])

    def of_kind(self, kind: Kind) -> list:
        return [v for n in self.order for v in self._by_decl[n] if self.decls[n].kind == kind]

    def partner_map(self) -> dict:
        """``{generator: antifield}`` for every declared antifield family."""
        out = {}
        for n in self.order:
            d = self.decls[n]
            if d.partner is None:
                continue
            for bar in self._by_decl[n]:
                out[self.var(d.partner, *bar.idx)] = bar
        return out

    def extended_theory(self) -> ExtendedTheory | None:
        partners = self.partner_map()
        fields = self.of_kind(Kind.FIELD)
        if not partners or any(f not in partners for f in fields):
            return None
        stages: dict = {}
        for g in self.of_kind(Kind.GHOST):
            stages.setdefault(self.decls[g.name].stage or 0, []).append(g)
        depth = max(stages, default=-1) + 1
        ghosts, bars = [], []
        for k in range(depth):
            gs = sorted(stages.get(k, []))
            if any(g not in partners for g in gs):
                return None
            ghosts.append(gs)
            bars.append([partners[g] for g in gs])
        return ExtendedTheory(fields, {f: partners[f] for f in fields}, ghosts, bars, self.dim)


def antifield_decl(name: str, partner: FieldDecl) -> FieldDecl:
    """Antifield family of ``partner`` with the standard gradings."""
    if partner.kind == Kind.FIELD:
        kind, gh, ant = Kind.ANTIFIELD, -1, 1
    elif partner.kind == Kind.GHOST:
        k = partner.stage or 0
        kind, gh, ant = Kind.GHOST_ANTIFIELD, -(k + 2), k + 2
    else:
        raise ModelError(f"{partner.name} cannot carry an antifield")
    return FieldDecl(name, kind, partner.ranges, partner.parity ^ 1, gh, ant, None, partner.name,
                     partner.symmetric, partner.maxorder)


def ghost_decl(name: str, ranges: tuple, stage: int = 0, parity: int | None = None) -> FieldDecl:
    if parity is None:
        parity = (stage + 1) & 1
    return FieldDecl(name, Kind.GHOST, ranges, parity, stage + 1, 0, stage)


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class Param:
    """A constant tensor stored sparsely as ``{index tuple: value}``."""

    name: str
    ranges: tuple
    role: str = "constant"
    values: Mapping[tuple, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for k, v in self.values.items():
            v = as_scalar(v)
            if len(k) != len(self.ranges):
                raise ModelError(f"parameter {self.name}: entry {k} has the wrong arity")
            if v != 0:
                clean[tuple(k)] = v
        object.__setattr__(self, "values", clean)
        object.__setattr__(self, "ranges", tuple(self.ranges))

    def __call__(self, *idx):
        return self.values.get(tuple(idx), 0)


def levi_civita_values(n: int) -> dict:
    out = {}
    for perm in itertools.permutations(range(n)):
        inv = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        out[perm] = -1 if inv & 1 else 1
    return out


def delta_values(n: int) -> dict:
    return {(i, i): 1 for i in range(n)}


def diag_values(entries: Sequence) -> dict:
    return {(i, i): as_scalar(v) for i, v in enumerate(entries) if v != 0}


def _det(rows: list) -> Fraction:
    m = [[Fraction(x) for x in r] for r in rows]
    n = len(m)
    det = Fraction(1)
    for col in range(n):
        piv = next((r for r in range(col, n) if m[r][col] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            m[col], m[piv] = m[piv], m[col]
            det = -det
        det *= m[col][col]
        for r in range(col + 1, n):
            f = m[r][col] / m[col][col]
            if f:
                for c in range(col, n):
                    m[r][c] -= f * m[col][c]
    return det


def parameter_problems(p: Param, sizes: Mapping[str, int]) -> list:
    """Human-readable violations of the invariants implied by the role."""
    dims = [sizes[r] for r in p.ranges]
    probs = []
    if p.role in ("metric", "killing"):
        if len(dims) != 2 or dims[0] != dims[1]:
            return [f"{p.name}: a {p.role} needs two equal ranges"]
        n = dims[0]
        if any(p(i, j) != p(j, i) for i in range(n) for j in range(n)):
            probs.append(f"{p.name} is not symmetric")
        if _det([[p(i, j) for j in range(n)] for i in range(n)]) == 0:
            probs.append(f"{p.name} is not invertible")
    elif p.role == "structure":
        if len(dims) != 3 or len(set(dims)) != 1:
            return [f"{p.name}: structure constants need three equal ranges"]
        n = dims[0]
        for r, a, b in itertools.product(range(n), repeat=3):
            if p(r, a, b) != -p(r, b, a):
                probs.append(f"{p.name}[{r},{a},{b}] is not antisymmetric in its lower indices")
                break
        for r, a, b, c in itertools.product(range(n), repeat=4):
            jac = sum(p(s, a, b) * p(r, s, c) + p(s, b, c) * p(r, s, a) + p(s, c, a) * p(r, s, b)
                      for s in range(n))
            if jac != 0:
                probs.append(f"{p.name} violates the Jacobi identity at ({r};{a},{b},{c})")
                break
    elif p.role == "levi_civita":
        n = len(dims)
        for idx in itertools.product(*(range(d) for d in dims)):
            for i in range(n - 1):
                sw = list(idx)
                sw[i], sw[i + 1] = sw[i + 1], sw[i]
                if p(*idx) != -p(*sw):
                    probs.append(f"{p.name} is not totally antisymmetric")
                    return probs
    return probs


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class TheoryModel:
    name: str
    dim: int
    ranges: Mapping[str, int]
    decls: tuple
    params: Mapping[str, Param] = field(default_factory=dict)
    lagrangian: Density | None = None
    tower: tuple = ()
    derivations: Mapping[str, Derivation] = field(default_factory=dict)
    extended: Density | None = None
    display: str = "plain"

    def __post_init__(self):
        object.__setattr__(self, "decls", tuple(self.decls))
        object.__setattr__(self, "tower", tuple(self.tower))
        object.__setattr__(self, "ranges", {k: v for k, v in self.ranges.items() if k != BASE_RANGE})

    @property
    def roster(self) -> Roster:
        cached = self.__dict__.get("_roster")
        if cached is None:
            cached = Roster(self.dim, self.ranges, self.decls)
            object.__setattr__(self, "_roster", cached)
        return cached

    @property
    def theory(self) -> ExtendedTheory | None:
        return self.roster.extended_theory()

    @property
    def fields(self) -> list:
        return self.roster.of_kind(Kind.FIELD)

    def derivation(self, name: str) -> Derivation:
        try:
            return self.derivations[name]
        except KeyError:
            known = ", ".join(sorted(self.derivations)) or "none"
            raise ModelError(f"model {self.name} has no derivation {name!r} (known: {known})") from None

    def parameter_problems(self) -> list:
        sizes = dict(self.ranges)
        sizes[BASE_RANGE] = self.dim
        out = []
        for p in self.params.values():
            out.extend(parameter_problems(p, sizes))
        return out

    def euler_lagrange(self):
        if self.lagrangian is None:
            raise ModelError(f"model {self.name} has no Lagrangian")
        return euler_lagrange(self.lagrangian, self.fields)

    def __eq__(self, other):
        if not isinstance(other, TheoryModel):
            return NotImplemented
        return (self.name, self.dim, dict(self.ranges), self.decls, dict(self.params), self.lagrangian,
                self.tower, dict(self.derivations), self.extended, self.display) == \
               (other.name, other.dim, dict(other.ranges), other.decls, dict(other.params), other.lagrangian,
                other.tower, dict(other.derivations), other.extended, other.display)

    __hash__ = None

    def differences(self, other: "TheoryModel") -> list:
        """Names of the attributes that differ; empty when the models are equal."""
        out = []
        for attr in ("name", "dim", "ranges", "decls", "params", "lagrangian", "tower",
                     "derivations", "extended", "display"):
            a, b = getattr(self, attr), getattr(other, attr)
            if isinstance(a, Mapping):
                a, b = dict(a), dict(b)
            if a != b:
                out.append(attr)
        return out


def tower_from_markers(roster: Roster, stage: int, entries: Sequence[tuple]) -> NoetherIdentityData:
    """Build a tower stage from ``(ghost, expression)`` pairs.

    Stage-0 expressions are linear in Euler-Lagrange markers; higher stages
    are linear in the previous stage's ghost antifields.
    """
    entries = sorted(entries, key=lambda e: e[0])
    partners = roster.partner_map()
    gens = []
    corrections = []
    for ghost, expr in entries:
        if stage == 0:
            markers = {f: roster.marker(f.name, *f.idx) for f in roster.of_kind(Kind.FIELD)}
            gens.append(identity_from_markers(expr, markers))
            corrections.append(ZERO)
        else:
            prev = [g for g in roster.of_kind(Kind.GHOST) if (roster.decls[g.name].stage or 0) == stage - 1]
            targets = {g: partners[g] for g in prev}
            lin, rest = _split_linear(expr, targets)
            gens.append(lin)
            corrections.append(rest)
    ghosts = [g for g, _ in entries]
    bars = [partners.get(g) for g in ghosts]
    if any(b is None for b in bars):
        raise ModelError("every ghost carrying an identity needs an antifield")
    corr = corrections if any(corrections) else None
    return NoetherIdentityData(stage, gens, ghosts, bars, corr)


def _split_linear(expr: GradedPoly, targets: Mapping[Var, Var]):
    inverse = {bar: g for g, bar in targets.items()}
    lin: dict = {}
    rest = ZERO
    for (even, odd), c in expr.terms.items():
        hits = [w for w, _ in even if w.base() in inverse] + [w for w in odd if w.base() in inverse]
        others = [w for w, _ in even if w.kind in (Kind.ANTIFIELD, Kind.GHOST_ANTIFIELD) and w.base() not in inverse]
        others += [w for w in odd if w.kind in (Kind.ANTIFIELD, Kind.GHOST_ANTIFIELD) and w.base() not in inverse]
        if len(hits) == 1 and not others and dict(even).get(hits[0], 1) == 1:
            w = hits[0]
            if w.parity:
                i = odd.index(w)
                coeff = GradedPoly({(even, odd[:i] + odd[i + 1:]): -c if i & 1 else c})
            else:
                rem = tuple((v, e) for v, e in even if v != w)
                coeff = GradedPoly({(rem, odd): c})
            key = (inverse[w.base()], w.jet)
            lin[key] = lin.get(key, ZERO) + coeff
        else:
            rest = rest + GradedPoly({(even, odd): c})
    return {k: v for k, v in lin.items() if v}, rest


# ---------------------------------------------------------------------------
# builders


def _sum(items: Iterable[GradedPoly]) -> GradedPoly:
    out = ZERO
    for p in items:
        out = out + p
    return out


def free_scalar(dim: int = 2, metric: Sequence | None = None) -> TheoryModel:
    """``1/2 g^{lm} y_l y_m`` with a diagonal inverse metric (default Minkowski)."""
    if metric is None:
        metric = [1] + [-1] * (dim - 1)
    g = Param("g", (BASE_RANGE, BASE_RANGE), "metric", diag_values(metric))
    decls = (FieldDecl("y", Kind.FIELD, (), 0, 0, 0),)
    ro = Roster(dim, {}, decls)
    y = ro.p
    lag = _sum(y("y", jet=(l,)) * y("y", jet=(m,)) * g(l, m)
               for l in range(dim) for m in range(dim) if g(l, m)).scale(Fraction(1, 2))
    translation = Derivation({ro.var("y"): y("y", jet=(0,))}, 0, "translation")
    shift = Derivation({ro.var("y"): GradedPoly.const(1)}, 0, "shift")
    return TheoryModel("free-scalar", dim, {}, decls, {"g": g}, Density(lag, dim), (),
                       {"translation": translation, "shift": shift})


def _strength(ro: Roster, f: Param | None, r: int, l: int, m: int, ncol: int) -> GradedPoly:
    """``d_l a^r_m - d_m a^r_l + f^r_{pq} a^p_l a^q_m``."""
    out = ro.p("a", r, m, jet=(l,)) - ro.p("a", r, l, jet=(m,))
    if f is not None:
        for p in range(ncol):
            for q in range(ncol):
                k = f(r, p, q)
                if k:
                    out = out + ro.p("a", p, l) * ro.p("a", q, m) * k
    return out


def maxwell(dim: int = 4, metric: Sequence | None = None) -> TheoryModel:
    """Free electromagnetism with its single gauge identity."""
    if metric is None:
        metric = [1] + [-1] * (dim - 1)
    g = Param("eta", (BASE_RANGE, BASE_RANGE), "metric", diag_values(metric))
    a = FieldDecl("a", Kind.FIELD, (BASE_RANGE,), 0, 0, 0)
    c = ghost_decl("c", ())
    decls = (a, c, antifield_decl("abar", a), antifield_decl("cbar", c))
    ro = Roster(dim, {}, decls)

    def F(l, m):
        return ro.p("a", m, jet=(l,)) - ro.p("a", l, jet=(m,))

    lag = _sum(F(l, n) * F(m, s) * (g(l, m) * g(n, s))
               for l, m, n, s in itertools.product(range(dim), repeat=4)
               if g(l, m) and g(n, s)).scale(Fraction(-1, 4))
    ni_expr = _sum(GradedPoly.var(ro.marker("a", l, jet=(l,))) for l in range(dim)).scale(-1)
    tower = (tower_from_markers(ro, 0, [(ro.var("c"), ni_expr)]),)
    gauge = Derivation({ro.var("a", l): ro.p("c", jet=(l,)) for l in range(dim)}, 1, "gauge")
    theory = ro.extended_theory()
    model = TheoryModel("maxwell", dim, {}, decls, {"eta": g}, Density(lag, dim), tower,
                        {"gauge": gauge, "brst": Derivation(gauge.components, 1, "brst")})
    ext = extend_lagrangian(model.lagrangian, gauge, theory)
    return _with(model, extended=ext)


def _with(model: TheoryModel, **changes) -> TheoryModel:
    data = {k: getattr(model, k) for k in ("name", "dim", "ranges", "decls", "params", "lagrangian",
                                            "tower", "derivations", "extended", "display")}
    data.update(changes)
    return TheoryModel(**data)


def _colour_terms(ro: Roster, f: Param, ncol: int, ghost: Callable[[int], GradedPoly], r: int, l: int):
    """``-f^r_{ji} c^j a^i_l`` with an arbitrary even or odd colour parameter."""
    out = ZERO
    for j in range(ncol):
        for i in range(ncol):
            k = f(r, j, i)
            if k:
                out = out - ghost(j) * ro.p("a", i, l) * k
    return out


def yang_mills(structure: Mapping | None = None, metric: Sequence | None = None,
               killing: Mapping | None = None, dim: int = 4, ncol: int = 3,
               name: str = "yang-mills-su2") -> TheoryModel:
    """Yang-Mills theory; the defaults give gauge group SU(2) on Minkowski space.

    Parameters violating their invariants (e.g. a broken Jacobi identity)
    only produce warnings; the verification report shows the consequences.
    """
    if structure is None:
        structure = {(r, p, q): v for (r, p, q), v in levi_civita_values(3).items()}
    if metric is None:
        metric = [1] + [-1] * (dim - 1)
    if killing is None:
        killing = delta_values(ncol)
    f = Param("f", ("g", "g", "g"), "structure", structure)
    h = Param("h", ("g", "g"), "killing", killing)
    g = Param("eta", (BASE_RANGE, BASE_RANGE), "metric", diag_values(metric))
    ranges = {"g": ncol}
    for prob in parameter_problems(f, {"g": ncol}) + parameter_problems(h, {"g": ncol}):
        warnings.warn(prob, stacklevel=2)
    a = FieldDecl("a", Kind.FIELD, ("g", BASE_RANGE), 0, 0, 0)
    c = ghost_decl("c", ("g",))
    decls = (a, c, antifield_decl("abar", a), antifield_decl("cbar", c))
    ro = Roster(dim, ranges, decls)

    F = {(r, l, m): _strength(ro, f, r, l, m, ncol)
         for r in range(ncol) for l in range(dim) for m in range(dim)}
    lag = ZERO
    for mm, nn in itertools.product(range(ncol), repeat=2):
        if not h(mm, nn):
            continue
        for l, m, n, s in itertools.product(range(dim), repeat=4):
            k = h(mm, nn) * g(l, m) * g(n, s)
            if k:
                lag = lag + F[mm, l, n] * F[nn, m, s] * k
    lag = lag.scale(Fraction(-1, 4))

    entries = []
    for j in range(ncol):
        expr = ZERO
        for r, i, l in itertools.product(range(ncol), range(ncol), range(dim)):
            k = f(r, j, i)
            if k:
                expr = expr - ro.p("a", i, l) * GradedPoly.var(ro.marker("a", r, l)) * k
        for l in range(dim):
            expr = expr - GradedPoly.var(ro.marker("a", j, l, jet=(l,)))
        entries.append((ro.var("c", j), expr))
    tower = (tower_from_markers(ro, 0, entries),)

    ghost = lambda j: ro.p("c", j)  # noqa: E731
    gauge = Derivation({ro.var("a", r, l): _colour_terms(ro, f, ncol, ghost, r, l) + ro.p("c", r, jet=(l,))
                        for r in range(ncol) for l in range(dim)}, 1, "gauge")
    ghost_part = {}
    for r in range(ncol):
        val = ZERO
        for i, j in itertools.product(range(ncol), repeat=2):
            k = f(r, i, j)
            if k:
                val = val + ro.p("c", i) * ro.p("c", j) * k
        ghost_part[ro.var("c", r)] = val.scale(Fraction(-1, 2))
    brst = Derivation({**gauge.components, **ghost_part}, 1, "brst")
    derivs = {"gauge": gauge, "brst": brst}
    for k in range(ncol):
        unit = lambda j, k=k: GradedPoly.const(1 if j == k else 0)  # noqa: E731
        derivs[f"colour{k}"] = Derivation(
            {ro.var("a", r, l): _colour_terms(ro, f, ncol, unit, r, l)
             for r in range(ncol) for l in range(dim)}, 0, f"colour{k}")
    model = TheoryModel(name, dim, ranges, decls, {"f": f, "h": h, "eta": g}, Density(lag, dim), tower, derivs)
    ext = extend_lagrangian(model.lagrangian, brst, ro.extended_theory(), check=False)
    return _with(model, extended=ext)


def chern_simons(structure: Mapping | None = None, killing: Mapping | None = None,
                 ncol: int = 3, diffeo_ghost_fix: bool = True) -> TheoryModel:
    """Local Chern-Simons theory in three dimensions (gauge group SU(2) by default).

    The ghost-number-one generators are the colour ghosts ``c`` and the
    diffeomorphism ghosts ``xi``.  With ``diffeo_ghost_fix`` the BRST
    operator also transports the colour ghosts along ``xi``; without that
    term it is not nilpotent.
    """
    dim = 3
    if structure is None:
        structure = levi_civita_values(3)
    if killing is None:
        killing = delta_values(ncol)
    f = Param("f", ("g", "g", "g"), "structure", structure)
    h = Param("h", ("g", "g"), "killing", killing)
    eps = Param("eps", (BASE_RANGE,) * 3, "levi_civita", levi_civita_values(3))
    ranges = {"g": ncol}
    a = FieldDecl("a", Kind.FIELD, ("g", BASE_RANGE), 0, 0, 0)
    c = ghost_decl("c", ("g",))
    xi = ghost_decl("xi", (BASE_RANGE,))
    decls = (a, c, xi, antifield_decl("abar", a), antifield_decl("cbar", c), antifield_decl("xibar", xi))
    ro = Roster(dim, ranges, decls)

    lag = ZERO
    for mm, nn in itertools.product(range(ncol), repeat=2):
        if not h(mm, nn):
            continue
        for al, be, ga in itertools.permutations(range(3)):
            k = h(mm, nn) * eps(al, be, ga)
            cubic = ZERO
            for p, q in itertools.product(range(ncol), repeat=2):
                if f(nn, p, q):
                    cubic = cubic + ro.p("a", p, be) * ro.p("a", q, ga) * f(nn, p, q)
            inner = _strength(ro, f, nn, be, ga, ncol) - cubic.scale(Fraction(1, 3))
            lag = lag + ro.p("a", mm, al) * inner * k
    lag = lag.scale(Fraction(1, 2))

    colour = []
    for j in range(ncol):
        expr = ZERO
        for r, i, l in itertools.product(range(ncol), range(ncol), range(dim)):
            k = f(r, j, i)
            if k:
                expr = expr - ro.p("a", i, l) * GradedPoly.var(ro.marker("a", r, l)) * k
        for l in range(dim):
            expr = expr - GradedPoly.var(ro.marker("a", j, l, jet=(l,)))
        colour.append((ro.var("c", j), expr))
    diffeo = []
    for mu in range(dim):
        expr = ZERO
        for r, l in itertools.product(range(ncol), range(dim)):
            e = GradedPoly.var(ro.marker("a", r, l))
            e_l = GradedPoly.var(ro.marker("a", r, l, jet=(l,)))
            expr = expr - ro.p("a", r, l, jet=(mu,)) * e
            expr = expr + ro.p("a", r, mu, jet=(l,)) * e + ro.p("a", r, mu) * e_l
        diffeo.append((ro.var("xi", mu), expr))
    tower = (tower_from_markers(ro, 0, colour + diffeo),)

    ghost = lambda j: ro.p("c", j)  # noqa: E731
    gauge_comps = {}
    for r, l in itertools.product(range(ncol), range(dim)):
        val = _colour_terms(ro, f, ncol, ghost, r, l) + ro.p("c", r, jet=(l,))
        for mu in range(dim):
            val = val - ro.p("xi", mu, jet=(l,)) * ro.p("a", r, mu) - ro.p("xi", mu) * ro.p("a", r, l, jet=(mu,))
        gauge_comps[ro.var("a", r, l)] = val
    gauge = Derivation(gauge_comps, 1, "gauge")
    brst_comps = dict(gauge_comps)
    for r in range(ncol):
        val = ZERO
        for i, j in itertools.product(range(ncol), repeat=2):
            if f(r, i, j):
                val = val + ro.p("c", i) * ro.p("c", j) * f(r, i, j)
        val = val.scale(Fraction(-1, 2))
        if diffeo_ghost_fix:
            val = val - _sum(ro.p("xi", mu) * ro.p("c", r, jet=(mu,)) for mu in range(dim))
        brst_comps[ro.var("c", r)] = val
    for l in range(dim):
        brst_comps[ro.var("xi", l)] = _sum(ro.p("xi", l, jet=(mu,)) * ro.p("xi", mu) for mu in range(dim))
    brst = Derivation(brst_comps, 1, "brst")

    model = TheoryModel("chern-simons-3d", dim, ranges, decls, {"f": f, "h": h, "eps": eps},
                        Density(lag, dim), tower, {"gauge": gauge, "brst": brst})
    ext = extend_lagrangian(model.lagrangian, brst, ro.extended_theory(), check=False)
    return _with(model, extended=ext)


def chern_simons_printed_brst() -> Derivation:
    """The Chern-Simons BRST operator without transport of the colour ghosts."""
    return chern_simons(diffeo_ghost_fix=False).derivations["brst"]


def gravitation(dim: int = 4) -> TheoryModel:
    """Metric-affine gauge gravitation: symmetric ``sigma`` and connection ``k``.

    ``k[m,a,b]`` is ``k_m{}^a{}_b``; a jet index comes first, so
    ``k[m,a,b;l]`` is ``d_l k_m{}^a{}_b``.  No Lagrangian is fixed; the
    Noether identities are stored with Euler-Lagrange markers.  For the
    symmetric field the marker of generator ``sigma[a,b]`` (``a <= b``)
    is the derivative in that independent coordinate, so the tensor
    component ``E_{ab}`` equals half the marker off the diagonal.
    """
    B = BASE_RANGE
    sig = FieldDecl("sigma", Kind.FIELD, (B, B), 0, 0, 0, symmetric=True)
    k = FieldDecl("k", Kind.FIELD, (B, B, B), 0, 0, 0)
    c = ghost_decl("c", (B,))
    decls = (sig, k, c, antifield_decl("sigmabar", sig), antifield_decl("kbar", k), antifield_decl("cbar", c))
    ro = Roster(dim, {}, decls)
    n = range(dim)
    wsym = Param("wsym", (B, B), "constant",
                 {(a, b): (1 if a == b else Fraction(1, 2)) for a in n for b in n})
    delta = Param("delta", (B, B), "constant", delta_values(dim))

    def c_(a, *jet):
        return ro.p("c", a, jet=jet)

    def s_(a, b, *jet):
        return ro.p("sigma", a, b, jet=jet)

    def k_(m, a, b, *jet):
        return ro.p("k", m, a, b, jet=jet)

    def E_s(a, b, *jet):
        return GradedPoly.var(ro.marker("sigma", a, b, jet=jet)).scale(wsym(a, b))

    def E_k(m, a, b, *jet):
        return GradedPoly.var(ro.marker("k", m, a, b, jet=jet))

    entries = []
    for lam in n:
        expr = ZERO
        for al, be in itertools.product(n, n):
            coeff = -s_(al, be, lam)
            if al == lam:
                coeff = coeff - _sum(s_(nu, be, nu) for nu in n).scale(2)
            expr = expr + coeff * E_s(al, be)
        for nu, be in itertools.product(n, n):
            expr = expr - (s_(nu, be) * E_s(lam, be, nu)).scale(2)
        for mu, al, be in itertools.product(n, n, n):
            coeff = -k_(mu, al, be, lam) + k_(mu, al, lam, be) + k_(lam, al, be, mu)
            if al == lam:
                coeff = coeff - _sum(k_(mu, nu, be, nu) for nu in n)
            expr = expr + coeff * E_k(mu, al, be)
        for mu, al, be, nu in itertools.product(n, n, n, n):
            coeff = ZERO
            if al == lam:
                coeff = coeff - k_(mu, nu, be)
            if nu == be:
                coeff = coeff + k_(mu, al, lam)
            if nu == mu:
                coeff = coeff + k_(lam, al, be)
            if coeff:
                expr = expr + coeff * E_k(mu, al, be, nu)
        for mu, be in itertools.product(n, n):
            expr = expr + E_k(mu, lam, be, mu, be)
        entries.append((ro.var("c", lam), expr))
    tower = (tower_from_markers(ro, 0, entries),)

    comps = {}
    for sv in ro.generators("sigma"):
        al, be = sv.idx
        val = _sum(s_(nu, be) * c_(al, nu) + s_(al, nu) * c_(be, nu) - c_(nu) * s_(al, be, nu) for nu in n)
        comps[sv] = val
    for kv in ro.generators("k"):
        mu, al, be = kv.idx
        val = c_(al, mu, be)
        for nu in n:
            val = val + c_(al, nu) * k_(mu, nu, be) - c_(nu, be) * k_(mu, al, nu) - c_(nu, mu) * k_(nu, al, be)
            val = val - c_(nu) * k_(mu, al, be, nu)
        comps[kv] = val
    gauge = Derivation(comps, 1, "gauge")
    ghost_comps = {ro.var("c", l): _sum(c_(l, mu) * c_(mu) for mu in n) for l in n}
    brst = Derivation({**comps, **ghost_comps}, 1, "brst")
    model = TheoryModel("gravitation-gauge", dim, {}, decls, {"wsym": wsym, "delta": delta}, None, tower, {"gauge": gauge, "brst": brst})
    zero = Density(ZERO, dim)
    ext = extend_lagrangian(zero, brst, ro.extended_theory(), check=False)
    return _with(model, extended=ext)


BUILTINS: dict[str, Callable[[], TheoryModel]] = {
    "free-scalar": free_scalar,
    "maxwell": maxwell,
    "yang-mills-su2": yang_mills,
    "chern-simons-3d": chern_simons,
    "gravitation-gauge": gravitation,
}

_CACHE: dict = {}


def builtin(name: str) -> TheoryModel:
    """One of the shipped models by name."""
    if name not in BUILTINS:
        raise UnknownModel(f"unknown model {name!r}; choose from {', '.join(sorted(BUILTINS))}")
    if name not in _CACHE:
        _CACHE[name] = BUILTINS[name]()
    return _CACHE[name]


def corrupted_yang_mills(entry: tuple = (2, 0, 1), delta=1) -> TheoryModel:
    """Yang-Mills with one structure constant shifted by ``delta``."""
    vals = dict(levi_civita_values(3))
    vals[entry] = vals.get(entry, 0) + delta
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return yang_mills(structure=vals, name="yang-mills-corrupted")


# ---------------------------------------------------------------------------
# verification report


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    residual: str | None
    millis: float

    @property
    def status(self) -> str:
        return "pass" if self.passed else "fail"

    def as_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "residual": self.residual,
                "millis": round(self.millis, 3)}


@dataclass(frozen=True)
class Report:
    model: str
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self, version: str) -> dict:
        return {"model": self.model, "checks": [c.as_dict() for c in self.checks], "engine-version": version}


def _residual_text(res) -> str | None:
    if res is None:
        return None
    if isinstance(res, GradedPoly):
        return None if res.is_zero() else str(res)
    if isinstance(res, Mapping):
        if not res:
            return None
        k = min(res)
        return f"{k}: {res[k]}"
    return str(res)


def _first_nonzero(items) -> GradedPoly | None:
    for p in items:
        if p:
            return p
    return None


def model_checks(m: TheoryModel) -> list:
    """``(name, thunk)`` pairs; each thunk returns a residual (falsy on success)."""
    checks = []
    theory = m.theory
    el = None
    if m.lagrangian is not None:
        def el_fn():
            nonlocal el
            if el is None:
                el = m.euler_lagrange()
            return el
    if m.params:
        checks.append(("parameters", lambda: "; ".join(m.parameter_problems()) or None))
    if m.tower and m.lagrangian is not None:
        checks.append(("noether-identities", lambda: _first_nonzero(ni_residuals(m.tower[0], el_fn()))))
        if theory is not None:
            checks.append(("kt-nilpotency",
                           lambda: nilpotency_residuals(kt_differential(theory, m.tower, el_fn()))))
    if m.tower and m.lagrangian is None:
        checks.append(("noether-identities-from-gauge", lambda: _gauge_identity_residual(m)))
    if m.tower and theory is not None and "gauge" in m.derivations:
        checks.append(("gauge-from-identities", lambda: _gauge_mismatch(m, theory)))
    if "gauge" in m.derivations and m.lagrangian is not None:
        def gauge_check():
            return variational_residual(gauge_residual(m.derivations["gauge"], el_fn(), m.fields))
        checks.append(("gauge-condition", gauge_check))
    if "brst" in m.derivations:
        checks.append(("brst-nilpotency", lambda: nilpotency_residuals(m.derivations["brst"])))
    if m.extended is not None and theory is not None:
        checks.append(("master-equation",
                       lambda: variational_residual(antibracket(m.extended, m.extended, theory))))
    return checks


def _gauge_mismatch(m: TheoryModel, theory: ExtendedTheory):
    built = gauge_operator(theory, m.tower)
    given = m.derivations["gauge"]
    diff = {v: built[v] - given[v] for v in set(built.components) | set(given.components)}
    return {v: p for v, p in diff.items() if p}


def _gauge_identity_residual(m: TheoryModel):
    ro = m.roster
    u = m.derivations["gauge"]
    markers = {f: GradedPoly.var(ro.marker(f.name, *f.idx)) for f in ro.of_kind(Kind.FIELD)}
    ni = m.tower[0]
    derived = ni_from_gauge(u, markers, ni.ghosts)
    out = {}
    for r, ghost in enumerate(ni.ghosts):
        encoded = _sum(coeff * GradedPoly.var(ro.marker(t.name, *t.idx, jet=jet))
                       for (t, jet), coeff in ni.generators[r].items())
        diff = encoded - derived[r]
        if diff:
            out[ghost] = diff
    return out


def verify_model(m: TheoryModel, jobs: int = 1) -> Report:
    """Run every applicable check; failures become report entries."""
    checks = model_checks(m)
    results = []
    for name, fn in checks:
        t0 = time.perf_counter()
        try:
            res = fn()
            text = _residual_text(res)
            ok = text is None
        except Exception as exc:  # a crashing check is a failed check
            ok, text = False, f"{type(exc).__name__}: {exc}"
        results.append(Check(name, ok, text, (time.perf_counter() - t0) * 1000))
    return Report(m.name, tuple(results))


def check_names(m: TheoryModel) -> list:
    return [name for name, _ in model_checks(m)]


def run_single_check(m: TheoryModel, name: str) -> Check:
    for cname, fn in model_checks(m):
        if cname == name:
            t0 = time.perf_counter()
            try:
                text = _residual_text(fn())
                ok = text is None
            except Exception as exc:
                ok, text = False, f"{type(exc).__name__}: {exc}"
            return Check(name, ok, text, (time.perf_counter() - t0) * 1000)
    raise ModelError(f"model {m.name} has no check {name!r}")


__all__ = [
    "FieldDecl", "Roster", "Param", "TheoryModel", "builtin", "BUILTINS", "verify_model", "Report",
    "Check", "free_scalar", "maxwell", "yang_mills", "chern_simons", "gravitation",
    "corrupted_yang_mills", "chern_simons_printed_brst", "antifield_decl", "ghost_decl",
    "levi_civita_values", "delta_values", "diag_values", "parameter_problems", "tower_from_markers",
]
