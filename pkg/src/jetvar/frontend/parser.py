"""Reader for theory files.

A theory file is a sequence of line-oriented statements::

    model yang-mills-su2
    dimension 4
    range g 3
    param f[g,g,g] structure = levi_civita
    field a[g,base] even
    ghost c[g] odd stage 0
    antifield abar of a
    let F[r,l,m] = a[r,m;l] - a[r,l;m] + f[r,p,q]*a[p,l]*a[q,m]
    lagrangian = -1/4*h[m,n]*eta[l,k]*eta[p,s]*F[m,l,p]*F[n,k,s]
    ni c[j] = -f[r,j,i]*a[i,l]*E(a[r,l]) - d[l](E(a[j,l]))
    derivation brst odd {
      a[r,l] -> -f[r,j,i]*c[j]*a[i,l] + c[r;l]
    }

An index repeated inside a product is summed over its range.  Jet indices
follow a semicolon and form a symmetric multi-index; an unseparated
multi-character jet token such as ``;01`` is read one character per index.
``x[l]`` is a base coordinate, ``d[l](...)`` a total derivative and
``E(a[r,l])`` the Euler-Lagrange marker of a field.  A line is continued
while brackets are open, after a trailing operator, or when the next line
starts with ``+`` or ``-``.
"""

from __future__ import annotations

import itertools
import re
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

from ..algebra import GradedPoly, Kind, MIXED, ZERO, base_coordinate
from ..calculus import Density, iterated_total
from ..errors import JetvarError, ModelError
from ..models import (
    BASE_RANGE,
    FieldDecl,
    Param,
    Roster,
    TheoryModel,
    antifield_decl,
    delta_values,
    diag_values,
    ghost_decl,
    levi_civita_values,
    tower_from_markers,
)
from ..symmetry import Derivation

RESERVED = {"d", "E", "x"}
ROLES = {"structure", "metric", "killing", "levi_civita", "constant"}


# ---------------------------------------------------------------------------
# errors


class TheoryError(JetvarError):
    """A problem in a theory document, located by byte offset."""

    def __init__(self, message: str, offset: int | None = None, text: str | None = None,
                 expected: tuple = ()):
        self.message = message
        self.offset = offset
        self.expected = tuple(expected)
        self.line = self.column = None
        self.excerpt = ""
        if offset is not None and text is not None:
            raw = text.encode("utf-8")
            offset = max(0, min(offset, len(raw)))
            start = raw.rfind(b"\n", 0, offset) + 1
            end = raw.find(b"\n", offset)
            end = len(raw) if end < 0 else end
            line = raw[start:end].decode("utf-8", "replace")
            col = len(raw[start:offset].decode("utf-8", "replace"))
            self.line = raw.count(b"\n", 0, offset) + 1
            self.column = col + 1
            self.excerpt = f"{line}\n{' ' * col}^"
        super().__init__(self.render())

    def render(self) -> str:
        where = f"line {self.line}, column {self.column} (byte {self.offset}): " if self.line else ""
        exp = f" (expected {', '.join(self.expected)})" if self.expected else ""
        body = f"{where}{self.message}{exp}"
        return f"{body}\n{self.excerpt}" if self.excerpt else body

    def as_dict(self) -> dict:
        return {"error": type(self).__name__, "message": self.message, "offset": self.offset,
                "line": self.line, "column": self.column, "expected": list(self.expected),
                "excerpt": self.excerpt}


class TheorySyntaxError(TheoryError):
    pass


class UnknownIdentifier(TheoryError):
    pass


class IndexArityMismatch(TheoryError):
    pass


class GradingInconsistency(TheoryError):
    pass


# ---------------------------------------------------------------------------
# lexer


@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    offset: int


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<arrow>->)
  | (?P<int>\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()\[\]{},;:=])
""", re.VERBOSE)

_CONTINUE_AFTER = {"+", "-", "*", "/", "^", "=", "->", ",", ";", ":"}


def tokenize(text: str) -> list:
    raw = text.encode("utf-8")
    toks = []
    pos = 0
    # offsets are reported in bytes; track the char->byte mapping lazily
    char_to_byte = _char_offsets(text)
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise TheorySyntaxError(f"unexpected character {text[pos]!r}", char_to_byte(pos), text)
        kind = m.lastgroup
        val = m.group()
        if kind not in ("ws", "comment"):
            toks.append(Token(kind if kind != "arrow" else "op", val, char_to_byte(pos)))
        pos = m.end()
    toks.append(Token("nl", "\n", len(raw)))
    toks.append(Token("eof", "", len(raw)))
    return _join_lines(toks)


def _char_offsets(text: str):
    if text.isascii():
        return lambda i: i
    table = []
    acc = 0
    for ch in text:
        table.append(acc)
        acc += len(ch.encode("utf-8"))
    table.append(acc)
    return lambda i: table[i]


def _join_lines(toks: list) -> list:
    out = []
    depth = 0
    for i, t in enumerate(toks):
        if t.kind == "op" and t.value in "([":
            depth += 1
        elif t.kind == "op" and t.value in ")]":
            depth = max(0, depth - 1)
        if t.kind == "nl":
            prev = next((p for p in reversed(out) if p.kind != "nl"), None)
            nxt = next((n for n in toks[i + 1:] if n.kind != "nl"), None)
            if depth > 0:
                continue
            if prev is not None and prev.kind == "op" and prev.value in _CONTINUE_AFTER:
                continue
            if nxt is not None and nxt.kind == "op" and nxt.value in ("+", "-"):
                continue
            if out and out[-1].kind == "nl":
                continue
        out.append(t)
    while out and out[0].kind == "nl":
        out.pop(0)
    return out


# ---------------------------------------------------------------------------
# expression tree


@dataclass
class Num:
    value: Fraction
    offset: int


@dataclass
class Sym:
    name: str
    idx: list
    jet: list
    offset: int
    has_brackets: bool = False


@dataclass
class Marker:
    sym: Sym
    offset: int


@dataclass
class Deriv:
    indices: list
    body: object
    offset: int


@dataclass
class Add:
    terms: list  # (sign, node)
    offset: int


@dataclass
class Mul:
    factors: list
    offset: int


@dataclass
class Pow:
    base: object
    exp: int
    offset: int


@dataclass
class Macro:
    name: str
    params: list
    body: object
    offset: int


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0

    # token helpers
    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def at(self, value: str, kind: str = "op") -> bool:
        t = self.peek()
        return t.kind == kind and t.value == value

    def error(self, msg: str, tok: Token | None = None, expected=(), cls=TheorySyntaxError):
        tok = tok or self.peek()
        return cls(msg, tok.offset, self.text, expected)

    def expect(self, value: str, kind: str = "op") -> Token:
        t = self.peek()
        if t.kind != kind or t.value != value:
            found = "end of line" if t.kind == "nl" else ("end of input" if t.kind == "eof" else repr(t.value))
            raise self.error(f"unexpected {found}", t, (repr(value),))
        return self.next()

    def expect_kind(self, kind: str, what: str) -> Token:
        t = self.peek()
        if t.kind != kind:
            found = "end of line" if t.kind == "nl" else ("end of input" if t.kind == "eof" else repr(t.value))
            raise self.error(f"unexpected {found}", t, (what,))
        return self.next()

    def end_statement(self):
        t = self.peek()
        if t.kind == "eof":
            return
        if t.kind != "nl":
            raise self.error(f"unexpected {t.value!r}", t, ("end of line",))
        self.next()

    # expressions
    def expr(self):
        start = self.peek().offset
        terms = []
        sign = 1
        if self.at("+"):
            self.next()
        elif self.at("-"):
            self.next()
            sign = -1
        terms.append((sign, self.term()))
        while self.at("+") or self.at("-"):
            sign = 1 if self.next().value == "+" else -1
            terms.append((sign, self.term()))
        if len(terms) == 1 and terms[0][0] == 1:
            return terms[0][1]
        return Add(terms, start)

    def term(self):
        start = self.peek().offset
        factors = [self.unary()]
        while self.at("*") or self.at("/"):
            op = self.next()
            rhs = self.unary()
            if op.value == "/":
                if not isinstance(rhs, Num):
                    raise TheorySyntaxError("only division by a number is supported", op.offset, self.text)
                if rhs.value == 0:
                    raise TheorySyntaxError("division by zero", op.offset, self.text)
                rhs = Num(1 / rhs.value, rhs.offset)
            factors.append(rhs)
        return factors[0] if len(factors) == 1 else Mul(factors, start)

    def unary(self):
        if self.at("-"):
            t = self.next()
            return Mul([Num(Fraction(-1), t.offset), self.unary()], t.offset)
        return self.power()

    def power(self):
        base = self.atom()
        if self.at("^"):
            t = self.next()
            e = self.expect_kind("int", "integer exponent")
            return Pow(base, int(e.value), t.offset)
        return base

    def atom(self):
        t = self.peek()
        if t.kind == "int":
            self.next()
            return Num(Fraction(int(t.value)), t.offset)
        if self.at("("):
            self.next()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "name" and t.value == "d" and self.peek(1).kind == "op" and self.peek(1).value == "[":
            self.next()
            self.expect("[")
            idx = [self.index()]
            while self.at(","):
                self.next()
                idx.append(self.index())
            self.expect("]")
            self.expect("(")
            body = self.expr()
            self.expect(")")
            return Deriv(idx, body, t.offset)
        if t.kind == "name" and t.value == "E" and self.peek(1).kind == "op" and self.peek(1).value == "(":
            self.next()
            self.expect("(")
            sym = self.symbol()
            self.expect(")")
            return Marker(sym, t.offset)
        if t.kind == "name":
            return self.symbol()
        found = "end of line" if t.kind == "nl" else ("end of input" if t.kind == "eof" else repr(t.value))
        raise self.error(f"unexpected {found}", t, ("number", "identifier", "'('"))

    def index(self):
        t = self.peek()
        if t.kind == "int":
            self.next()
            return (int(t.value), t.offset)
        if t.kind == "name":
            self.next()
            return (t.value, t.offset)
        raise self.error("bad index", t, ("index name", "integer"))

    def symbol(self) -> Sym:
        t = self.expect_kind("name", "identifier")
        idx, jet = [], []
        has = False
        if self.at("["):
            has = True
            self.next()
            if not self.at(";") and not self.at("]"):
                idx.append(self.index())
                while self.at(","):
                    self.next()
                    idx.append(self.index())
            if self.at(";"):
                self.next()
                jet = self.jet()
            self.expect("]")
        return Sym(t.value, idx, jet, t.offset, has)

    def jet(self) -> list:
        items = []
        first = self.peek()
        if self.at("]"):
            return items
        raw = first.value if first.kind == "int" else None
        items.append(self.index())
        if self.at(","):
            while self.at(","):
                self.next()
                if self.at("]"):
                    break
                items.append(self.index())
            return items
        # a lone run of digits is one index per digit: y[;01]
        if raw is not None and len(raw) > 1:
            return [(int(ch), first.offset + k) for k, ch in enumerate(raw)]
        return items


# ---------------------------------------------------------------------------
# elaboration


@dataclass
class _Info:
    free: Counter
    ranges: dict
    summed: tuple = ()


@dataclass
class _Doc:
    text: str
    name: str = "theory"
    dim: int | None = None
    ranges: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    decls: list = field(default_factory=list)
    macros: dict = field(default_factory=dict)
    lagrangian: object = None
    nis: list = field(default_factory=list)
    derivations: list = field(default_factory=list)
    extended: object = None
    display: str = "plain"
    roster: Roster | None = None


class _Elaborator:
    def __init__(self, doc: _Doc):
        self.doc = doc
        self.text = doc.text
        self.roster = doc.roster
        self.decls = {d.name: d for d in doc.decls}
        self.info_cache: dict = {}
        self.macro_cache: dict = {}

    def fail(self, cls, msg, offset):
        return cls(msg, offset, self.text)

    def range_size(self, rng: str) -> int:
        return self.doc.dim if rng == BASE_RANGE else self.doc.ranges[rng]

    # -- static analysis ----------------------------------------------------

    def slot_ranges(self, sym: Sym) -> tuple:
        """(index ranges, whether a jet is allowed) for a symbol."""
        name = sym.name
        if name == "x":
            return (BASE_RANGE,), False
        if name in self.decls:
            return self.decls[name].ranges, True
        if name in self.doc.params:
            return self.doc.params[name].ranges, False
        if name in self.doc.macros:
            m = self.doc.macros[name]
            return tuple(self.info(m.body).ranges.get(p, BASE_RANGE) for p in m.params), False
        raise self.fail(UnknownIdentifier, f"unknown identifier {name!r}", sym.offset)

    def info(self, node) -> _Info:
        key = id(node)
        got = self.info_cache.get(key)
        if got is None:
            got = self.info_cache[key] = self._info(node)
        return got

    def _merge_ranges(self, into: dict, name: str, rng: str, offset: int):
        old = into.get(name)
        if old is not None and old != rng and self.range_size(old) != self.range_size(rng):
            raise self.fail(IndexArityMismatch,
                            f"index {name!r} used over ranges {old!r} and {rng!r}", offset)
        into.setdefault(name, rng)

    def _occurrences(self, node):
        """Counter of free index names and their ranges, before contraction."""
        if isinstance(node, Num):
            return Counter(), {}
        if isinstance(node, Sym):
            ranges, jet_ok = self.slot_ranges(node)
            if len(node.idx) != len(ranges):
                raise self.fail(IndexArityMismatch,
                                f"{node.name} takes {len(ranges)} indices, got {len(node.idx)}", node.offset)
            if node.jet and not jet_ok:
                raise self.fail(IndexArityMismatch, f"{node.name} cannot carry jet indices", node.offset)
            cnt, rngs = Counter(), {}
            for (val, off), rng in list(zip(node.idx, ranges)) + [(j, BASE_RANGE) for j in node.jet]:
                if isinstance(val, str):
                    cnt[val] += 1
                    self._merge_ranges(rngs, val, rng, off)
                elif not 0 <= val < self.range_size(rng):
                    raise self.fail(IndexArityMismatch, f"index {val} out of range {rng!r}", off)
            return cnt, rngs
        if isinstance(node, Marker):
            if node.sym.name not in self.decls or self.decls[node.sym.name].kind != Kind.FIELD:
                raise self.fail(UnknownIdentifier, f"E(...) needs a declared field, got {node.sym.name!r}",
                                node.sym.offset)
            return self._occurrences(node.sym)
        if isinstance(node, Deriv):
            cnt, rngs = Counter(), {}
            for val, off in node.indices:
                if isinstance(val, str):
                    cnt[val] += 1
                    self._merge_ranges(rngs, val, BASE_RANGE, off)
                elif not 0 <= val < self.doc.dim:
                    raise self.fail(IndexArityMismatch, f"derivative index {val} out of range", off)
            inner = self.info(node.body)
            cnt.update(inner.free)
            for k, v in inner.ranges.items():
                self._merge_ranges(rngs, k, v, node.offset)
            return cnt, rngs
        if isinstance(node, Mul):
            cnt, rngs = Counter(), {}
            for f in node.factors:
                inner = self.info(f)
                cnt.update(inner.free)
                for k, v in inner.ranges.items():
                    self._merge_ranges(rngs, k, v, node.offset)
            return cnt, rngs
        raise TypeError(node)

    def _info(self, node) -> _Info:
        if isinstance(node, Add):
            infos = [self.info(t) for _, t in node.terms]
            names = set(infos[0].free)
            rngs = {}
            for (_, t), inf in zip(node.terms, infos):
                if set(inf.free) != names:
                    raise self.fail(IndexArityMismatch,
                                    f"terms of a sum have different free indices: {sorted(names)} vs "
                                    f"{sorted(inf.free)}", getattr(t, "offset", node.offset))
                for k, v in inf.ranges.items():
                    self._merge_ranges(rngs, k, v, node.offset)
            return _Info(Counter({n: 1 for n in names}), rngs)
        if isinstance(node, Pow):
            inner = self.info(node.base)
            if inner.free:
                raise self.fail(IndexArityMismatch, "a power cannot carry free indices", node.offset)
            return _Info(Counter(), {})
        cnt, rngs = self._occurrences(node)
        bad = [n for n, k in cnt.items() if k > 2]
        if bad:
            raise self.fail(IndexArityMismatch, f"index {bad[0]!r} appears more than twice", node.offset)
        summed = tuple(sorted(n for n, k in cnt.items() if k == 2))
        free = Counter({n: 1 for n, k in cnt.items() if k == 1})
        return _Info(free, {n: rngs[n] for n in cnt}, summed)

    # -- evaluation ----------------------------------------------------------

    def eval(self, node, env: dict) -> GradedPoly:
        if isinstance(node, Num):
            return GradedPoly.const(node.value)
        if isinstance(node, Add):
            out = ZERO
            for sign, t in node.terms:
                v = self.eval(t, env)
                out = out + v if sign > 0 else out - v
            return out
        if isinstance(node, Pow):
            return self.eval(node.base, env) ** node.exp
        inf = self.info(node)
        if inf.summed:
            return self._sum(node, env, inf)
        return self._eval_leaf(node, env)

    def _sum(self, node, env, inf: _Info) -> GradedPoly:
        # macro parameters are bound by the call, never contracted
        names = tuple(n for n in inf.summed if n not in env)
        if not names:
            return self._eval_leaf(node, env)
        if isinstance(node, Mul):
            return self._sum_product(node, env, names, inf)
        out = ZERO
        sizes = [range(self.range_size(inf.ranges[n])) for n in names]
        for vals in itertools.product(*sizes):
            sub = dict(env)
            sub.update(zip(names, vals))
            out = out + self._eval_leaf(node, sub)
        return out

    def _sum_product(self, node: Mul, env, names, inf) -> GradedPoly:
        # parameters first so that vanishing entries prune the search early
        order = sorted(range(len(node.factors)),
                       key=lambda k: (0 if self._is_param(node.factors[k]) else 1, k))
        factors = [node.factors[k] for k in order]
        need = []
        bound = set()
        for f in factors:
            fi = set(self.info(f).free) & set(names)
            new = sorted(fi - bound)
            bound |= fi
            need.append(new)
        # evaluate in the chosen order but multiply in written order (signs of odd factors)
        results = ZERO
        stack_vals = [None] * len(factors)

        def rec(k, sub):
            nonlocal results
            if k == len(factors):
                prod = GradedPoly.const(1)
                inv = [None] * len(factors)
                for pos, o in enumerate(order):
                    inv[o] = stack_vals[pos]
                for v in inv:
                    prod = prod * v
                    if not prod:
                        return
                results = results + prod
                return
            new = need[k]
            sizes = [range(self.range_size(inf.ranges[n])) for n in new]
            for vals in itertools.product(*sizes):
                s2 = dict(sub)
                s2.update(zip(new, vals))
                v = self.eval(factors[k], s2)
                if not v:
                    continue
                stack_vals[k] = v
                rec(k + 1, s2)

        rec(0, dict(env))
        return results

    def _is_param(self, node) -> bool:
        return isinstance(node, Sym) and node.name in self.doc.params

    def _idx_value(self, ref, env, offset):
        val, off = ref
        if isinstance(val, int):
            return val
        try:
            return env[val]
        except KeyError:
            raise self.fail(IndexArityMismatch, f"index {val!r} is not bound", off) from None

    def _eval_leaf(self, node, env) -> GradedPoly:
        if isinstance(node, Mul):
            out = GradedPoly.const(1)
            for f in node.factors:
                out = out * self.eval(f, env)
                if not out:
                    return ZERO
            return out
        if isinstance(node, Deriv):
            body = self.eval(node.body, env)
            lams = [self._idx_value(r, env, node.offset) for r in node.indices]
            return iterated_total(body, lams)
        if isinstance(node, Marker):
            s = node.sym
            idx = [self._idx_value(r, env, s.offset) for r in s.idx]
            jet = [self._idx_value(r, env, s.offset) for r in s.jet]
            return GradedPoly.var(self.roster.marker(s.name, *idx, jet=jet))
        if isinstance(node, Sym):
            return self._eval_sym(node, env)
        return self.eval(node, env)

    def _eval_sym(self, s: Sym, env) -> GradedPoly:
        idx = tuple(self._idx_value(r, env, s.offset) for r in s.idx)
        jet = tuple(self._idx_value(r, env, s.offset) for r in s.jet)
        if s.name == "x":
            return GradedPoly.var(base_coordinate(idx[0]))
        if s.name in self.decls:
            return GradedPoly.var(self.roster.var(s.name, *idx, jet=jet))
        if s.name in self.doc.params:
            return GradedPoly.const(self.doc.params[s.name](*idx))
        m = self.doc.macros[s.name]
        key = (s.name, idx)
        got = self.macro_cache.get(key)
        if got is None:
            got = self.macro_cache[key] = self.eval(m.body, dict(zip(m.params, idx)))
        return got

    def contracted(self, node) -> set:
        """Index names summed anywhere in ``node`` (macro bodies excluded)."""
        out = set(self.info(node).summed) if not isinstance(node, (Num, Add, Pow)) else set()
        kids = []
        if isinstance(node, Add):
            kids = [t for _, t in node.terms]
        elif isinstance(node, Mul):
            kids = node.factors
        elif isinstance(node, (Deriv, Pow)):
            kids = [node.body if isinstance(node, Deriv) else node.base]
        for k in kids:
            out |= self.contracted(k)
        return out

    def check_lhs(self, lhs: Sym, body, what: str):
        lhs_names = {v for v, _ in lhs.idx if isinstance(v, str)}
        extra = set(self.info(body).free) - lhs_names
        if extra:
            raise self.fail(IndexArityMismatch,
                            f"{what} has free indices {sorted(extra)} not bound on the left", _offset(body))
        clash = self.contracted(body) & lhs_names
        if clash:
            raise self.fail(IndexArityMismatch,
                            f"index {sorted(clash)[0]!r} is bound on the left and summed on the right",
                            _offset(body))

    def closed(self, node, what: str) -> GradedPoly:
        inf = self.info(node)
        if inf.free:
            raise self.fail(IndexArityMismatch, f"{what} has free indices {sorted(inf.free)}",
                            getattr(node, "offset", 0))
        return self.eval(node, {})

    def bind_lhs(self, sym: Sym, allowed_kinds) -> list:
        """Index assignments for a left-hand side symbol like ``a[r,l]``."""
        if sym.name not in self.decls:
            raise self.fail(UnknownIdentifier, f"unknown identifier {sym.name!r}", sym.offset)
        d = self.decls[sym.name]
        if d.kind not in allowed_kinds:
            raise self.fail(GradingInconsistency, f"{sym.name} cannot appear here", sym.offset)
        if sym.jet:
            raise self.fail(IndexArityMismatch, "left-hand side cannot carry a jet", sym.offset)
        if len(sym.idx) != len(d.ranges):
            raise self.fail(IndexArityMismatch,
                            f"{sym.name} takes {len(d.ranges)} indices, got {len(sym.idx)}", sym.offset)
        names = []
        choices = []
        for (val, off), rng in zip(sym.idx, d.ranges):
            if isinstance(val, int):
                if not 0 <= val < self.range_size(rng):
                    raise self.fail(IndexArityMismatch, f"index {val} out of range {rng!r}", off)
                choices.append([val])
                names.append(None)
            else:
                choices.append(list(range(self.range_size(rng))))
                names.append(val)
        out = []
        seen = set()
        for vals in itertools.product(*choices):
            env = {}
            ok = True
            for n, v in zip(names, vals):
                if n is None:
                    continue
                if n in env and env[n] != v:
                    ok = False
                    break
                env[n] = v
            if not ok:
                continue
            var = self.roster.var(sym.name, *vals)
            if var in seen:
                continue
            seen.add(var)
            out.append((var, env))
        return out


# ---------------------------------------------------------------------------
# statements


def _rational(p: _Parser) -> Fraction:
    sign = 1
    if p.at("-"):
        p.next()
        sign = -1
    elif p.at("+"):
        p.next()
    num = p.expect_kind("int", "integer")
    val = Fraction(int(num.value))
    if p.at("/"):
        p.next()
        den = p.expect_kind("int", "integer")
        if int(den.value) == 0:
            raise p.error("division by zero", den)
        val /= int(den.value)
    return sign * val


def _range_list(p: _Parser, doc: _Doc) -> tuple:
    out = []
    if not p.at("["):
        return ()
    p.next()
    if p.at("]"):
        p.next()
        return ()
    while True:
        t = p.expect_kind("name", "range name")
        if t.value != BASE_RANGE and t.value not in doc.ranges:
            raise UnknownIdentifier(f"unknown range {t.value!r}", t.offset, doc.text)
        out.append(t.value)
        if p.at(","):
            p.next()
            continue
        p.expect("]")
        return tuple(out)


def _need_dim(p: _Parser, doc: _Doc, tok: Token):
    if doc.dim is None:
        raise TheorySyntaxError("missing dimension declaration", tok.offset, doc.text, ("'dimension N'",))


def _new_name(p: _Parser, doc: _Doc, tok: Token):
    name = tok.value
    if name in RESERVED or name == BASE_RANGE:
        raise TheorySyntaxError(f"{name!r} is reserved", tok.offset, doc.text)
    taken = set(doc.params) | {d.name for d in doc.decls} | set(doc.macros) | set(doc.ranges)
    if name in taken:
        raise TheorySyntaxError(f"{name!r} is already declared", tok.offset, doc.text)


def _tensor(p: _Parser, doc: _Doc, ranges: tuple, tok: Token) -> dict:
    sizes = [doc.dim if r == BASE_RANGE else doc.ranges[r] for r in ranges]
    t = p.peek()
    if t.kind == "name" and t.value == "delta":
        p.next()
        if len(sizes) != 2 or sizes[0] != sizes[1]:
            raise IndexArityMismatch("delta needs two equal ranges", t.offset, doc.text)
        return delta_values(sizes[0])
    if t.kind == "name" and t.value == "levi_civita":
        p.next()
        if len(set(sizes)) != 1 or sizes[0] != len(sizes):
            raise IndexArityMismatch("levi_civita needs n ranges of size n", t.offset, doc.text)
        return levi_civita_values(len(sizes))
    if t.kind == "name" and t.value == "zero":
        p.next()
        return {}
    if t.kind == "name" and t.value == "diag":
        p.next()
        p.expect("(")
        vals = [_rational(p)]
        while p.at(","):
            p.next()
            vals.append(_rational(p))
        p.expect(")")
        if len(sizes) != 2 or sizes[0] != sizes[1] or len(vals) != sizes[0]:
            raise IndexArityMismatch("diag(...) needs one entry per index value of two equal ranges",
                                     t.offset, doc.text)
        return diag_values(vals)
    if p.at("{"):
        p.next()
        out = {}
        while True:
            while p.peek().kind == "nl" or p.at(";"):
                p.next()
            if p.at("}"):
                p.next()
                return out
            start = p.peek()
            idx = [int(p.expect_kind("int", "integer index").value)]
            while p.at(","):
                p.next()
                idx.append(int(p.expect_kind("int", "integer index").value))
            p.expect(":")
            val = _rational(p)
            if len(idx) != len(sizes):
                raise IndexArityMismatch(f"entry has {len(idx)} indices, expected {len(sizes)}",
                                         start.offset, doc.text)
            for i, n in zip(idx, sizes):
                if not 0 <= i < n:
                    raise IndexArityMismatch(f"index {i} out of range", start.offset, doc.text)
            out[tuple(idx)] = out.get(tuple(idx), 0) + val
            if not (p.at(";") or p.at("}") or p.peek().kind == "nl"):
                raise p.error("unexpected token in tensor", None, ("';'", "'}'"))
    raise p.error("bad tensor value", t, ("'{'", "delta", "levi_civita", "diag(...)", "zero"))


def _parity_word(p: _Parser) -> int:
    t = p.expect_kind("name", "'even' or 'odd'")
    if t.value not in ("even", "odd"):
        raise p.error(f"unexpected {t.value!r}", t, ("even", "odd"))
    return 0 if t.value == "even" else 1


def _statement(p: _Parser, doc: _Doc):
    t = p.next()
    if t.kind != "name":
        raise p.error(f"unexpected {t.value!r}", t, ("statement keyword",))
    kw = t.value
    if kw == "model":
        parts = [p.expect_kind("name", "model name").value]
        while p.at("-") or (p.peek().kind in ("name", "int") and p.peek().kind != "nl"):
            if p.at("-"):
                p.next()
                parts.append("-")
            else:
                parts.append(p.next().value)
        doc.name = "".join(parts)
    elif kw == "dimension":
        n = p.expect_kind("int", "dimension")
        if doc.dim is not None:
            raise TheorySyntaxError("dimension declared twice", t.offset, doc.text)
        if int(n.value) < 1:
            raise TheorySyntaxError("dimension must be positive", n.offset, doc.text)
        doc.dim = int(n.value)
    elif kw == "display":
        w = p.expect_kind("name", "'physics' or 'plain'")
        if w.value not in ("physics", "plain"):
            raise p.error(f"unexpected {w.value!r}", w, ("physics", "plain"))
        doc.display = w.value
    elif kw == "range":
        _need_dim(p, doc, t)
        name = p.expect_kind("name", "range name")
        _new_name(p, doc, name)
        n = p.expect_kind("int", "range size")
        doc.ranges[name.value] = int(n.value)
    elif kw == "param":
        _need_dim(p, doc, t)
        name = p.expect_kind("name", "parameter name")
        _new_name(p, doc, name)
        ranges = _range_list(p, doc)
        role = p.expect_kind("name", "role")
        if role.value not in ROLES:
            raise p.error(f"unknown role {role.value!r}", role, tuple(sorted(ROLES)))
        p.expect("=")
        vals = _tensor(p, doc, ranges, name)
        doc.params[name.value] = Param(name.value, ranges, role.value, vals)
    elif kw in ("field", "ghost"):
        _need_dim(p, doc, t)
        name = p.expect_kind("name", "name")
        _new_name(p, doc, name)
        ranges = _range_list(p, doc)
        parity = _parity_word(p)
        stage = None
        symmetric = False
        maxorder = None
        while p.peek().kind == "name":
            w = p.next()
            if w.value == "stage" and kw == "ghost":
                stage = int(p.expect_kind("int", "stage").value)
            elif w.value == "maxorder":
                maxorder = int(p.expect_kind("int", "order").value)
            elif w.value == "symmetric":
                symmetric = True
            else:
                raise p.error(f"unexpected {w.value!r}", w, ("stage", "maxorder", "symmetric"))
        if kw == "field":
            doc.decls.append(FieldDecl(name.value, Kind.FIELD, ranges, parity, 0, 0, None, None,
                                       symmetric, maxorder))
        else:
            if stage is None:
                raise p.error("ghost needs a stage", p.peek(), ("stage N",))
            d = ghost_decl(name.value, ranges, stage, parity)
            doc.decls.append(FieldDecl(d.name, d.kind, d.ranges, d.parity, d.ghost, d.antifield, d.stage,
                                       None, symmetric, maxorder))
    elif kw == "antifield":
        _need_dim(p, doc, t)
        name = p.expect_kind("name", "name")
        _new_name(p, doc, name)
        p.expect("of", "name")
        partner = p.expect_kind("name", "field or ghost name")
        src = next((d for d in doc.decls if d.name == partner.value), None)
        if src is None:
            raise UnknownIdentifier(f"unknown identifier {partner.value!r}", partner.offset, doc.text)
        if src.kind not in (Kind.FIELD, Kind.GHOST):
            raise GradingInconsistency(f"{partner.value} cannot carry an antifield", partner.offset, doc.text)
        if any(d.partner == src.name for d in doc.decls):
            raise GradingInconsistency(f"{partner.value} already has an antifield", partner.offset, doc.text)
        doc.decls.append(antifield_decl(name.value, src))
    elif kw == "let":
        _need_dim(p, doc, t)
        name = p.expect_kind("name", "macro name")
        _new_name(p, doc, name)
        params = []
        if p.at("["):
            p.next()
            while not p.at("]"):
                params.append(p.expect_kind("name", "index name").value)
                if p.at(","):
                    p.next()
            p.expect("]")
        p.expect("=")
        doc.macros[name.value] = Macro(name.value, params, p.expr(), name.offset)
    elif kw == "lagrangian":
        _need_dim(p, doc, t)
        p.expect("=")
        doc.lagrangian = p.expr()
    elif kw == "extended":
        _need_dim(p, doc, t)
        p.expect("=")
        doc.extended = p.expr()
    elif kw == "ni":
        _need_dim(p, doc, t)
        lhs = p.symbol()
        p.expect("=")
        doc.nis.append((lhs, p.expr()))
    elif kw == "derivation":
        _need_dim(p, doc, t)
        name = p.expect_kind("name", "derivation name")
        parity = _parity_word(p)
        p.expect("{")
        entries = []
        while True:
            while p.peek().kind == "nl" or p.at(";"):
                p.next()
            if p.at("}"):
                p.next()
                break
            lhs = p.symbol()
            p.expect("->")
            entries.append((lhs, p.expr()))
            if not (p.at(";") or p.at("}") or p.peek().kind == "nl"):
                raise p.error("unexpected token in derivation", None, ("';'", "'}'", "end of line"))
        if any(n == name.value for n, _, _, _ in doc.derivations):
            raise TheorySyntaxError(f"derivation {name.value!r} declared twice", name.offset, doc.text)
        doc.derivations.append((name.value, parity, entries, name.offset))
    else:
        raise TheorySyntaxError(f"unknown statement {kw!r}", t.offset, doc.text,
                                ("model", "dimension", "range", "param", "field", "ghost", "antifield",
                                 "let", "lagrangian", "ni", "derivation", "extended", "display"))
    p.end_statement()


def _check_even_scalar(poly: GradedPoly, what: str, offset: int, text: str):
    """Every term must be even with ghost number 0; antifield numbers may differ."""
    for mono in poly.monomials():
        g = GradedPoly({(mono.even, mono.odd): 1}).grading()
        if g.parity or g.ghost:
            raise GradingInconsistency(f"{what} must be even with ghost number 0; a term has parity "
                                       f"{g.parity} and ghost number {g.ghost}", offset, text)


def parse(text: str) -> TheoryModel:
    """Parse a theory document into a :class:`TheoryModel`."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    p = _Parser(text)
    doc = _Doc(text)
    if p.peek().kind == "eof":
        raise TheorySyntaxError("empty document: missing dimension declaration", 0, text,
                                ("'dimension N'",))
    while p.peek().kind != "eof":
        _statement(p, doc)
    if doc.dim is None:
        raise TheorySyntaxError("missing dimension declaration", 0, text, ("'dimension N'",))
    try:
        doc.roster = Roster(doc.dim, doc.ranges, doc.decls)
    except ModelError as exc:
        raise TheorySyntaxError(str(exc), 0, text) from None
    el = _Elaborator(doc)

    lag = None
    if doc.lagrangian is not None:
        poly = el.closed(doc.lagrangian, "the Lagrangian")
        _check_even_scalar(poly, "the Lagrangian", _offset(doc.lagrangian), text)
        lag = Density(poly, doc.dim)
    ext = None
    if doc.extended is not None:
        poly = el.closed(doc.extended, "the extended Lagrangian")
        _check_even_scalar(poly, "the extended Lagrangian", _offset(doc.extended), text)
        ext = Density(poly, doc.dim)

    by_stage: dict = {}
    for lhs, body in doc.nis:
        binds = el.bind_lhs(lhs, (Kind.GHOST,))
        el.check_lhs(lhs, body, "identity")
        stage = el.decls[lhs.name].stage or 0
        for var, env in binds:
            poly = el.eval(body, env)
            if poly.grading() is MIXED:
                raise GradingInconsistency("identity mixes different gradings", _offset(body), text)
            by_stage.setdefault(stage, []).append((var, poly))
    tower = []
    for k in range(max(by_stage, default=-1) + 1):
        if k not in by_stage:
            raise GradingInconsistency(f"identities of stage {k} are missing", 0, text)
        try:
            tower.append(tower_from_markers(doc.roster, k, by_stage[k]))
        except (ModelError, ValueError) as exc:
            raise GradingInconsistency(str(exc), 0, text) from None

    derivs = {}
    for name, parity, entries, off in doc.derivations:
        comps = {}
        for lhs, body in entries:
            binds = el.bind_lhs(lhs, (Kind.FIELD, Kind.GHOST, Kind.ANTIFIELD, Kind.GHOST_ANTIFIELD))
            el.check_lhs(lhs, body, "component")
            for var, env in binds:
                val = el.eval(body, env)
                comps[var] = comps.get(var, ZERO) + val
        try:
            derivs[name] = Derivation(comps, parity, name)
        except ValueError as exc:
            raise GradingInconsistency(f"derivation {name}: {exc}", off, text) from None
    return TheoryModel(doc.name, doc.dim, doc.ranges, tuple(doc.decls), dict(doc.params), lag,
                       tuple(tower), derivs, ext, doc.display)


def _offset(node) -> int:
    if isinstance(node, tuple):
        return node[1]
    return getattr(node, "offset", 0)


def parse_file(path) -> TheoryModel:
    with open(path, "rb") as fh:
        return parse(fh.read().decode("utf-8"))
