"""Writers for theory files, plain text and LaTeX."""

from __future__ import annotations

from fractions import Fraction

from ..algebra import GradedPoly, Kind, Var, ZERO, to_text
from ..models import BASE_RANGE, TheoryModel


def _ranges(ranges: tuple) -> str:
    return f"[{','.join(ranges)}]" if ranges else ""


def _value(v) -> str:
    if isinstance(v, Fraction) and v.denominator != 1:
        return f"{v.numerator}/{v.denominator}"
    return str(int(v))


def _tensor(values: dict) -> str:
    if not values:
        return "zero"
    items = "; ".join(f"{','.join(str(i) for i in k)}: {_value(v)}" for k, v in sorted(values.items()))
    return "{" + items + "}"


def identity_expression(model: TheoryModel, stage: int, r: int) -> GradedPoly:
    """Stage ``stage`` identity ``r`` as a polynomial in markers or ghost antifields."""
    ro = model.roster
    ni = model.tower[stage]
    out = ZERO
    theory = model.theory
    for (target, jet), coeff in sorted(ni.generators[r].items(), key=lambda kv: (kv[0][0], kv[0][1].sort_key())):
        if stage == 0:
            v = ro.marker(target.name, *target.idx, jet=jet)
        else:
            v = theory.stage_target_antifield(stage, target).with_jet(jet)
        out = out + coeff * GradedPoly.var(v)
    if ni.corrections is not None and r < len(ni.corrections):
        out = out + ni.corrections[r]
    return out


def print_model(model: TheoryModel) -> str:
    """Fully expanded theory document; :func:`parse` reads it back to an equal model."""
    lines = [f"model {model.name}", f"dimension {model.dim}"]
    for name, size in model.ranges.items():
        lines.append(f"range {name} {size}")
    if model.display != "plain":
        lines.append(f"display {model.display}")
    for p in model.params.values():
        lines.append(f"param {p.name}{_ranges(p.ranges)} {p.role} = {_tensor(p.values)}")
    for d in model.decls:
        extra = ""
        if d.symmetric and d.partner is None:
            extra += " symmetric"
        if d.maxorder is not None and d.partner is None:
            extra += f" maxorder {d.maxorder}"
        parity = "odd" if d.parity else "even"
        if d.kind == Kind.FIELD:
            lines.append(f"field {d.name}{_ranges(d.ranges)} {parity}{extra}")
        elif d.kind == Kind.GHOST:
            lines.append(f"ghost {d.name}{_ranges(d.ranges)} {parity} stage {d.stage or 0}{extra}")
        else:
            lines.append(f"antifield {d.name} of {d.partner}")
    if model.lagrangian is not None:
        lines.append(f"lagrangian = {to_text(model.lagrangian.coefficient)}")
    for k, ni in enumerate(model.tower):
        for r, ghost in enumerate(ni.ghosts):
            lines.append(f"ni {ghost.label()} = {to_text(identity_expression(model, k, r))}")
    for name, d in model.derivations.items():
        lines.append(f"derivation {name} {'odd' if d.parity else 'even'} {{")
        for v in sorted(d.components):
            lines.append(f"  {v.label()} -> {to_text(d.components[v])}")
        lines.append("}")
    if model.extended is not None:
        lines.append(f"extended = {to_text(model.extended.coefficient)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# LaTeX


_BAR = {Kind.ANTIFIELD, Kind.GHOST_ANTIFIELD}


def _latex_var(v: Var, shift: int) -> str:
    name = v.name
    if len(name) > 1 and name.endswith("bar"):
        name = name[:-3]
    if len(name) > 1:
        name = {"sigma": r"\sigma", "xi": r"\xi", "eta": r"\eta"}.get(name, rf"\mathrm{{{name}}}")
    if v.kind in _BAR:
        name = rf"\bar{{{name}}}"
    idx = "".join(str(i + shift) for i in v.idx)
    jet = "".join(str(j + shift) for j in v.jet)
    sub = idx + ("," + jet if jet else "")
    body = f"{name}_{{{sub}}}" if sub else name
    if v.kind == Kind.MARKER:
        return rf"\mathcal{{E}}_{{{body}}}"
    if v.kind == Kind.BASE:
        return f"x^{{{v.idx[0] + shift}}}"
    return body


def to_latex(p: GradedPoly, physics: bool = False) -> str:
    """LaTeX for ``p``; ``physics`` numbers indices from 1."""
    if not p.terms:
        return "0"
    shift = 1 if physics else 0
    parts = []
    for (even, odd), c in p.sorted_terms():
        factors = [_latex_var(v, shift) + (f"^{{{e}}}" if e > 1 else "") for v, e in even]
        factors += [_latex_var(v, shift) for v in odd]
        neg = c < 0
        mag = -c if neg else c
        if isinstance(mag, Fraction) and mag.denominator != 1:
            coef = rf"\frac{{{mag.numerator}}}{{{mag.denominator}}}"
        else:
            coef = str(mag)
        if not factors:
            body = coef
        elif mag == 1:
            body = " ".join(factors)
        else:
            body = coef + " " + " ".join(factors)
        parts.append(("- " if neg else "+ ") + body)
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else "-" + text[2:]


def render(p: GradedPoly, fmt: str = "text", physics: bool = False) -> str:
    if fmt == "latex":
        return to_latex(p, physics)
    return to_text(p)


__all__ = ["print_model", "to_latex", "render", "identity_expression", "BASE_RANGE"]
