"""Command line entry point: ``jetvar <command> [FILE] [options]``.

Exit status is 0 when the requested computation succeeds or the check
passes, 1 when a verification fails (the residual is printed) and 2 for
unreadable input or bad usage.
"""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import click

from .. import __version__
from ..algebra import GradedPoly, to_text
from ..brst import extend_lagrangian, noether_current
from ..calculus import Density, euler_lagrange, jet_order_cap, variational_residual
from ..errors import JetOrderExceeded, NotASymmetry, NotNilpotent
from ..models import BUILTINS, Check, Report, builtin, check_names, run_single_check
from ..symmetry import apply
from .parser import TheoryError, parse_file
from .printer import to_latex

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageProblem(Exception):
    pass


def _load(source: str | None, model: str | None):
    if source and model:
        raise UsageProblem("give either a theory file or --model, not both")
    if model:
        if model not in BUILTINS:
            raise UsageProblem(f"unknown builtin model {model!r}; choose from {', '.join(BUILTINS)}")
        return builtin(model)
    if not source:
        raise UsageProblem("no theory given: pass a file or --model NAME")
    if not os.path.exists(source) and source in BUILTINS:
        return builtin(source)
    if not os.path.exists(source):
        raise UsageProblem(f"no such file or builtin model: {source}")
    return parse_file(source)


def _fmt(p: GradedPoly, fmt: str, physics: bool) -> str:
    return to_latex(p, physics) if fmt == "latex" else to_text(p)


def _label(v, fmt: str, physics: bool) -> str:
    if fmt == "latex":
        return to_latex(GradedPoly.var(v), physics)
    return v.label()


class Ctx:
    """Output helper bound to the chosen format."""

    def __init__(self, fmt: str, physics: bool = False):
        self.fmt = fmt
        self.physics = physics

    def poly(self, p) -> str:
        return _fmt(p, self.fmt, self.physics)

    def emit(self, payload: dict, lines: list):
        if self.fmt == "json":
            click.echo(json.dumps(payload, indent=2))
        else:
            for line in lines:
                click.echo(line)


def common(fn):
    fn = click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True,
                      help="Worker processes for independent checks.")(fn)
    fn = click.option("--max-jet-order", type=click.IntRange(min=0), default=None,
                      help="Largest jet order allowed (default: $JETVAR_MAX_JET_ORDER or 10).")(fn)
    fn = click.option("--model", "model_name", default=None, metavar="NAME",
                      help="Use a builtin model instead of a file.")(fn)
    fn = click.option("--format", "fmt", type=click.Choice(["text", "json", "latex"]), default="text",
                      show_default=True)(fn)
    fn = click.argument("source", required=False)(fn)
    return fn


def _run(fmt: str, cap, body) -> int:
    """Run ``body`` under the jet cap and turn exceptions into exit codes."""
    try:
        with jet_order_cap(cap):
            return body()
    except TheoryError as exc:
        if fmt == "json":
            click.echo(json.dumps(exc.as_dict(), indent=2))
        else:
            click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    except (UsageProblem, JetOrderExceeded, OSError, UnicodeDecodeError) as exc:
        if fmt == "json":
            click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}, indent=2))
        else:
            click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="jetvar")
def main():
    """Variational bicomplex and BRST checks for Lagrangian field theories."""


def _finish(code: int):
    sys.exit(code)


@main.command("el")
@common
def el_cmd(source, fmt, model_name, max_jet_order, jobs):
    """Print the nonzero Euler-Lagrange components."""

    def body():
        m = _load(source, model_name)
        if m.lagrangian is None:
            raise UsageProblem(f"model {m.name} has no Lagrangian")
        out = Ctx(fmt, m.display == "physics")
        el = euler_lagrange(m.lagrangian, m.fields)
        comps = el.nonzero()
        lines = [f"{_label(v, fmt, out.physics)}: {out.poly(p)}" for v, p in comps.items()]
        if fmt == "latex" and len(comps) == 1:
            lines = [out.poly(next(iter(comps.values())))]
        out.emit({"model": m.name, "components": {v.label(): to_text(p) for v, p in comps.items()}},
                 lines or ["0"])
        return EXIT_OK

    _finish(_run(fmt, max_jet_order, body))


@main.command("symmetry")
@common
@click.option("--derivation", "dname", required=True, help="Name of a derivation in the model.")
def symmetry_cmd(source, fmt, model_name, max_jet_order, jobs, dname):
    """Decide whether a derivation is a variational symmetry."""

    def body():
        m = _load(source, model_name)
        if m.lagrangian is None:
            raise UsageProblem(f"model {m.name} has no Lagrangian")
        d = _derivation(m, dname)
        out = Ctx(fmt, m.display == "physics")
        lie = apply(d, m.lagrangian.coefficient)
        res = variational_residual(lie)
        ok = not res
        first = None if ok else res[min(res)]
        out.emit({"model": m.name, "derivation": dname, "symmetry": ok,
                  "residual": None if ok else to_text(first)},
                 ["yes" if ok else "no"] + ([] if ok else [f"residual: {out.poly(first)}"]))
        return EXIT_OK if ok else EXIT_FAIL

    _finish(_run(fmt, max_jet_order, body))


def _derivation(m, name):
    if name not in m.derivations:
        known = ", ".join(m.derivations) or "none"
        raise UsageProblem(f"model {m.name} has no derivation {name!r} (known: {known})")
    return m.derivations[name]


@main.command("current")
@common
@click.option("--derivation", "dname", required=True, help="Name of a derivation in the model.")
def current_cmd(source, fmt, model_name, max_jet_order, jobs, dname):
    """Print the conserved current of a variational symmetry."""

    def body():
        m = _load(source, model_name)
        if m.lagrangian is None:
            raise UsageProblem(f"model {m.name} has no Lagrangian")
        d = _derivation(m, dname)
        out = Ctx(fmt, m.display == "physics")
        try:
            J = noether_current(d, m.lagrangian)
        except NotASymmetry as exc:
            out.emit({"model": m.name, "derivation": dname, "error": str(exc)}, [f"not a symmetry: {exc}"])
            return EXIT_FAIL
        shift = 1 if out.physics else 0
        comps = {lam: J.components.get(lam) for lam in range(m.dim)}
        lines = [f"J^{lam + shift}: {out.poly(p) if p else '0'}" for lam, p in comps.items()]
        out.emit({"model": m.name, "derivation": dname,
                  "current": [to_text(p) if p else "0" for p in comps.values()]}, lines)
        return EXIT_OK

    _finish(_run(fmt, max_jet_order, body))


def _checks_command(wanted: tuple, what: str):
    def cmd(source, fmt, model_name, max_jet_order, jobs):
        def body():
            m = _load(source, model_name)
            names = [n for n in check_names(m) if n in wanted]
            if not names:
                raise UsageProblem(f"model {m.name} has nothing to check for {what}")
            rep = Report(m.name, tuple(run_single_check(m, n) for n in names))
            return _report(rep, fmt)

        _finish(_run(fmt, max_jet_order, body))

    return cmd


def _report(rep: Report, fmt: str) -> int:
    if fmt == "json":
        click.echo(json.dumps(rep.as_dict(__version__), indent=2))
    else:
        for c in rep.checks:
            click.echo(f"{c.name}: {c.status} ({c.millis:.1f} ms)")
            if not c.passed:
                click.echo(f"  residual: {c.residual}")
        click.echo(f"{rep.model}: {'pass' if rep.passed else 'FAIL'}")
    return EXIT_OK if rep.passed else EXIT_FAIL


for _name, _wanted, _doc in [
    ("ni", ("noether-identities", "noether-identities-from-gauge"), "Verify the Noether identities."),
    ("kt", ("kt-nilpotency",), "Check that the Koszul-Tate differential squares to zero."),
    ("brst", ("brst-nilpotency",), "Check that the BRST operator squares to zero."),
    ("master", ("master-equation",), "Check the classical master equation for the extended Lagrangian."),
]:
    _fn = _checks_command(_wanted, _name)
    _fn.__doc__ = _doc
    main.command(_name)(common(_fn))


@main.command("extend")
@common
def extend_cmd(source, fmt, model_name, max_jet_order, jobs):
    """Print the BRST-extended Lagrangian L + b(sum of fields times antifields)."""

    def body():
        m = _load(source, model_name)
        theory = m.theory
        if "brst" not in m.derivations or theory is None:
            raise UsageProblem(f"model {m.name} has no brst derivation or no antifields")
        out = Ctx(fmt, m.display == "physics")
        L = m.lagrangian if m.lagrangian is not None else Density(GradedPoly.const(0), m.dim)
        try:
            ext = extend_lagrangian(L, m.derivations["brst"], theory)
        except NotNilpotent as exc:
            out.emit({"model": m.name, "error": str(exc)}, [f"cannot extend: {exc}"])
            return EXIT_FAIL
        out.emit({"model": m.name, "extended": to_text(ext.coefficient)}, [out.poly(ext.coefficient)])
        return EXIT_OK

    _finish(_run(fmt, max_jet_order, body))


def _worker(source: str | None, model_name: str | None, cap, name: str) -> Check:
    with jet_order_cap(cap):
        return run_single_check(_load(source, model_name), name)


@main.command("verify")
@common
def verify_cmd(source, fmt, model_name, max_jet_order, jobs):
    """Run every applicable check and print a report."""

    def body():
        m = _load(source, model_name)
        names = check_names(m)
        if jobs > 1 and len(names) > 1:
            # each worker reloads the model; results keep the check order
            with ProcessPoolExecutor(max_workers=min(jobs, len(names))) as pool:
                futs = [pool.submit(_worker, source, model_name, max_jet_order, n) for n in names]
                checks = tuple(f.result() for f in futs)
        else:
            checks = tuple(run_single_check(m, n) for n in names)
        return _report(Report(m.name, checks), fmt)

    _finish(_run(fmt, max_jet_order, body))


if __name__ == "__main__":  # pragma: no cover
    main()
