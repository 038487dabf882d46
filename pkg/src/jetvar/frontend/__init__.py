"""Theory files and the command line."""

from .parser import (
    GradingInconsistency,
    IndexArityMismatch,
    TheoryError,
    TheorySyntaxError,
    UnknownIdentifier,
    parse,
    parse_file,
)
from .printer import print_model, render, to_latex

__all__ = [
    "parse", "parse_file", "print_model", "render", "to_latex", "TheoryError", "TheorySyntaxError",
    "UnknownIdentifier", "IndexArityMismatch", "GradingInconsistency",
]
