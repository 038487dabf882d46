"""Exception hierarchy shared by every jetvar module."""

from __future__ import annotations


class JetvarError(Exception):
    """Base class for all engine errors."""


class JetOrderExceeded(JetvarError):
    """A jet coordinate would exceed the configured maximum jet order."""

    def __init__(self, name: str, order: int, cap: int):
        super().__init__(f"jet order {order} of {name} exceeds the cap {cap}")
        self.order = order
        self.cap = cap


class EvenDerivation(JetvarError):
    """Nilpotency was requested for an even derivation (never nilpotent)."""


class RosterMismatch(JetvarError):
    """Identity data refers to generators the theory does not declare."""


class UnpairedAntifield(JetvarError):
    """An antifield occurs in a density but has no field partner."""


class NotNilpotent(JetvarError):
    """A BRST operator was required to be nilpotent but is not."""


class NotASymmetry(JetvarError):
    """A derivation is not a variational symmetry of the Lagrangian."""


class UnknownModel(JetvarError):
    """No builtin model with the requested name."""


class ModelError(JetvarError):
    """Invalid model data (parameters, rosters, identity data)."""
