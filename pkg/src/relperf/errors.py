"""Exception hierarchy shared by every module."""

from __future__ import annotations


class DomainError(ValueError):
    """An input violates a model hypothesis; the message names the constraint."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite or otherwise unusable value."""


class NoEquilibrium(Exception):
    """No constant equilibrium exists (CARA with ``psi == 1``)."""

    def __init__(self, message: str, phi: float, psi: float):
        super().__init__(message)
        self.phi = phi
        self.psi = psi


class Divergent(Exception):
    """The aggregate fixed-point iteration failed to converge."""

    def __init__(self, message: str, max_iter: int, last: float = float("nan")):
        super().__init__(message)
        self.max_iter = max_iter
        self.last = last


class BracketError(Exception):
    """A line search hit the edge of its bracket."""

    def __init__(self, message: str, bracket: tuple[float, float], argmax: float):
        super().__init__(message)
        self.bracket = bracket
        self.argmax = argmax
