"""Exception hierarchy shared by the whole toolkit.

The CLI maps these onto exit codes: ``InputError`` -> 2 (bad input or
contract violation), ``NumericalError`` -> 3 (a solve or iteration failed
numerically). Anything else is a bug and propagates.
"""


class TopoptError(Exception):
    """Base class for all toolkit errors."""


class InputError(TopoptError):
    """Invalid argument, malformed file, or violated call contract."""


class NumericalError(TopoptError):
    """A numerical procedure failed (solve, bisection, training loss)."""


class SingularSystemError(NumericalError):
    """Reduced stiffness system is singular (insufficient constraints)."""


class DegenerateSensitivityError(NumericalError):
    """Sensitivity field carries no signal (all zeros); OC update undefined."""
