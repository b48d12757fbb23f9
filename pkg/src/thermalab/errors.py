"""Exception types shared across modules; the CLI maps them onto exit codes."""


class ThermalabError(Exception):
    exit_code = 1


class InputError(ThermalabError, ValueError):
    """Malformed or out-of-contract input."""

    exit_code = 2


class PathDisagreement(ThermalabError):
    """Two independent evaluations of the same quantity disagree beyond tolerance."""

    exit_code = 3

    def __init__(self, quantity: str, a, b, tol: float):
        self.quantity, self.a, self.b, self.tol = quantity, a, b, tol
        super().__init__(f"{quantity}: eigen path {a!r} vs time path {b!r} (tol {tol:g})")


class CalibrationError(ThermalabError, ValueError):
    """A weight cannot certify the requested band (W <= 0)."""

    exit_code = 2
