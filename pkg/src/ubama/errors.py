"""Exception types raised by the solvers and operators."""


class NumericalError(ArithmeticError):
    """Non-finite values or a failed factorization."""


class IllPosedSystemError(NumericalError):
    """A structured linear system whose spectrum is (numerically) singular."""


class InnerSolverError(RuntimeError):
    """An inner iterative solver (PCG, ADMM) hit its iteration cap."""


class StepError(RuntimeError):
    """A subproblem solver failed inside an outer iteration.

    Attributes
    ----------
    block : str
        ``"x"`` or ``"y"``, the block whose update failed.
    """

    def __init__(self, block, message):
        super().__init__(f"{block}-update failed: {message}")
        self.block = block


class LineSearchError(RuntimeError):
    """Backtracking exhausted its doubling budget without a non-increasing step."""


class FormatError(ValueError):
    """Malformed or unsupported file content."""


class ConfigError(ValueError):
    """Invalid run configuration (unknown key, bad type, bad value)."""
