"""Exception types raised by gadmm_lab."""


class GadmmLabError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(GadmmLabError, ValueError):
    pass


class SingularSystemError(GadmmLabError, ArithmeticError):
    pass


class DivergenceError(GadmmLabError, RuntimeError):
    """Objective error blew up; ``round_k`` names the offending round."""

    def __init__(self, round_k: int, error: float, initial: float):
        self.round_k = round_k
        self.error = error
        self.initial = initial
        super().__init__(
            f"diverged at round {round_k}: objective error {error:.3e} "
            f"exceeds 1e6 x initial error {initial:.3e}"
        )


class ConfigError(GadmmLabError, ValueError):
    """Invalid experiment configuration; ``keys`` lists the offending keys."""

    def __init__(self, message: str, keys=()):
        self.keys = list(keys)
        if self.keys:
            message = f"{message}: {', '.join(self.keys)}"
        super().__init__(message)


class ComparisonError(GadmmLabError, ValueError):
    pass
