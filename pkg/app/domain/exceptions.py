from typing import List, Optional

import numpy as np


class MixtureLabError(Exception):
    """Base class for every error raised by the laboratory."""


class ConfigurationError(MixtureLabError, ValueError):
    """Experiment configuration could not be parsed or validated."""

    def __init__(self, message: str, diagnostics: Optional[List[str]] = None):
        self.diagnostics = diagnostics or []
        if self.diagnostics:
            message = message + "\n" + "\n".join(f"  {d}" for d in self.diagnostics)
        super().__init__(message)


class DimensionError(MixtureLabError, ValueError):
    """Tensor-space or kernel dimension is out of the supported range."""


class IncompatibleOperandsError(MixtureLabError, ValueError):
    """Operands live on different grids/configurations or violate slot rules."""


class NumericalError(MixtureLabError, RuntimeError):
    """A numerical procedure failed to reach its tolerance."""


class KrylovBreakdownError(NumericalError):
    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residual achieved {residual:.3e})")


class ConvergenceError(NumericalError):
    def __init__(self, message: str, last_estimate: float, iterations: int,
                 last_iterate: Optional[np.ndarray] = None):
        self.last_estimate = last_estimate
        self.iterations = iterations
        self.last_iterate = last_iterate
        super().__init__(
            f"{message} after {iterations} iterations (last estimate {last_estimate:.17e})"
        )


class StabilityError(NumericalError):
    def __init__(self, message: str, value: float):
        self.value = value
        super().__init__(f"{message} (dt * spectral radius = {value:.3e})")


class BoundViolation(MixtureLabError):
    """A verification suite produced a row outside its pass criterion."""
