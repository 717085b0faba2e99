"""Exception types shared across the library."""


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ConfigError(ValueError):
    """A configuration value violates its documented constraints."""


class ContractError(ValueError):
    """A call violates an API precondition (empty batch, non-scalar output, ...)."""


class FormatError(ValueError):
    """A serialized artifact is inconsistent (bad checksum, truncated blob, ...)."""


class DegenerateClassError(ValueError):
    """A class is absent where every class must be represented (zero prior)."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration budget before reaching tolerance."""

    def __init__(self, message: str, violation: float):
        super().__init__(message)
        self.violation = violation


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int, lr: float, loss: float):
        super().__init__(
            f"non-finite loss {loss!r} at step {step} (lr={lr:.6g}); aborting"
        )
        self.step = step
        self.lr = lr
        self.loss = loss
