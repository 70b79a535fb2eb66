"""Exception types shared across the package.

The CLI maps these onto exit codes: config problems -> 2, numeric
divergence/instability -> 3, I/O and format problems -> 4.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration values."""


class DimensionError(ValueError):
    """Array shapes incompatible with the requested operation."""


class UnsupportedSizeError(ValueError):
    """Grid extents outside what the FFT path supports (powers of two)."""


class ContractViolationError(RuntimeError):
    """An internal calling contract was broken (e.g. non-scalar loss)."""


class NonSmoothActivationError(ValueError):
    """Second-order input derivatives requested for a non-C2 activation."""


class RegimeError(ValueError):
    """Physical parameters outside the supported regime (e.g. overdamped)."""


class SolverDivergenceError(RuntimeError):
    """A reference PDE solve produced NaN/Inf."""


class StabilityError(RuntimeError):
    """Time step violates the stability (CFL) bound."""

    def __init__(self, message: str, suggested_dt: float | None = None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class TrainingDivergedError(RuntimeError):
    """Loss or gradients became NaN/Inf during training."""


class MeterUsageError(RuntimeError):
    """Energy meter misuse (e.g. nested phases)."""


class DataFormatError(IOError):
    """Dataset / params file corrupt or of an unknown version."""
