"""Exception types shared across the package."""


class NilpropError(Exception):
    """Base class for all package errors."""


class AlgebraSpecError(NilpropError):
    """Malformed algebra description (bad shapes or unparsable file)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateFormError(NilpropError):
    """The central form is degenerate (|det J_mu| below tolerance)."""


class DegenerateGeneratorError(NilpropError):
    """Generator (or coefficient matrix A) is singular where regularity is required."""


class OutsideDomainError(NilpropError):
    """Requested time lies outside the kernel domain (0, kappa)."""

    def __init__(self, t, kappa):
        super().__init__(f"time {t} outside kernel domain (0, {kappa})")
        self.t = t
        self.kappa = kappa


class SingularSinhError(NilpropError):
    """coth requested at a point where sinh is singular."""


class LogBranchError(NilpropError):
    """Matrix logarithm undefined: spectrum touches the negative real axis."""


class BranchTrackingFailedError(NilpropError):
    """Square-root branch tracking hit a zero of det sinh on the ray."""


class NonConvergentError(NilpropError):
    """Damping/extrapolation of a distributional composition failed to stabilise."""


class NonInvertibleMapError(NilpropError):
    """The frequency substitution map of the Fourier-form propagator is singular."""


class GridMismatchError(NilpropError):
    """Operands sampled on different grids."""


class CapExceededError(NilpropError):
    """Grid too large for a dense-operator code path."""


class EnvelopeTransferError(NilpropError):
    """Envelope transfer undefined (delta * a >= 1); shrink delta."""


class ConfigError(NilpropError):
    """Malformed experiment configuration."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
