"""Exception and warning types shared across the package."""


class KztnError(Exception):
    """Base class for package errors."""


class DimensionError(KztnError, ValueError):
    """Tensor extents are inconsistent for the requested operation."""


class ParameterError(KztnError, ValueError):
    """A parameter is out of its allowed range or inconsistent."""


class UnsupportedRegimeError(KztnError, ValueError):
    """The requested quantity is only defined in a regime the caller left."""


class NumericalError(KztnError, RuntimeError):
    """A numerical kernel failed (non-convergence, non-finite values)."""


class FitDomainError(KztnError, ValueError):
    """Fit input contains values outside the fit's domain.

    Carries the offending abscissae in ``offending``.
    """

    def __init__(self, message, offending=()):
        super().__init__(message)
        self.offending = tuple(offending)


class DegenerateProfileError(KztnError, ValueError):
    """A correlation profile has no usable weight for a length estimate."""


class ResourceError(KztnError, RuntimeError):
    """A guard against infeasible problem sizes fired."""


class FormatError(KztnError, ValueError):
    """A serialized container is corrupt or has an unsupported version."""


class ConfigError(KztnError, ValueError):
    """Configuration text failed to parse or validate.

    ``line`` is the 1-based line number when the failure is tied to one.
    """

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ConvergenceWarning(RuntimeWarning):
    """An iterative solver ended in a suspicious state.

    ``trace`` carries the monitored quantity (e.g. the energy history).
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = None if trace is None else list(trace)


class DomainWarning(UserWarning):
    """An analytic formula was evaluated outside its validity window."""
