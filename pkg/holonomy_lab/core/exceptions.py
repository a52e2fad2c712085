"""Custom exceptions for the laboratory."""


class LabError(Exception):
    """Base class for all laboratory failures."""

    exit_code: int = 2

    def __init__(self, detail: str = "Laboratory error") -> None:
        super().__init__(detail)
        self.detail = detail


class MetricDomainError(LabError):
    """Raised when a metric is evaluated outside its domain."""

    def __init__(self, detail: str = "Point outside the metric domain") -> None:
        super().__init__(detail)


class DerivativeOrderError(LabError):
    """Raised when a derivative tower is too deep or too shallow."""

    def __init__(self, detail: str = "Unsupported derivative order") -> None:
        super().__init__(detail)


class SingularTensorError(LabError):
    """Raised when the fundamental tensor is singular or indefinite."""

    def __init__(
        self, detail: str = "Fundamental tensor is not positive definite"
    ) -> None:
        super().__init__(detail)


class UnsupportedMetricError(LabError):
    """Raised when an operation needs data the metric does not provide."""

    def __init__(self, detail: str = "Metric does not support this operation") -> None:
        super().__init__(detail)


class IntegrationError(LabError):
    """Raised when an ODE integration fails."""

    def __init__(self, detail: str = "ODE integration failed") -> None:
        super().__init__(detail)


class BoundaryExitError(IntegrationError):
    """Raised when a trajectory leaves the metric domain."""

    def __init__(self, exit_time: float, detail: str | None = None) -> None:
        super().__init__(detail or f"Trajectory left the domain at t={exit_time:.6g}")
        self.exit_time = exit_time


class TransportError(LabError):
    """Raised when parallel transport breaks down."""

    def __init__(self, detail: str = "Parallel transport failed") -> None:
        super().__init__(detail)


class ResolutionError(LabError):
    """Raised when a sampled circle map is not monotone."""

    def __init__(
        self,
        detail: str = "Sampled circle map is not monotone; "
        "increase the grid size or tighten the solver tolerance",
    ) -> None:
        super().__init__(detail)


class ConvergenceError(LabError):
    """Raised when a small-loop extrapolation does not converge."""

    def __init__(self, detail: str = "Small-loop extrapolation did not converge") -> None:
        super().__init__(detail)


class HypothesisError(LabError):
    """Raised when the holonomy theorem's conditions fail at a point."""

    def __init__(self, detail: str = "Theorem hypotheses not met") -> None:
        super().__init__(detail)


class SpecParseError(LabError):
    """Raised when a command-line specification cannot be parsed."""

    exit_code = 64

    def __init__(self, detail: str = "Invalid specification") -> None:
        super().__init__(detail)
