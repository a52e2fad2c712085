"""Request, configuration and report models."""

from typing import Any

from pydantic import BaseModel, Field, field_validator, model_validator

from holonomy_lab.core.config import settings


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


class DerivativeRequest(BaseModel):
    """Declares the variables and the total order of a derivative tower."""

    variables: tuple[str, ...] = ("x1", "x2", "y1", "y2")
    order: int = Field(default=settings.default_jet_order, ge=1)
    fiber: tuple[str, ...] = ("y1", "y2")

    @model_validator(mode="after")
    def _check_fiber(self) -> "DerivativeRequest":
        unknown = [name for name in self.fiber if name not in self.variables]
        if unknown:
            raise ValueError(f"Fiber variables not declared: {unknown}")
        if len(set(self.variables)) != len(self.variables):
            raise ValueError("Variable names must be unique")
        return self


class SolverSettings(BaseModel):
    """Tolerances and limits for the ODE integrators."""

    rtol: float = Field(default=settings.ode_rtol, gt=0)
    atol: float = Field(default=settings.ode_atol, gt=0)
    max_steps: int = Field(default=settings.ode_max_steps, ge=1)
    method: str = Field(default="dopri5", pattern="^(dopri5|rk4)$")
    rk4_steps: int = Field(default=settings.rk4_steps, ge=1)
    drift_tolerance: float = Field(default=settings.tol_transport_drift, gt=0)


class RunConfig(BaseModel):
    """Per-command configuration assembled from flags and settings."""

    metric: str = "funk:+"
    at: tuple[float, float] = (0.0, 0.0)
    direction: tuple[float, float] = (1.0, 0.0)
    grid: int = settings.grid_size
    nmax: int = Field(default=settings.nmax, ge=2)
    tol_ode: float = Field(default=settings.ode_rtol, gt=0)
    tol_check: float = Field(default=settings.tol_pipeline, gt=0)
    seed: int = Field(default=settings.seed, ge=0)
    out: str | None = None
    samples: int = Field(default=20, ge=1)

    @field_validator("grid")
    @classmethod
    def _grid_power_of_two(cls, value: int) -> int:
        if value < 16 or not _is_power_of_two(value):
            raise ValueError("grid size must be a power of two >= 16")
        return value

    @property
    def solver(self) -> SolverSettings:
        """Get solver settings derived from the ODE tolerance."""
        return SolverSettings(rtol=self.tol_ode, atol=self.tol_ode)


class FieldPayload(BaseModel):
    """JSON form of a circle vector field."""

    nmax: int
    a0: float
    cos: list[float]
    sin: list[float]


class AlgebraEntry(BaseModel):
    """One comparison between an expected and a computed field."""

    name: str
    expected: FieldPayload
    computed: FieldPayload
    sup_error: float = Field(ge=0)
    passed: bool = Field(alias="pass")
    informational: bool = False

    model_config = {"populate_by_name": True}


class AlgebraReport(BaseModel):
    """Outcome of the holonomy-theorem verification at a base point."""

    metric: str
    base_point: tuple[float, float]
    condition_a: bool
    condition_b: bool
    c: float | None = None
    curvature: float | None = None
    hypotheses_met: bool
    entries: list[AlgebraEntry] = []
    spanning_residual: float | None = None
    notes: list[str] = []

    @property
    def passed(self) -> bool:
        """Whether every graded entry passed and the generators are spanned."""
        graded = [entry.passed for entry in self.entries if not entry.informational]
        spanned = (
            self.spanning_residual is not None
            and self.spanning_residual <= settings.tol_pipeline
        )
        return self.hypotheses_met and all(graded) and spanned


class TransportStats(BaseModel):
    """Solver statistics of one transport or geodesic run."""

    steps: int = 0
    rejected: int = 0
    evaluations: int = 0


class Check(BaseModel):
    """A named pass/fail check with its measured value."""

    name: str
    value: float | None = None
    tolerance: float | None = None
    passed: bool


class Report(BaseModel):
    """Result of one command-line command."""

    command: str
    config: dict[str, Any]
    results: dict[str, Any] = {}
    checks: list[Check] = []
    duration_seconds: float = 0.0

    @property
    def passed(self) -> bool:
        """Whether every check passed."""
        return all(check.passed for check in self.checks)

    def summary(self) -> dict[str, int]:
        """Get the pass/fail counts."""
        passed = sum(1 for check in self.checks if check.passed)
        return {"passed": passed, "failed": len(self.checks) - passed}
