"""Configuration management using Pydantic Settings."""

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Laboratory settings with environment variable support."""

    model_config = SettingsConfigDict(
        env_prefix="HOLONOMY_", env_file=".env", case_sensitive=False
    )

    # Derivative towers; the generic spray lifts F to order 5
    max_jet_order: int = 6
    default_jet_order: int = 4

    # ODE integration
    ode_rtol: float = 1e-10
    ode_atol: float = 1e-10
    ode_max_steps: int = 100_000
    rk4_steps: int = 400

    # Circle discretisation
    grid_size: int = 256
    nmax: int = 16

    # Tolerance ladder
    tol_algebra: float = 1e-10
    tol_flow: float = 1e-8
    tol_pipeline: float = 1e-6
    tol_transport_drift: float = 1e-8

    # Numerical guards
    funk_margin: float = 1e-9
    det_guard: float = 1e-14
    aliasing_fraction: float = 0.01

    # Runs
    seed: int = 20240101
    log_level: str = "INFO"

    title: str = "Finsler Holonomy Lab"
    version: str = "1.0.0"

    @property
    def tolerance_ladder(self) -> dict[str, float]:
        """Get the named check tolerances as a mapping."""
        return {
            "algebra": self.tol_algebra,
            "flow": self.tol_flow,
            "pipeline": self.tol_pipeline,
            "transport": self.tol_transport_drift,
        }


# Global settings instance
settings = Settings()
