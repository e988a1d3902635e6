from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="BVEM_",
        case_sensitive=False,
        extra="ignore",
    )

    # Logging
    log_level: str = "INFO"
    log_format: Literal["console", "json"] = "console"

    # Assembly
    workers: int = 1
    nitsche_factor: float = 100.0

    # Solver
    solver_residual_tol: float = 1e-10

    # Output
    output_dir: str = "results"

    def nitsche_penalty(self, order: int) -> float:
        """Default penalty gamma = factor * (k + 1)^2."""
        return self.nitsche_factor * (order + 1) ** 2


settings = Settings()
