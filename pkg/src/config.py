"""Configuration settings for the vortex interaction lab."""

from pathlib import Path
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

PROJECT_ROOT = Path(__file__).resolve().parent.parent


class Settings(BaseSettings):
    """Application settings."""

    model_config = SettingsConfigDict(
        env_prefix="VORTEX_LAB_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    # Logging settings
    log_level: str = Field("INFO")
    log_config: Path = Field(PROJECT_ROOT / "config" / "logging.yml")
    log_dir: Optional[Path] = Field(None)

    # Execution settings
    threads: int = Field(4, ge=1)
    seed: Optional[int] = Field(None)
    output_dir: Path = Field(Path("runs"))

    # Radial discretization
    radial_nodes: int = Field(2048, ge=64)
    radial_max: float = Field(20.0, gt=0.0)
    radial_stretch: float = Field(10.0, gt=0.0)

    # Point-vortex integration
    ode_rtol: float = Field(1e-10, gt=0.0)
    ode_atol: float = Field(1e-10, gt=0.0)
    collision_guard_fraction: float = Field(1e-3, gt=0.0)

    # Field-level check grids
    check_radii: int = Field(256, ge=8)
    check_angles: int = Field(256, ge=8)
    check_radius_max: float = Field(12.0, gt=0.0)
    remainder_gamma: float = Field(0.9, gt=0.0, lt=1.0)

    # Profile extraction
    extract_radii: int = Field(192, ge=8)
    extract_angles: int = Field(128, ge=8)
    extract_radius_max: float = Field(10.0, gt=0.0)
    x_norm_beta: float = Field(0.5, gt=0.0, lt=1.0)

    # Deformation profiles
    angular_quadrature: int = Field(64, ge=16)
    fbar_dtau: float = Field(1e-2, gt=0.0)
    fbar_history: float = Field(10.0, gt=0.0)

    # Navier-Stokes
    cfl_number: float = Field(0.5, gt=0.0, le=1.0)


# Global settings instance
settings = Settings()
