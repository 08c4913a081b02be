from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Numerical defaults and runtime knobs, overridable through ``TORENTROPY_*`` variables"""

    model_config = SettingsConfigDict(  # pyright: ignore[reportUnannotatedClassAttribute]
        env_prefix='TORENTROPY_', env_file='.env', env_file_encoding='utf-8', extra='ignore'
    )

    threads: int = Field(default=4, ge=1)
    log_level: str = 'WARNING'

    eps_int: float = Field(default=1e-6, gt=0)

    quad_rtol: float = Field(default=1e-8, gt=0)
    quad_order: int = Field(default=10, ge=2)
    quad_max_depth: int = Field(default=12, ge=0)
    quad_max_elements: int = Field(default=4000, ge=1)
    collar_width: float = Field(default=1e-3, gt=0, lt=0.5)
    collar_levels: int = Field(default=30, ge=1)

    newton_tol: float = Field(default=1e-13, gt=0)
    newton_max_iter: int = Field(default=200, ge=1)
    fd_step: float = Field(default=1e-5, gt=0)

    tol_balanced: float = Field(default=1e-6, gt=0)
    tol_convolution: float = Field(default=1e-10, gt=0)
    tol_ke: float = Field(default=1e-8, gt=0)
    tol_entropy: float = Field(default=1e-2, gt=0)
    tol_bernstein: float = Field(default=0.3, gt=0)
    tol_entropy_ratio: float = Field(default=0.7, gt=0)

    partition_max_k: int = Field(default=64, ge=1)


settings = Settings()
