"""
Runtime settings for the mixture laboratory.
"""

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # ========================
    # Application Settings
    # ========================
    APP_NAME: str = "MixtureLab"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # ========================
    # State Space Settings
    # ========================
    # Largest tensor-space dimension M^(N1+N2) a state may have
    MAX_DIMENSION: int = 2 ** 22

    # ========================
    # Propagator Settings
    # ========================
    DENSE_THRESHOLD: int = 4096  # dense eigendecomposition allowed up to this dimension
    KRYLOV_DIM: int = 30
    KRYLOV_TOL: float = 1e-10
    KRYLOV_MAX_HALVINGS: int = 12  # substep halvings before giving up
    SUBSTEP_NORM_PRODUCT: float = 5.0  # default substep satisfies ||H|| * substep <= this

    # Cache of dense eigendecompositions, keyed by Hamiltonian
    EIGEN_CACHE_SIZE: int = 8

    # ========================
    # Spectral Norm Settings
    # ========================
    SVD_THRESHOLD: int = 512  # dense SVD below this dimension, Lanczos on C^H C above
    POWER_MAX_ITER: int = 20000  # Lanczos restarts
    POWER_RTOL: float = 1e-8
    POWER_SEED: int = 20240917

    # ========================
    # Experiment Settings
    # ========================
    DEFAULT_THREADS: int = 1
    CSV_PRECISION: int = 17  # significant digits

    model_config = SettingsConfigDict(
        env_file=".env",
        extra="ignore",
        case_sensitive=True
    )


# Global settings instance
settings = Settings()
