import os

from pydantic_settings import BaseSettings


def _flag(name: str, default: str) -> bool:
    return os.getenv(name, default).lower() in ("true", "1", "t")


class Settings(BaseSettings):
    """Configuration settings for the algebra engine, the oracle and the
    service surface.

    Every value can be overridden from the environment (or a ``.env`` file)
    using the field name as the variable name.
    """
    # App Configuration
    APP_NAME: str = "QES Darboux Transformation Engine"
    DEBUG: bool = _flag("DEBUG", "False")
    HOST: str = os.getenv("HOST", "0.0.0.0")
    PORT: int = int(os.getenv("PORT", "8000"))
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

    # Coefficient arithmetic
    COMPLEX_DTYPE: str = os.getenv("COMPLEX_DTYPE", "complex128")
    ZERO_TOL: float = float(os.getenv("ZERO_TOL", "1e-9"))
    ROOT_MATCH_TOL: float = float(os.getenv("ROOT_MATCH_TOL", "1e-8"))

    # Spectra
    RANK_TOL: float = float(os.getenv("RANK_TOL", "1e-8"))
    EIGEN_CLUSTER_TOL: float = float(os.getenv("EIGEN_CLUSTER_TOL", "1e-6"))

    # Verification
    RESIDUAL_TOL: float = float(os.getenv("RESIDUAL_TOL", "1e-9"))
    POLE_TOL: float = float(os.getenv("POLE_TOL", "1e-8"))
    REALNESS_TOL: float = float(os.getenv("REALNESS_TOL", "1e-9"))

    # Numerov shooting
    NUMEROV_X_MIN: float = float(os.getenv("NUMEROV_X_MIN", "1e-3"))
    NUMEROV_STEP: float = float(os.getenv("NUMEROV_STEP", "5e-4"))
    NUMEROV_DECAY_EXPONENT: float = float(
        os.getenv("NUMEROV_DECAY_EXPONENT", "60")
    )
    NUMEROV_BISECTION_TOL: float = float(
        os.getenv("NUMEROV_BISECTION_TOL", "1e-8")
    )
    NUMEROV_ACCEPT_TOL: float = float(os.getenv("NUMEROV_ACCEPT_TOL", "1e-4"))

    # Sampling grid defaults
    GRID_X_MIN: float = float(os.getenv("GRID_X_MIN", "0.05"))
    GRID_X_MAX: float = float(os.getenv("GRID_X_MAX", "4.0"))
    GRID_POINTS: int = int(os.getenv("GRID_POINTS", "400"))

    class Config:
        """Pydantic configuration.
        """
        env_file = ".env"
        case_sensitive = True


settings = Settings()
