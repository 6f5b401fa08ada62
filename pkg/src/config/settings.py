import logging
import logging.handlers
from pathlib import Path

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class MeasureSettings(BaseSettings):
    """Settings for discrete measures, moment matching and pair generation."""

    file_weight_sum_tol: float = Field(
        default=1e-9,
        description="Allowed weight-sum deviation in measure JSON files",
    )

    matching_tol: float = Field(
        default=1e-9, gt=0, description="Relative tolerance for moment comparisons"
    )

    moment_cap: int = Field(
        default=12,
        ge=0,
        description="Highest moment degree inspected when detecting the matching order",
    )

    generation_max_retries: int = Field(
        default=500, ge=1, description="Retry budget for gen_matched_pair"
    )

    model_config = SettingsConfigDict(
        env_prefix="SMOOTHOT_MEASURE_",
        case_sensitive=False,
        extra="ignore",
    )


class ChaosSettings(BaseSettings):
    """Settings for Hermite chaos expansions."""

    extra_degrees: int = Field(
        default=5,
        ge=1,
        description="Truncation degree is the matching order plus this many degrees",
    )

    quadrature_node_budget: int = Field(
        default=1_000_000,
        ge=1,
        description="Maximum number of nodes in a tensor Gauss-Hermite grid",
    )

    mean_tol: float = Field(
        default=1e-10,
        description="Largest degree-0 coefficient accepted by ou_inverse",
    )

    model_config = {
        "env_prefix": "SMOOTHOT_CHAOS_",
        "case_sensitive": False,
        "extra": "ignore",
    }


class SinkhornSettings(BaseSettings):
    """Entropic transport solver settings.

    Costs are expressed in coordinates rescaled by the bandwidth, so ``eps`` is
    dimensionless and the same value works across the whole t range.
    """

    grid_per_axis_1d: int = Field(default=321, ge=16, description="Grid size in 1D")

    grid_per_axis_2d: int = Field(
        default=81, ge=16, description="Grid points per axis in 2D"
    )

    eps_1d: float = Field(default=0.04, gt=0, description="Target epsilon in 1D")

    eps_2d: float = Field(default=0.16, gt=0, description="Target epsilon in 2D")

    eps_start: float = Field(
        default=1.0, gt=0, description="First epsilon of the annealing schedule"
    )

    eps_decay: float = Field(
        default=0.5, gt=0, lt=1, description="Geometric factor between stages"
    )

    marginal_tol: float = Field(
        default=1e-9, gt=0, description="L1 marginal violation declaring convergence"
    )

    stage_tol: float = Field(
        default=1e-6, gt=0, description="Marginal violation ending an annealing stage"
    )

    max_iterations: int = Field(
        default=20_000, ge=1, description="Iteration budget across all stages"
    )

    check_every: int = Field(
        default=10, ge=1, description="Iterations between marginal checks"
    )

    tail_sigmas: float = Field(
        default=8.0, gt=0, description="Grid half-width beyond the atoms, in sigmas"
    )

    max_tail_mass: float = Field(
        default=1e-8, gt=0, description="Largest mass allowed outside the grid"
    )

    model_config = {
        "env_prefix": "SMOOTHOT_SINKHORN_",
        "case_sensitive": False,
        "extra": "ignore",
    }


class QuadratureSettings(BaseSettings):
    """Deterministic quadrature settings for divergences and bounds."""

    wp_grid: int = Field(
        default=401, ge=100, description="Normal-score grid size for 1D W_p"
    )

    wp_z_max: float = Field(
        default=8.0, gt=0, description="Normal-score truncation of the quantile grid"
    )

    f_div_sigmas: float = Field(
        default=10.0, gt=0, description="Integration range beyond the atoms, in sigmas"
    )

    f_div_epsrel: float = Field(
        default=1e-10, gt=0, description="Relative tolerance of adaptive quadrature"
    )

    f_div_limit: int = Field(
        default=500, ge=10, description="Subdivision budget of adaptive quadrature"
    )

    panels_2d: int = Field(
        default=64, ge=4, description="Gauss-Legendre panels per axis in 2D"
    )

    dual_grid: int = Field(
        default=2001, ge=101, description="Grid points per axis for the dual bound"
    )

    lipschitz_inflation: float = Field(
        default=1.1, ge=1.0, description="Inflation of the grid Lipschitz estimate"
    )

    model_config = {
        "env_prefix": "SMOOTHOT_QUADRATURE_",
        "case_sensitive": False,
        "extra": "ignore",
    }


class MonteCarloSettings(BaseSettings):
    """Monte Carlo estimator settings."""

    samples: int = Field(
        default=1_000_000, ge=1, description="Samples for Monte Carlo divergences"
    )

    target_rel_stderr: float = Field(
        default=0.01,
        gt=0,
        description="Relative standard error above which results are flagged",
    )

    c_tv_samples: int = Field(
        default=1_000_000, ge=2, description="Samples for the TV limit constant"
    )

    model_config = {"env_prefix": "SMOOTHOT_MC_", "case_sensitive": False, "extra": "ignore"}


class SweepSettings(BaseSettings):
    """Asymptotic sweep and verification settings."""

    t_min: float = Field(default=1e2, gt=0, description="Smallest bandwidth")

    t_max: float = Field(default=1e4, gt=0, description="Largest bandwidth")

    points: int = Field(default=7, ge=3, description="Number of grid points")

    min_valid_rows: int = Field(
        default=3, ge=3, description="Valid rows required to fit a rate"
    )

    max_workers: int = Field(
        default=4, ge=1, description="Concurrent rows evaluated by a sweep"
    )

    default_rtol: float = Field(
        default=0.05, gt=0, description="Relative tolerance of limit checks"
    )

    rate_atol: float = Field(
        default=0.05, gt=0, description="Absolute tolerance of rate checks"
    )

    model_config = {
        "env_prefix": "SMOOTHOT_SWEEP_",
        "case_sensitive": False,
        "extra": "ignore",
    }


class LoggingSettings(BaseSettings):
    """Logging configuration settings."""

    log_level: str = Field(default="WARNING", description="Logging level")

    log_format: str = Field(
        default="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        description="Log message format",
    )

    log_file: str | None = Field(
        default=None, description="Log file path (if None, logs to stderr)"
    )

    max_log_file_size_mb: int = Field(
        default=100, description="Maximum log file size in MB"
    )

    max_log_files: int = Field(
        default=5, description="Maximum number of log files to keep"
    )

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        """Normalize and validate the level name."""
        level = v.upper()
        if level not in logging.getLevelNamesMapping():
            raise ValueError(f"Unknown log level: {v}")
        return level

    model_config = {"env_prefix": "LOG_", "case_sensitive": False, "extra": "ignore"}


class Settings(BaseSettings):
    """Main application settings."""

    # Environment
    environment: str = Field(
        default="development", description="Application environment"
    )

    # Component settings
    measures: MeasureSettings = Field(default_factory=MeasureSettings)
    chaos: ChaosSettings = Field(default_factory=ChaosSettings)
    sinkhorn: SinkhornSettings = Field(default_factory=SinkhornSettings)
    quadrature: QuadratureSettings = Field(default_factory=QuadratureSettings)
    monte_carlo: MonteCarloSettings = Field(default_factory=MonteCarloSettings)
    sweep: SweepSettings = Field(default_factory=SweepSettings)
    logging: LoggingSettings = Field(default_factory=LoggingSettings)

    # Global settings
    project_name: str = Field(default="smoothot", description="Project name")

    version: str = Field(default="0.1.0", description="Application version")

    @field_validator("environment")
    @classmethod
    def validate_environment(cls, v):
        """Validate environment setting."""
        allowed_environments = {"development", "testing", "staging", "production"}
        if v.lower() not in allowed_environments:
            raise ValueError(f"Environment must be one of: {allowed_environments}")
        return v.lower()

    model_config = {
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "case_sensitive": False,
        "extra": "ignore",
    }


# Global settings instance
_settings: Settings | None = None


def get_settings() -> Settings:
    """Get application settings (singleton pattern)."""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def reload_settings() -> Settings:
    """Reload settings (useful for testing)."""
    global _settings
    _settings = None
    return get_settings()


def configure_logging(settings: Settings | None = None) -> None:
    """Configure the root logger from LoggingSettings.

    Args:
        settings: Settings to use, defaults to the global instance

    """
    log_settings = (settings or get_settings()).logging
    root = logging.getLogger()
    root.setLevel(log_settings.log_level)

    for handler in list(root.handlers):
        root.removeHandler(handler)

    if log_settings.log_file:
        log_path = Path(log_settings.log_file).expanduser()
        log_path.parent.mkdir(parents=True, exist_ok=True)
        handler: logging.Handler = logging.handlers.RotatingFileHandler(
            log_path,
            maxBytes=log_settings.max_log_file_size_mb * 1024 * 1024,
            backupCount=log_settings.max_log_files,
        )
    else:
        handler = logging.StreamHandler()

    handler.setFormatter(logging.Formatter(log_settings.log_format))
    root.addHandler(handler)
