"""Service factory for centralized dependency injection and service management."""

from functools import lru_cache

from src.config.settings import Settings, get_settings
from src.core.services.divergences import DivergenceService
from src.core.services.limits import LimitsService
from src.core.services.sweep_harness import SweepHarnessService
from src.core.storage.base import StorageConfig
from src.core.storage.local import LocalStorageBackend


class ServiceFactory:
    """Factory for creating and managing service instances with proper dependency injection."""

    def __init__(self, settings: Settings | None = None):
        self.settings = settings or get_settings()
        self._instances = {}

    @lru_cache(maxsize=1)
    def get_storage_backend(self) -> LocalStorageBackend:
        """Get or create storage backend instance."""
        if "storage_backend" not in self._instances:
            measures = self.settings.measures
            self._instances["storage_backend"] = LocalStorageBackend(
                StorageConfig(
                    base_path=".",
                    file_weight_sum_tol=measures.file_weight_sum_tol,
                )
            )
        return self._instances["storage_backend"]

    @lru_cache(maxsize=1)
    def get_divergence_service(self) -> DivergenceService:
        """Get or create divergence service instance."""
        if "divergence_service" not in self._instances:
            self._instances["divergence_service"] = DivergenceService(
                measure_settings=self.settings.measures,
                chaos_settings=self.settings.chaos,
                sinkhorn_settings=self.settings.sinkhorn,
                quadrature_settings=self.settings.quadrature,
                monte_carlo_settings=self.settings.monte_carlo,
            )
        return self._instances["divergence_service"]

    @lru_cache(maxsize=1)
    def get_limits_service(self) -> LimitsService:
        """Get or create limits service instance."""
        if "limits_service" not in self._instances:
            self._instances["limits_service"] = LimitsService(
                self.settings.measures, self.settings.monte_carlo
            )
        return self._instances["limits_service"]

    @lru_cache(maxsize=1)
    def get_sweep_harness_service(self) -> SweepHarnessService:
        """Get or create sweep harness instance."""
        if "sweep_harness_service" not in self._instances:
            self._instances["sweep_harness_service"] = SweepHarnessService(
                sweep_settings=self.settings.sweep,
                measure_settings=self.settings.measures,
                monte_carlo_settings=self.settings.monte_carlo,
                divergence_service=self.get_divergence_service(),
                limits_service=self.get_limits_service(),
            )
        return self._instances["sweep_harness_service"]

    def clear_cache(self):
        """Clear all cached instances (useful for testing)."""
        self._instances.clear()
        self.get_storage_backend.cache_clear()
        self.get_divergence_service.cache_clear()
        self.get_limits_service.cache_clear()
        self.get_sweep_harness_service.cache_clear()


# Global factory instance
_service_factory: ServiceFactory | None = None


def get_service_factory() -> ServiceFactory:
    """Get the global service factory instance."""
    global _service_factory
    if _service_factory is None:
        _service_factory = ServiceFactory()
    return _service_factory


def reset_service_factory():
    """Reset the global service factory (useful for testing)."""
    global _service_factory
    if _service_factory:
        _service_factory.clear_cache()
    _service_factory = None
