from .base import REPORT_COLUMNS, StorageBackend, StorageConfig, StorageResult
from .local import LocalStorageBackend

__all__ = [
    "REPORT_COLUMNS",
    "LocalStorageBackend",
    "StorageBackend",
    "StorageConfig",
    "StorageResult",
]
