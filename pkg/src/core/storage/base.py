from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from src.core.errors import MeasureParseError
from src.core.models.measure import WEIGHT_SUM_TOL, DiscreteMeasure
from src.core.models.results import SweepReport

REPORT_COLUMNS = (
    "t",
    "raw_value",
    "rescale_exponent",
    "rescaled_value",
    "predicted_limit",
    "error_estimate",
)


class StorageOperationResult(Enum):
    """Result types for storage operations."""

    SUCCESS = "success"
    ERROR = "error"
    PERMISSION_DENIED = "permission_denied"


@dataclass
class StorageResult:
    """Result of a write operation."""

    result: StorageOperationResult
    storage_path: str | None = ""
    file_size: int | None = None
    metadata: dict | None = None
    error_message: str | None = None

    @property
    def success(self) -> bool:
        return self.result == StorageOperationResult.SUCCESS


@dataclass
class StorageConfig:
    """Configuration for storage backends."""

    base_path: str | Path = "."
    float_format: str = ".17g"
    file_weight_sum_tol: float = 1e-9


class StorageBackend(ABC):
    """Abstract base class for measure and report persistence."""

    def __init__(self, config: StorageConfig):
        self.config = config

    @abstractmethod
    def read_measure(self, path: str | Path, renormalize: bool = False) -> DiscreteMeasure:
        """Parse a measure file into a canonical DiscreteMeasure."""

    @abstractmethod
    def write_measure(self, measure: DiscreteMeasure, path: str | Path) -> StorageResult:
        """Write a measure in canonical atom order."""

    @abstractmethod
    def write_report(self, report: SweepReport, path: str | Path) -> StorageResult:
        """Write the report CSV and its metadata sidecar."""

    @abstractmethod
    def read_report(self, path: str | Path) -> SweepReport:
        """Load a report written by write_report."""

    @abstractmethod
    def write_two_column(self, report: SweepReport, path: str | Path) -> StorageResult:
        """Write log10 t against log10 of the rescaled value for plotting."""

    def resolve(self, path: str | Path) -> Path:
        path = Path(path)
        return path if path.is_absolute() else Path(self.config.base_path) / path

    @staticmethod
    def metadata_path(path: Path) -> Path:
        return path.with_name(path.name + ".meta.json")

    def format_float(self, value: float | None) -> str:
        return "" if value is None else format(value, self.config.float_format)

    def report_csv(self, report: SweepReport) -> str:
        """CSV text of the report rows; missing error estimates are empty cells."""
        lines = [",".join(REPORT_COLUMNS)]
        for row in report.rows:
            cells = (
                row.t,
                row.raw_value,
                row.rescale_exponent,
                row.rescaled_value,
                row.predicted_limit,
                row.error_estimate,
            )
            lines.append(",".join(self.format_float(cell) for cell in cells))
        return "\n".join(lines) + "\n"

    def normalized_weights(self, weights: np.ndarray, renormalize: bool) -> np.ndarray:
        """Weights summing to one, or a parse error if the file is off by too much.

        Deviations up to the construction tolerance pass untouched; deviations
        up to the file tolerance are divided out; larger ones need
        ``renormalize``.
        """
        total = float(np.sum(weights))
        deviation = abs(total - 1.0)
        if deviation > self.config.file_weight_sum_tol and not renormalize:
            raise MeasureParseError(
                f"Weights sum to {total:.15g}; pass --renormalize to rescale them",
                "/atoms",
            )
        if deviation > WEIGHT_SUM_TOL:
            return weights / total
        return weights
