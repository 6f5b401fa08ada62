import csv
import json
import logging
import math
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from src.core.errors import InvalidInputError, MeasureParseError
from src.core.models.measure import DiscreteMeasure
from src.core.models.results import DivergenceMethod, Metric, SweepReport, SweepRow

from .base import (
    REPORT_COLUMNS,
    StorageBackend,
    StorageConfig,
    StorageOperationResult,
    StorageResult,
)
from .schemas import ReportMetadataSchema, parse_measure_json

logger = logging.getLogger(__name__)


def _nan_to_none(value: float | None) -> float | None:
    return None if value is None or not math.isfinite(value) else value


class LocalStorageBackend(StorageBackend):
    """Local filesystem storage: JSON measures, CSV reports, plain-text plot data."""

    def __init__(self, config: StorageConfig | None = None):
        super().__init__(config or StorageConfig())
        self.base_path = Path(self.config.base_path)

    def write_text(self, path: str | Path, text: str, **metadata) -> StorageResult:
        full_path = self.resolve(path)
        try:
            full_path.parent.mkdir(parents=True, exist_ok=True)
            full_path.write_text(text, encoding="utf-8")
        except PermissionError:
            return StorageResult(
                result=StorageOperationResult.PERMISSION_DENIED,
                storage_path=str(full_path),
                error_message=f"Permission denied writing to {full_path}",
            )
        except OSError as e:
            logger.error(f"Failed to write {full_path}: {e}")
            return StorageResult(
                result=StorageOperationResult.ERROR,
                storage_path=str(full_path),
                error_message=f"Storage error: {e}",
            )
        logger.debug(f"Wrote {len(text)} bytes to {full_path}")
        return StorageResult(
            result=StorageOperationResult.SUCCESS,
            storage_path=str(full_path),
            file_size=len(text.encode("utf-8")),
            metadata=metadata or None,
        )

    def _read_text(self, path: str | Path) -> str:
        full_path = self.resolve(path)
        try:
            return full_path.read_text(encoding="utf-8")
        except OSError as e:
            raise InvalidInputError(f"Cannot read {full_path}: {e}") from e

    def read_measure(self, path: str | Path, renormalize: bool = False) -> DiscreteMeasure:
        """Parse a measure file.

        Args:
            path: JSON file following {"dim": d, "atoms": [{"x": [...], "w": w}]}
            renormalize: Rescale weights whose sum is off by more than the
                file tolerance instead of rejecting them

        Returns:
            The measure with atoms in canonical order

        Raises:
            MeasureParseError: On malformed JSON, schema violations or a bad
                weight sum
            InvalidInputError: If the file cannot be read

        """
        schema = parse_measure_json(self._read_text(path))
        locations = np.array([atom.x for atom in schema.atoms], dtype=float)
        weights = np.array([atom.w for atom in schema.atoms], dtype=float)
        weights = self.normalized_weights(weights, renormalize)
        return DiscreteMeasure(locations, weights).canonical()

    def write_measure(self, measure: DiscreteMeasure, path: str | Path) -> StorageResult:
        text = json.dumps(measure.canonical().to_dict(), indent=2) + "\n"
        return self.write_text(path, text, atoms=measure.size)

    def write_report(self, report: SweepReport, path: str | Path) -> StorageResult:
        """Write ``report`` as CSV plus a ``<path>.meta.json`` sidecar."""
        result = self.write_text(path, self.report_csv(report), rows=len(report.rows))
        if not result.success:
            return result

        metadata = report.metadata()
        meta = ReportMetadataSchema(
            **{
                **metadata,
                "fitted_exponent": _nan_to_none(report.fitted_exponent),
                "fit_stderr": _nan_to_none(report.fit_stderr),
            }
        )
        meta_result = self.write_text(
            self.metadata_path(self.resolve(path)), meta.model_dump_json(indent=2) + "\n"
        )
        return meta_result if not meta_result.success else result

    def read_report(self, path: str | Path) -> SweepReport:
        """Load a report CSV and its sidecar.

        Raises:
            InvalidInputError: If either file is missing or malformed

        """
        full_path = self.resolve(path)
        try:
            meta = ReportMetadataSchema.model_validate_json(
                self._read_text(self.metadata_path(full_path))
            )
            metric = Metric(meta.metric)
            method = DivergenceMethod(meta.method)
        except (ValidationError, ValueError) as e:
            if isinstance(e, InvalidInputError):
                raise
            raise InvalidInputError(f"Bad report metadata for {full_path}: {e}") from e

        reader = csv.reader(self._read_text(full_path).splitlines())
        header = tuple(next(reader, ()))
        if header != REPORT_COLUMNS:
            raise InvalidInputError(f"Unexpected report header {','.join(header)}")

        errors = {float(t): message for t, message in meta.row_errors.items()}
        rows = []
        for line_no, cells in enumerate(reader, start=2):
            if len(cells) != len(REPORT_COLUMNS):
                raise InvalidInputError(f"{full_path}:{line_no}: expected 6 columns")
            try:
                t, raw, exponent, _, predicted = (float(cell) for cell in cells[:5])
                estimate = float(cells[5]) if cells[5] else None
            except ValueError as e:
                raise InvalidInputError(f"{full_path}:{line_no}: {e}") from e
            rows.append(SweepRow(t, raw, exponent, predicted, estimate, errors.get(t)))

        return SweepReport(
            pair_id=meta.pair_id,
            metric=metric,
            method=method,
            rows=rows,
            fitted_exponent=math.nan if meta.fitted_exponent is None else meta.fitted_exponent,
            fit_stderr=math.nan if meta.fit_stderr is None else meta.fit_stderr,
            matching_order=meta.matching_order,
            p=meta.p,
        )

    def write_two_column(self, report: SweepReport, path: str | Path) -> StorageResult:
        lines = ["# log10(t) log10(rescaled_value)"]
        for row in report.valid_rows:
            if row.rescaled_value > 0:
                lines.append(
                    f"{self.format_float(math.log10(row.t))} "
                    f"{self.format_float(math.log10(row.rescaled_value))}"
                )
        return self.write_text(path, "\n".join(lines) + "\n", points=len(lines) - 1)
