import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from src.core.errors import InvalidInputError, NumericalError

NEGATIVE_VALUE_ATOL = 1e-9


class DivergenceMethod(Enum):
    """Solver used to produce a DivergenceResult."""

    EXACT_1D = "exact1d"
    SINKHORN = "sinkhorn"
    QUADRATURE = "quadrature"
    MONTE_CARLO = "montecarlo"
    CHAOS_BOUND = "chaos_bound"
    DUAL_BOUND = "dual_bound"


class FDivergenceKind(Enum):
    CHI2 = "chi2"
    KL = "kl"
    TV = "tv"


class Metric(Enum):
    """Quantities a sweep can track across bandwidths."""

    W1 = "w1"
    WP = "wp"
    W2SQ = "w2sq"
    CHI2 = "chi2"
    KL = "kl"
    TV = "tv"
    MOSER_W2SQ = "moser_w2sq"
    DUAL_W1 = "dual_w1"
    W2_SURROGATE_GAP = "w2_surrogate_gap"
    TALAGRAND_RATIO = "talagrand_ratio"
    MOSER_RATIO = "moser_ratio"


class Theorem(Enum):
    """Claims that verify() can check."""

    W2_LIMIT = "w2_limit"
    CHI2_LIMIT = "chi2_limit"
    KL_LIMIT = "kl_limit"
    TV_LIMIT = "tv_limit"
    WP_RATE = "wp_rate"
    GAUSSIAN_SURROGATE = "gaussian_surrogate"
    ZEROTH_ORDER = "zeroth_order"
    TALAGRAND = "talagrand"
    MOSER_TIGHTNESS = "moser_tightness"


@dataclass
class DivergenceResult:
    """Value of a distance, divergence or bound with its provenance."""

    value: float
    method: DivergenceMethod
    error_estimate: float | None = None
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise InvalidInputError(f"Non-finite divergence value {self.value}")
        if self.value < 0:
            # cancelling sums can dip below zero by rounding or by the reported error
            slack = max(NEGATIVE_VALUE_ATOL, self.error_estimate or 0.0)
            if self.value < -slack:
                raise NumericalError(
                    f"Negative {self.method.value} value {self.value:.3e} "
                    f"beyond tolerance {slack:.1e}"
                )
            self.diagnostics.setdefault("raw_value", self.value)
            self.value = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "method": self.method.value,
            "error_estimate": self.error_estimate,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class LimitConstants:
    """Closed-form large-bandwidth limits for a pair with matching order n."""

    n: int
    c_w2: float
    c_chi2: float
    c_kl: float
    c_tv: float
    c_tv_stderr: float
    c_tv_quadrature: float | None = None
    mean_gap: float = 0.0

    @property
    def rate_w2(self) -> float:
        return float(self.n)

    @property
    def rate_chi2(self) -> float:
        return float(self.n + 1)

    @property
    def rate_kl(self) -> float:
        return float(self.n + 1)

    @property
    def rate_tv(self) -> float:
        return (self.n + 1) / 2

    @property
    def rate_wp(self) -> float:
        return self.n / 2

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "c_w2": self.c_w2,
            "c_chi2": self.c_chi2,
            "c_kl": self.c_kl,
            "c_tv": self.c_tv,
            "c_tv_stderr": self.c_tv_stderr,
            "c_tv_quadrature": self.c_tv_quadrature,
            "mean_gap": self.mean_gap,
            "rate_w2": self.rate_w2,
            "rate_chi2": self.rate_chi2,
            "rate_kl": self.rate_kl,
            "rate_tv": self.rate_tv,
            "rate_wp": self.rate_wp,
        }


@dataclass(frozen=True)
class SweepRow:
    t: float
    raw_value: float
    rescale_exponent: float
    predicted_limit: float
    error_estimate: float | None = None
    error: str | None = None

    @property
    def rescaled_value(self) -> float:
        return self.raw_value * self.t**self.rescale_exponent

    @property
    def is_valid(self) -> bool:
        return self.error is None and math.isfinite(self.raw_value)


@dataclass
class SweepReport:
    """Per-bandwidth values of one metric, with the fitted decay exponent."""

    pair_id: str
    metric: Metric
    method: DivergenceMethod
    rows: list[SweepRow]
    fitted_exponent: float = math.nan
    fit_stderr: float = math.nan
    matching_order: int | None = None
    p: float | None = None

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda row: row.t)
        ts = [row.t for row in self.rows]
        if any(t <= 0 for t in ts) or len(set(ts)) != len(ts):
            raise InvalidInputError("Sweep bandwidths must be positive and distinct")

    @property
    def valid_rows(self) -> list[SweepRow]:
        return [row for row in self.rows if row.is_valid]

    def metadata(self) -> dict[str, Any]:
        return {
            "pair_id": self.pair_id,
            "metric": self.metric.value,
            "method": self.method.value,
            "fitted_exponent": self.fitted_exponent,
            "fit_stderr": self.fit_stderr,
            "matching_order": self.matching_order,
            "p": self.p,
            "row_errors": {repr(row.t): row.error for row in self.rows if row.error},
        }


@dataclass(frozen=True)
class VerifyVerdict:
    theorem: Theorem
    passed: bool
    observed: float
    expected: float
    rtol: float
    details: str = ""
    precondition: str | None = None

    def __post_init__(self):
        # builtin types only, so verdicts serialize with json
        object.__setattr__(self, "passed", bool(self.passed))
        object.__setattr__(self, "observed", float(self.observed))
        object.__setattr__(self, "expected", float(self.expected))

    def to_dict(self) -> dict[str, Any]:
        return {
            "theorem": self.theorem.value,
            "pass": self.passed,
            "observed": self.observed,
            "expected": self.expected,
            "rtol": self.rtol,
            "details": self.details,
            "precondition": self.precondition,
        }
