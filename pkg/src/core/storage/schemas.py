"""Pydantic schemas for the measure file and the report metadata sidecar."""

from pydantic import BaseModel, ConfigDict, Field, FiniteFloat, ValidationError, model_validator

from src.core.errors import MeasureParseError


class AtomSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    x: list[FiniteFloat] = Field(min_length=1)
    w: FiniteFloat = Field(gt=0)


class MeasureSchema(BaseModel):
    """{"dim": d, "atoms": [{"x": [...], "w": w}, ...]}"""

    model_config = ConfigDict(extra="forbid")

    dim: int = Field(ge=1)
    atoms: list[AtomSchema] = Field(min_length=1)

    @model_validator(mode="after")
    def check_atom_dims(self) -> "MeasureSchema":
        for i, atom in enumerate(self.atoms):
            if len(atom.x) != self.dim:
                raise MeasureParseError(
                    f"Atom has {len(atom.x)} coordinates, expected {self.dim}",
                    f"/atoms/{i}/x",
                )
        return self


class ReportMetadataSchema(BaseModel):
    pair_id: str
    metric: str
    method: str
    fitted_exponent: float | None = None
    fit_stderr: float | None = None
    matching_order: int | None = None
    p: float | None = None
    row_errors: dict[str, str] = Field(default_factory=dict)


def json_pointer(loc: tuple) -> str:
    """Pydantic error location as a JSON pointer, e.g. ("atoms", 2, "w") -> /atoms/2/w."""
    return "/" + "/".join(str(part) for part in loc) if loc else "/"


def parse_measure_json(text: str) -> MeasureSchema:
    """Validate measure JSON text.

    Raises:
        MeasureParseError: On malformed JSON or a schema violation, with the
            location of the first offending value

    """
    try:
        return MeasureSchema.model_validate_json(text)
    except ValidationError as e:
        first = e.errors()[0]
        # errors raised inside validators arrive wrapped
        cause = first.get("ctx", {}).get("error")
        if isinstance(cause, MeasureParseError):
            raise cause from e
        raise MeasureParseError(first["msg"], json_pointer(first["loc"])) from e
