from pydantic import BaseModel, ConfigDict


class BaseDomainModel(BaseModel):
    """Common base for the domain entities; unknown fields are rejected."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)
