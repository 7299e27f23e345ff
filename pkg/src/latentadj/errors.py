"""Exception hierarchy shared by all pipeline stages."""

from __future__ import annotations


class LatentAdjError(ValueError):
    """Base class for every error raised by the package."""

    code = "pipeline_error"

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self)}


class InputError(LatentAdjError):
    """Malformed, non-finite or misaligned input."""

    code = "input_error"


class RankDeficientError(LatentAdjError):
    """A design matrix (or latent covariate block) is not of full column rank."""

    code = "rank_deficient"

    def __init__(self, message: str, column: int | None = None):
        super().__init__(message)
        self.column = column

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["column"] = self.column
        return out


class IllConditionedError(LatentAdjError):
    code = "ill_conditioned"


class DegenerateDataError(LatentAdjError):
    """The data carry no usable signal for the requested computation."""

    code = "degenerate_data"
