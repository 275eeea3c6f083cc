"""Domain errors. Every error carries a stable ``code`` used by the CLI."""

from __future__ import annotations


class HistfuseError(Exception):
    code = "HistfuseError"

    def __init__(self, message: str = "", **context):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.context = context

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "context": self.context}


class NotPD(HistfuseError):
    code = "NotPD"


class IllConditioned(HistfuseError):
    code = "IllConditioned"


class NotSymmetric(HistfuseError):
    code = "NotSymmetric"


class DimMismatch(HistfuseError):
    code = "DimMismatch"


class GammaOutOfRange(HistfuseError):
    code = "GammaOutOfRange"


class RangeError(HistfuseError):
    code = "RangeError"


class SingularDTheta(HistfuseError):
    code = "SingularDTheta"


class MissingUpsilon(HistfuseError):
    code = "MissingUpsilon"


class InvalidSizes(HistfuseError):
    code = "InvalidSizes"


class BoundaryDesign(HistfuseError):
    code = "BoundaryDesign"


class InvalidDesign(HistfuseError):
    code = "InvalidDesign"


class EmptyGrid(HistfuseError):
    code = "EmptyGrid"


class NoReplicationNeeded(HistfuseError):
    code = "NoReplicationNeeded"


class ConfigError(HistfuseError):
    code = "ConfigError"


class ZeroCountEncountered(HistfuseError):
    code = "ZeroCountEncountered"
