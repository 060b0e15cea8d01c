"""Exception hierarchy. Every error carries a machine-readable payload so the
CLI can emit structured one-line JSON diagnostics."""

from __future__ import annotations

import json


class StreamError(Exception):
    """Base class for all pipeline errors."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    def to_json(self) -> str:
        return json.dumps(
            {"error": type(self).__name__, "message": str(self), **self.details},
            sort_keys=True,
        )


class DimensionMismatchError(StreamError):
    """Image/grid dimensions do not agree."""


class ConfigError(StreamError):
    """Invalid configuration or scene specification."""


class CalibrationError(StreamError):
    """Calibration could not be established."""


class InsufficientMatchesError(CalibrationError):
    """A camera shares too few feature matches with the calibration chain."""


class CalibrationUnreliableError(CalibrationError):
    """RANSAC inlier ratio below the reliability floor."""


class DecodeError(StreamError):
    """Wire message malformed; carries the failing byte offset."""


class PipelineError(StreamError):
    """Runtime failure inside a pipeline stage."""
