"""Shared error type carrying a machine-readable code."""

from __future__ import annotations


class PipelineError(Exception):
    """Raised by any pipeline stage; ``code`` identifies the failure class.

    Codes are stable strings (e.g. ``UNKNOWN_CATEGORY``, ``WAVE_OUT_OF_RANGE``)
    so callers and the CLI can branch on them without parsing messages.
    """

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
