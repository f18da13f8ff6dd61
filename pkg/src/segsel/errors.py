"""Exception hierarchy shared across the toolkit.

Every error raised by segsel derives from :class:`SegselError` so callers
(and the CLI's exit-code mapping) can distinguish toolkit failures from
programming errors.
"""

from __future__ import annotations


class SegselError(Exception):
    """Base class for all toolkit errors."""


class ParseError(SegselError):
    """A corpus or artifact line could not be parsed."""


class SchemaError(SegselError):
    """A record is parseable but missing or violating required fields."""


class ConflictError(SegselError):
    """Duplicate identifiers within one corpus or artifact."""


class ConfigError(SegselError):
    """Invalid configuration value or unknown identifier."""


class AlignmentError(SegselError):
    """Token spans cannot be aligned to the segmented text."""


class CapacityError(SegselError):
    """A sequence does not fit the model's context window."""


class FormatError(SegselError):
    """An artifact file violates its interchange format."""


class IncompatibleDumpError(FormatError):
    """Attribution dump written with an unsupported format version."""


class JoinError(SegselError):
    """Records from two artifacts cannot be joined by trace_id."""


class PipelineOrderError(SegselError):
    """A pipeline stage ran before the stage that produces its input."""

    def __init__(self, missing_stage: str, detail: str = ""):
        self.missing_stage = missing_stage
        msg = f"missing upstream artifact; run the '{missing_stage}' stage first"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NoDecisionError(SegselError):
    """The ground-truth answer never appears in any segment."""


class EmptySupportError(SegselError):
    """A selective loss was requested over a mask with no selected tokens."""


class TransportError(SegselError):
    """The judge endpoint could not be reached within the retry budget."""


class JudgeUndecidedError(SegselError):
    """The judge produced no parseable verdict after both protocol rounds."""
