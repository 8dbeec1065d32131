"""
Slip detection error hierarchy.

Every error carries a stable machine ``code`` so the CLI and the API can
report failures as one parseable line / payload.
"""

from typing import Any, Dict, Optional, Sequence


class SlipDetectError(Exception):
    """Base class for all domain errors."""

    code = "slipdetect_error"

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context

    def as_dict(self) -> Dict[str, Any]:
        return {"code": self.code, "message": self.message, **self.context}

    def as_line(self) -> str:
        escaped = self.message.replace('"', "'")
        return f'error code={self.code} message="{escaped}"'


def _shape_repr(actual: Any) -> str:
    if actual is None:
        return "?"
    if isinstance(actual, (list, tuple)):
        return str(tuple(actual))
    return str(actual)


class DimensionError(SlipDetectError, ValueError):
    """Tensor shapes do not satisfy an operation's contract."""

    code = "dimension_error"

    def __init__(
        self,
        op: str,
        expected: Any,
        actual: Optional[Sequence[int]] = None,
        detail: str = "",
    ):
        shown = _shape_repr(actual)
        message = f"{op}: expected {expected}, got {shown}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message, op=op, expected=str(expected), actual=shown)
        self.op = op
        self.expected = expected
        self.actual = actual


class ConfigError(SlipDetectError, ValueError):
    code = "config_error"


class InputValidationError(SlipDetectError, ValueError):
    code = "validation_error"


class DataError(SlipDetectError):
    code = "data_error"


class TrainingAbortedError(SlipDetectError):
    """Training hit a non-finite loss or gradient."""

    code = "training_aborted"


class UsageError(SlipDetectError):
    code = "usage_error"


class CheckpointError(SlipDetectError):
    code = "checkpoint_error"
