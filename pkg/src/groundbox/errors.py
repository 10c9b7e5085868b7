"""Exception types shared across the toolkit.

Every data-level failure raises a :class:`GroundboxError` subclass so the
CLI can map them to a nonzero exit status without catching unrelated bugs.
"""


class GroundboxError(Exception):
    """Base class for all toolkit errors."""


class FormatError(GroundboxError):
    """A file does not match its expected schema (bad or missing header)."""


class ParseError(GroundboxError):
    """A record inside a file is malformed.

    Carries the 1-based line number (header included) when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FetchError(GroundboxError):
    """An image could not be fetched or failed validation."""


class SynthesisError(GroundboxError):
    """Synthetic dataset construction received inconsistent inputs."""


class PipelineError(GroundboxError):
    """Post-processing inputs are incomplete or inconsistent."""


class EvaluationError(GroundboxError):
    """Predictions and ground truth do not line up."""


class AdapterError(GroundboxError):
    """An external model invocation produced an invalid response file."""


class ExternalCommandError(AdapterError):
    """The external model command exited with a nonzero status."""

    def __init__(self, command, returncode, stderr_tail=""):
        detail = f"external command failed with exit status {returncode}: {command}"
        if stderr_tail:
            detail += f"\n{stderr_tail}"
        super().__init__(detail)
        self.returncode = returncode
