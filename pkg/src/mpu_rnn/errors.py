"""Exception taxonomy shared by all modules.

The CLI maps these onto exit codes: usage/configuration problems exit 2,
training or verification failures exit 1.
"""


class MpuRnnError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(MpuRnnError):
    """Invalid configuration or dimension mismatch between configured shapes."""


class InputError(MpuRnnError):
    """Caller-supplied data violates a precondition (bad label, empty set, ...)."""


class ParseError(InputError):
    """A text file could not be parsed. Carries the offending line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class FormatError(InputError):
    """A file parsed but its contents are structurally inconsistent."""


class InternalError(MpuRnnError):
    """Invariant violation inside the library (trace/cache mismatch, bad phase)."""


class TrainingError(MpuRnnError):
    """Training diverged. Carries the epoch at which the loss became non-finite."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class VerificationError(MpuRnnError):
    """A verification suite (gradient check, golden table) exceeded tolerance."""
