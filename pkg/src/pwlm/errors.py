"""Exception hierarchy shared by all pwlm modules.

Three coarse families drive the CLI exit-code mapping: usage problems
(exit 1), data problems (exit 2), numerical failures (exit 3).
"""


class PwlmError(Exception):
    """Base class for all pwlm errors."""


class UsageError(PwlmError):
    """Bad command-line invocation or API misuse. CLI exit code 1."""


class DataError(PwlmError):
    """Malformed or inconsistent input data. CLI exit code 2."""


class NumericalError(PwlmError):
    """Numerical breakdown during computation. CLI exit code 3."""


# --- tokenizer ---

class LengthExceeded(DataError):
    """Password longer than the configured byte limit."""


class Malformed(DataError):
    """Token sequence violates the sentinel layout."""


# --- corpus ---

class IoError(DataError):
    """File could not be read or written."""


class FormatError(DataError):
    """Line does not match the declared corpus format."""


class EmptyCorpus(DataError):
    """Operation requires at least one password."""


# --- neural core ---

class ConfigError(DataError):
    """Model configuration fields are mutually inconsistent."""


class ShapeMismatch(DataError):
    """Array shapes do not line up."""


class TargetOutOfRange(DataError):
    """Cross-entropy target id outside [0, vocab)."""


class GraphError(PwlmError):
    """backward() called twice on the same recorded forward pass."""


class NonFiniteLoss(NumericalError):
    """Training loss became NaN or infinite."""


# --- models ---

class MalformedPrefix(DataError):
    """Prefix does not start with BOS or contains EOS."""


# --- guided generation ---

class ParseError(DataError):
    """Template string could not be parsed; carries the offending position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (position {position})")
        self.position = position


class ZeroMass(NumericalError):
    """Masked next-token distribution carries essentially no probability."""


class TemplateMismatch(DataError):
    """Password does not satisfy the template it is scored against."""


# --- eval harness ---

class EmptyTestSet(DataError):
    """Match rate requires a non-empty test set."""


class EmptyAfterFilter(DataError):
    """No scored passwords remain after the length filter."""


# --- persistence ---

class ChecksumMismatch(DataError):
    """Checkpoint trailing checksum does not validate."""


class VersionUnsupported(DataError):
    """Checkpoint format version not understood by this build."""


class KindMismatch(DataError):
    """Checkpoint holds a different model kind than requested."""


class DeadCodebook(UserWarning):
    """Warning: a large fraction of codebook entries went unused."""
