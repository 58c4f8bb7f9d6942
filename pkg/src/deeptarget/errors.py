"""Exception hierarchy shared across the pipeline."""


class DeepTargetError(Exception):
    """Base class for all errors raised by this package."""


class FastaError(DeepTargetError):
    """Malformed FASTA input (bad record structure or illegal characters)."""


class SequenceError(DeepTargetError):
    """Violation of an RNA sequence invariant (bad base, PAD misuse, length)."""


class DatasetError(DeepTargetError):
    """Unusable dataset: one-class labels, window mismatch, unresolvable ids."""


class MockGenerationError(DeepTargetError):
    """Mock miRNA generation exhausted its retry budget."""


class ShapeError(DeepTargetError):
    """Array shapes inconsistent with the operation's contract."""


class NumericError(DeepTargetError):
    """Non-finite value encountered where the kernel requires finite numbers."""


class CheckpointError(DeepTargetError):
    """Unreadable or inconsistent model checkpoint file."""
