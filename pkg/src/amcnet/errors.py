"""Exception types shared across the library."""


class AmcnetError(Exception):
    """Base class for all library-specific errors."""


class ShapeError(AmcnetError, ValueError):
    """Tensor/array dimensions do not satisfy an operation's contract."""


class GraphConsumedError(AmcnetError, RuntimeError):
    """backward() was called on a graph that has already been traversed."""


class MaskedRowError(AmcnetError, ValueError):
    """A softmax row contains only mask-sentinel entries."""


class DataError(AmcnetError, RuntimeError):
    """Dataset-level problem: empty split, missing frames, bad arguments."""


class StratificationError(DataError):
    """A (label, snr) stratum is too small to split at the requested fractions."""


class FormatError(DataError):
    """A binary file does not conform to the AMCD/AMCK layout."""


class DivergenceError(AmcnetError, RuntimeError):
    """Training produced a non-finite loss."""


class ConfigError(AmcnetError, ValueError):
    """Invalid or unknown configuration key/value."""


class OptimizerStateError(AmcnetError, RuntimeError):
    """Optimizer step requested with missing or inconsistent state."""
