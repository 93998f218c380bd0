"""Exception types shared across the toolkit."""


class TraitbenchError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(TraitbenchError, ValueError):
    """Invalid experiment configuration, detected before any computation."""


class DataError(TraitbenchError, ValueError):
    """Manifest or per-sample file failed to load or validate."""


class DegenerateInputError(TraitbenchError, ValueError):
    """Geometrically degenerate input (coincident pupils, collinear landmarks)."""


class DimensionMismatchError(TraitbenchError, ValueError):
    """Feature dimension does not match what a fitted model expects."""


class ConvergenceError(TraitbenchError, RuntimeError):
    """Iterative solver hit its iteration cap before reaching tolerance."""
