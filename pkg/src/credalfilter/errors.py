"""Exception types raised across the package."""


class CredalError(ValueError):
    """Base class for invalid inputs and inference failures."""


class EmptyEventError(CredalError):
    pass


class TotalIncompatibilityError(CredalError):
    """Min-conditioning left every grade at zero (empty credal set)."""


class EnumerationLimitError(CredalError):
    pass


class ColdStartError(CredalError):
    """A consistency window was queried before any sample arrived."""


class DegenerateCovarianceError(CredalError):
    pass


class EvidenceContradictionError(CredalError):
    """Every support point failed the compatibility gate, even after inflation."""

    def __init__(self, message, min_stat=float("nan")):
        super().__init__(message)
        self.min_stat = min_stat


class ConfigError(CredalError):
    """A scenario or filter configuration failed validation."""


class FilterFailure(CredalError):
    """A filter step failed; carries where it happened."""

    def __init__(self, message, step=None, mode=None):
        super().__init__(message)
        self.step = step
        self.mode = mode
