"""Possibilistic and probabilistic state estimation with epistemic width monitoring."""

from .errors import CredalError
from .possibility import SupportCloud, TrapezoidPossibility

__all__ = ["CredalError", "SupportCloud", "TrapezoidPossibility"]
__version__ = "0.1.0"
