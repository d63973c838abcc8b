"""
Exception hierarchy
Every error raised by the library derives from HierarchicalFewShotError
"""

from typing import Optional, Sequence


class HierarchicalFewShotError(Exception):
    """Base class for all library errors"""


class ConfigError(HierarchicalFewShotError, ValueError):
    """Invalid experiment configuration or override"""


class TreeError(HierarchicalFewShotError, ValueError):
    """Malformed class hierarchy or invalid tree query"""


class DataError(HierarchicalFewShotError, ValueError):
    """Unreadable audio, bad cache entries or dataset/tree mismatch"""


class EpisodeError(DataError):
    """Pool cannot supply the requested episode"""

    def __init__(self, message: str, label: Optional[str] = None):
        super().__init__(message)
        self.label = label


class ShapeError(HierarchicalFewShotError, ValueError):
    """Operands of a tensor operation have incompatible shapes"""

    def __init__(self, op: str, *shapes: Sequence[int], detail: str = ""):
        rendered = " and ".join(str(list(s)) for s in shapes)
        message = f"{op}: incompatible shapes {rendered}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)
        self.op = op
        self.shapes = [tuple(s) for s in shapes]


class GraphError(HierarchicalFewShotError, RuntimeError):
    """Misuse of the differentiation graph"""


class NumericError(HierarchicalFewShotError, ArithmeticError):
    """Non-finite value encountered during optimisation"""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


class PrototypeError(HierarchicalFewShotError, ValueError):
    """Invalid input to prototype construction or classification"""


class StatisticsError(HierarchicalFewShotError, ValueError):
    """Invalid input to a metric or significance test"""
