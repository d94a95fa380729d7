"""Exception hierarchy. Every data/validation failure derives from DeepMadError."""


class DeepMadError(Exception):
    pass


class UnsupportedFormat(DeepMadError):
    pass


class CorruptImage(DeepMadError):
    pass


class OutOfBounds(DeepMadError, IndexError):
    pass


class ImageTooSmall(DeepMadError, ValueError):
    pass


class BandCountTooLarge(DeepMadError, ValueError):
    pass


class DimensionMismatch(DeepMadError, ValueError):
    pass


class DegenerateClasses(DeepMadError, ValueError):
    pass


class NonConvergence(UserWarning):
    """Issued (not raised) when logistic fusion training hits its iteration cap."""


class MissingClass(DeepMadError, ValueError):
    pass


class ModelFormatError(DeepMadError):
    pass


class ParseError(DeepMadError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class InvariantViolation(ParseError):
    pass


class EmptySplit(DeepMadError):
    pass


class GridOverlap(DeepMadError):
    pass


class IdMismatch(DeepMadError):
    pass
