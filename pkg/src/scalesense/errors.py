"""Exception types raised across the package."""


class ScaleSenseError(ValueError):
    """Base class for all validation and estimation errors."""


# geometry
class GeometryError(ScaleSenseError):
    """A single observation could not be built; callers drop it."""


class BehindCamera(GeometryError):
    pass


class DegenerateLine(GeometryError):
    pass


class NoIntersection(GeometryError):
    pass


class Tangent(GeometryError):
    pass


class ParallelLines(GeometryError):
    pass


class FeatureOutsideBox(GeometryError):
    pass


class ZeroHeight(GeometryError):
    pass


class NonPositiveVariance(GeometryError):
    pass


# priors
class MalformedPrior(ScaleSenseError):
    pass


class UnknownClass(ScaleSenseError, KeyError):
    pass


# inference
class InvalidBounds(ScaleSenseError):
    pass


class DegenerateUpdate(ScaleSenseError):
    pass


# simulator
class InfeasiblePlacement(ScaleSenseError):
    pass


# evaluation
class ZeroRange(ScaleSenseError):
    pass


class EmptyWindow(ScaleSenseError):
    pass


# io
class ParseError(ScaleSenseError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class NonMonotonicFrame(ParseError):
    pass
