"""Exception types raised across the package."""


class BTFuzzError(Exception):
    """Base class for all package errors."""


# geometry / Frenet frame
class DegeneratePath(BTFuzzError, ValueError):
    pass


class PointOffPath(BTFuzzError, ValueError):
    pass


class OutOfRange(BTFuzzError, ValueError):
    pass


class NonpositiveDuration(BTFuzzError, ValueError):
    pass


# log2bt
class TooFewStates(BTFuzzError, ValueError):
    pass


class EmptyOverlap(BTFuzzError, ValueError):
    pass


class UnknownProperty(BTFuzzError, KeyError):
    pass


class EmptyDistribution(BTFuzzError, ValueError):
    pass


# behavior trees / scenarios
class DanglingReference(BTFuzzError, LookupError):
    pass


class DomainError(BTFuzzError, ValueError):
    pass


class UnresolvedTarget(BTFuzzError, KeyError):
    pass


class ScenarioFormatError(BTFuzzError, ValueError):
    pass


class ScenarioUnboundVariables(BTFuzzError, ValueError):
    pass


# evaluation
class UnknownParticipant(BTFuzzError, KeyError):
    pass


class NotEgoCollision(BTFuzzError, ValueError):
    pass


# search / analysis
class DegenerateSurrogate(BTFuzzError, RuntimeError):
    pass


class EmptyPopulation(BTFuzzError, ValueError):
    pass


class TooFewPoints(BTFuzzError, ValueError):
    pass


# files
class LogFormatError(BTFuzzError, ValueError):
    pass
