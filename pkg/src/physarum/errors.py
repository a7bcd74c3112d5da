"""Exception types shared across the package."""


class PhysarumError(Exception):
    """Base class for all errors raised by this package."""


class GraphError(PhysarumError):
    """Invalid graph construction input."""


class OutOfRangeNodeError(GraphError):
    pass


class NonPositiveLengthError(GraphError):
    pass


class NonPositiveCapacityError(GraphError):
    pass


class NegativeCostError(GraphError):
    pass


class SelfLoopError(GraphError):
    pass


class ParallelArcError(GraphError):
    pass


class DimensionMismatchError(PhysarumError):
    """An array argument does not match the graph's arc or node count."""


class UnbalancedInjectionsError(PhysarumError):
    """Node injections do not sum to zero within tolerance."""


class NegativeConductivityError(PhysarumError):
    pass


class DisconnectedInjectionError(PhysarumError):
    """A node carrying injection is unreachable from the grounded node
    through arcs of positive conductivity."""


class SingularSystemError(PhysarumError):
    """The grounded linear system could not be solved to the required
    residual."""


class DisconnectedOdPairError(PhysarumError):
    """A travel demand's destination is unreachable from its origin."""


class ZeroDenominatorError(PhysarumError):
    """Relative gap requested while total flow-weighted time is zero."""


class NonPositiveDemandError(PhysarumError):
    """A travel demand entry is non-positive or self-directed."""


class InstanceParseError(PhysarumError):
    """Malformed instance file; carries the offending 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingSourceOrSinkError(InstanceParseError):
    pass


class DuplicateProblemLineError(InstanceParseError):
    pass
