"""Exception hierarchy.

Every error carries a short machine name (``name`` attribute) that the CLI
prints next to exit code 3 so failures can be traced to the raising module.
"""


class GraphNLSError(Exception):
    """Base class for all library errors."""

    @property
    def name(self) -> str:
        return type(self).__name__


class GraphError(GraphNLSError, ValueError):
    """Invalid graph description."""


class EmptyGraph(GraphError):
    pass


class NonPositiveLength(GraphError):
    pass


class DisconnectedGraph(GraphError):
    pass


class InvalidExponent(GraphNLSError, ValueError):
    pass


class ConvergenceFailure(GraphNLSError, RuntimeError):
    pass


class LinearSolveFailure(GraphNLSError, RuntimeError):
    pass


class DegeneratePairing(GraphNLSError, RuntimeError):
    pass


class DegenerateSample(GraphNLSError, ValueError):
    pass


class RootBracketFailure(GraphNLSError, RuntimeError):
    pass


class SamplingBudgetExceeded(GraphNLSError, RuntimeError):
    pass


class SingularVelocity(GraphNLSError, RuntimeError):
    pass


class InadmissibleIndex(GraphNLSError, ValueError):
    pass


class NoSignChangingFound(GraphNLSError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class OrderingViolation(GraphNLSError, RuntimeError):
    pass


class DuplicateSolution(GraphNLSError, RuntimeError):
    pass


class BranchLost(GraphNLSError, RuntimeError):
    def __init__(self, message, mu=None):
        super().__init__(message)
        self.mu = mu


class OracleUnavailable(GraphNLSError, RuntimeError):
    pass


class MissingArtifact(GraphNLSError, FileNotFoundError):
    pass
