"""Exception hierarchy shared by every module."""


class RiskConvError(Exception):
    """Base class; the CLI maps these to exit code 1."""


class InvalidArgument(RiskConvError, ValueError):
    pass


class UnsupportedOperation(RiskConvError):
    pass


class PreconditionError(RiskConvError):
    pass


class ContractViolation(RiskConvError):
    pass


class EvaluationError(RiskConvError):
    pass


class UnboundedBelow(ContractViolation):
    """A risk functional took the value -inf (improper)."""


class NonConvergence(RiskConvError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


class ScenarioError(RiskConvError):
    """Malformed scenario CSV; message carries row/column."""


class InstanceTooLarge(RiskConvError):
    pass
