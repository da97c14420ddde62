"""Exception types shared across the package."""


class WFError(Exception):
    """Base class for all package errors."""


class InvalidParameter(WFError, ValueError):
    pass


class DomainError(WFError, ValueError):
    """A state was evaluated outside the model domain."""


class NotApplicable(WFError):
    """The requested scheme or bound does not apply to these parameters."""


class PreconditionFailed(WFError):
    pass


class SingularSystem(WFError):
    pass


class InvalidSpec(WFError, ValueError):
    pass


class InsufficientData(WFError):
    pass


class AllPathsRejected(WFError):
    pass


class StepSizeViolation(WFError):
    """The drift update left (0, 1), so the sin^2 sub-step is undefined.

    Carries the offending node state ``y``, the updated value ``y_tilde``,
    the step ``dt`` and, when known, the node ``index`` and ``path``.
    """

    def __init__(self, y, y_tilde, dt, index=None, path=None):
        self.y = y
        self.y_tilde = y_tilde
        self.dt = dt
        self.index = index
        self.path = path
        where = ""
        if index is not None:
            where += f" at node {index}"
        if path is not None:
            where += f" on path {path}"
        super().__init__(
            f"drift update left (0, 1){where}: y={y!r}, y_tilde={y_tilde!r}, dt={dt!r}"
        )


# the generic framework's name for the same failure
SubstepDomainError = StepSizeViolation
