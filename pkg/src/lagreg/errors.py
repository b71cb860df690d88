"""Exception hierarchy shared by all lagreg modules."""


class LagregError(Exception):
    """Base class for every error raised by this package."""


class UnknownIdentifierError(LagregError):
    """An expression references a name the chart does not define."""

    def __init__(self, name, position=None):
        self.name = name
        self.position = position
        where = f" at position {position}" if position is not None else ""
        super().__init__(f"unknown identifier {name!r}{where}")


class EvaluationDomainError(LagregError):
    """Evaluation left the domain (log of non-positive, division by zero)."""

    def __init__(self, subexpression, reason):
        self.subexpression = subexpression
        self.reason = reason
        super().__init__(f"{reason} while evaluating {subexpression!r}")


class DimensionMismatchError(LagregError):
    pass


class ShapeMismatchError(LagregError):
    pass


class ChartMismatchError(LagregError):
    pass


class ToleranceExceededError(LagregError):
    """A verification residual exceeded its tolerance."""

    def __init__(self, check, residual, detail=None):
        self.check = check
        self.residual = residual
        self.detail = detail
        msg = f"{check}: residual {residual:.3e}"
        if detail is not None:
            msg += f" ({detail})"
        super().__init__(msg)


class PreconditionError(LagregError):
    """A documented hypothesis of an operation fails at the given residual."""

    def __init__(self, hypothesis, residual):
        self.hypothesis = hypothesis
        self.residual = residual
        super().__init__(f"precondition violated: {hypothesis} (residual {residual:.3e})")


class SingularPairingError(LagregError):
    pass


class InconsistentSolveError(LagregError):
    """The degenerate linear problem has no solution at tolerance."""

    def __init__(self, residual, report=None):
        self.residual = residual
        self.report = report
        super().__init__(f"no solution: inconsistency residual {residual:.3e}")


class NotAutonomousError(LagregError):
    pass


class RankNotConstantError(LagregError):
    """A rank assumed constant across samples is not."""

    def __init__(self, what, ranks):
        self.what = what
        self.ranks = ranks
        super().__init__(f"{what}: rank varies across samples {sorted(set(ranks))}")


class EmptySurfaceError(LagregError):
    pass


class NotInKernelError(LagregError):
    pass


class HypothesisViolatedError(LagregError):
    pass


class DegenerateAtSampleError(LagregError):
    def __init__(self, point, sigma_min):
        self.point = point
        self.sigma_min = sigma_min
        super().__init__(f"degenerate at sample (smallest singular value {sigma_min:.3e})")


class NotCoisotropicError(LagregError):
    def __init__(self, residual, dimension):
        self.residual = residual
        self.dimension = dimension
        super().__init__(
            f"orthogonal not contained in tangent space "
            f"(residual {residual:.3e}, dimension {dimension})"
        )


class SingularHessianError(LagregError):
    """The velocity Hessian became numerically singular along a trajectory."""

    def __init__(self, time, sigma_min):
        self.time = time
        self.sigma_min = sigma_min
        super().__init__(f"singular Hessian at t={time:.6g} (sigma_min {sigma_min:.3e})")


class StepUnderflowError(LagregError):
    pass


class ConfigError(LagregError):
    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"config field {field!r}: {reason}")


class UnknownScenarioError(LagregError):
    def __init__(self, name, known):
        self.name = name
        self.known = tuple(known)
        super().__init__(f"unknown scenario {name!r}; known: {', '.join(self.known)}")
