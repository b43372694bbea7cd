"""Exception types shared across the package.

DomainError covers statistically meaningless or infeasible inputs (bad ICC
triples, means outside the link domain, impossible allocations).  Runtime
failures of iterative procedures raise ConvergenceError.  The CLI and HTTP
service map these onto exit codes and status codes respectively.
"""


class DomainError(ValueError):
    """Input is well formed but statistically invalid or infeasible."""


class InvalidCorrelationError(DomainError):
    """ICC triple is not positive definite for the given block dimensions."""

    def __init__(self, report):
        self.report = report
        detail = "; ".join(report.violations) if report.violations else "not positive definite"
        super().__init__(f"invalid correlation structure: {detail}")


class AllocationError(DomainError):
    """Requested allocation cannot be realized with whole units."""


class CapExceededError(DomainError):
    """Requested problem size exceeds a configured safety cap."""


class GenerationRangeError(DomainError):
    """A conditional mean left [0, 1] while generating binary outcomes.

    Signals that the marginal means and ICC triple are jointly incompatible
    for the realized layout.  Carries the offending cluster and observation.
    """

    def __init__(self, cluster_index, obs_index, value):
        self.cluster_index = cluster_index
        self.obs_index = obs_index
        self.value = value
        super().__init__(
            f"conditional mean {value:.6f} outside [0, 1] at cluster "
            f"{cluster_index}, observation {obs_index}; the marginal means "
            f"and ICC triple are incompatible for this layout"
        )


class NoSolutionError(DomainError):
    """An iterative solver exhausted its search cap without a solution."""


class ConvergenceError(RuntimeError):
    """Too many replications failed to converge for a trustworthy summary."""
