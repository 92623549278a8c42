"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A parameter value is outside its documented domain."""


class ScenarioError(ValueError):
    """A scenario file or scenario object cannot be used.

    Carries the full list of problems so the caller can report all of
    them at once instead of fixing one at a time.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class InvalidGeometryError(ValueError):
    """Degenerate geometric input (coincident points, zero-length sides)."""


class InfeasibleAllocationError(RuntimeError):
    """An allocation violates the problem constraints."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class SolverError(RuntimeError):
    """The power subproblem solver failed to converge."""


class OracleBoundsError(ValueError):
    """A brute-force oracle was asked to enumerate too large a state space."""
