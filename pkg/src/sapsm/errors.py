"""Exception types shared across the package."""


class DimensionMismatch(ValueError):
    """Operands have incompatible shapes."""


class NonFiniteIterate(RuntimeError):
    """An iteration produced NaN or infinity."""

    def __init__(self, iteration: int):
        self.iteration = iteration
        super().__init__(f"non-finite iterate at iteration {iteration}")


class CandidateBudget(ValueError):
    """Exhaustive search refused because the candidate set is too large."""

    def __init__(self, count: int, limit: int):
        self.count = count
        self.limit = limit
        super().__init__(f"{count} candidates exceed budget of {limit}")


class SolverFailure(RuntimeError):
    """A linear solve failed (matrix singular to machine precision)."""


class ConfigError(ValueError):
    """Invalid experiment or algorithm configuration."""
