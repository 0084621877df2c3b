"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """A caller broke an operation's precondition (bad shape, bad parameter)."""


class BudgetExceeded(ContractViolation):
    """An exact multi-index sum would exceed the configured work budget."""

    def __init__(self, work, budget):
        super().__init__(
            f"exact sum needs {work} terms, budget is {budget}; down-sample the measure"
        )
        self.work = work
        self.budget = budget


class UnsupportedDimension(ContractViolation):
    pass


class NumericalFailure(RuntimeError):
    """An iterative or time-stepping routine failed; ``payload`` carries diagnostics."""

    def __init__(self, message, **payload):
        super().__init__(message)
        self.payload = payload


class DegenerateFilter(NumericalFailure):
    """The unnormalized filter lost all of its mass."""


class ConfigError(ValueError):
    """A configuration file or command line failed validation."""
