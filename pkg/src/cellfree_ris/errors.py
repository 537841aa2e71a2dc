"""Exception types shared across the package."""


class InvalidScenario(ValueError):
    """Scenario geometry or configuration that cannot be simulated."""


class NumericalFailure(RuntimeError):
    """A solver failed to produce a finite or converged result.

    ``diagnostics`` carries whatever the failing routine knew at the time,
    and ``trace`` is filled in by the orchestrator with the partial run.
    """

    def __init__(self, message, diagnostics=None, trace=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
        self.trace = trace
