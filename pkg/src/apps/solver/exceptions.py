class SolverError(RuntimeError):
    """Base class for failures inside a reconstruction run"""


class StepSizeError(SolverError):
    """The stability inequality cannot be met with the configured operators"""


class DivergenceError(SolverError):
    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record
