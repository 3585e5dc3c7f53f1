class PacForestError(Exception):
    exit_code = 1


class DataError(PacForestError, ValueError):
    """Input data cannot be used (unreadable, non-binary labels, empty after filtering)."""

    exit_code = 2


class ConfigurationError(PacForestError, ValueError):
    """The run is misconfigured, e.g. a tree without out-of-bag rows."""

    exit_code = 3


class NumericError(PacForestError, ArithmeticError):
    exit_code = 4


class InfeasibleMomentError(NumericError):
    """No aligned posterior reaches the requested first margin moment."""

    def __init__(self, mu, low, high):
        super().__init__(f"first moment mu={mu:.6g} is not achievable; feasible range is [{low:.6g}, {high:.6g}]")
        self.mu, self.low, self.high = mu, low, high
