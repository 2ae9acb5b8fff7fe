"""Exception hierarchy. Each class maps onto one CLI exit code."""


class SurvRuleFitError(Exception):
    exit_code = 1


class DataError(SurvRuleFitError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class InsufficientCandidatesError(SurvRuleFitError):
    """Fewer than two candidate subgroups survived rule generation."""

    exit_code = 4

    def __init__(self, n_candidates, message=None):
        self.n_candidates = n_candidates
        super().__init__(
            message
            or f"insufficient candidate subgroups: {n_candidates} (the Lasso step needs at least 2)"
        )


class NumericalError(SurvRuleFitError, ArithmeticError):
    """Solver failed to converge or produced a non-finite value."""

    exit_code = 5
