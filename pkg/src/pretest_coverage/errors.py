"""Exception hierarchy for pretest_coverage.

Public functions raise these instead of bare ValueError/RuntimeError so
callers (and the CLI exit-code mapping) can tell input problems apart from
numerical failures.
"""


class PretestCoverageError(Exception):
    """Base class for all errors raised by this package."""


class InputDomainError(PretestCoverageError, ValueError):
    """An argument violates its documented domain (range, sign, shape)."""


class OutcomeBudgetError(PretestCoverageError):
    """Exact enumeration refused: the outcome space exceeds the budget.

    Carries the offending sizes so the caller can decide to fall back to
    Monte Carlo estimation.
    """

    def __init__(self, outcomes: int, budget: int):
        self.outcomes = outcomes
        self.budget = budget
        super().__init__(
            f"outcome space has {outcomes} points, exceeding the budget of "
            f"{budget}; use Monte Carlo estimation instead"
        )


class QuadratureError(PretestCoverageError, ArithmeticError):
    """Numerical integration failed to converge to the requested tolerance."""

    def __init__(self, message: str, error_estimate: float):
        self.error_estimate = error_estimate
        super().__init__(f"{message} (achieved error estimate {error_estimate:.3e})")
