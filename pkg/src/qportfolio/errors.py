"""Exception types shared across the package."""


class QPortfolioError(Exception):
    """Base class for all package-specific failures."""


class IntegrationError(QPortfolioError):
    """SDE integration produced a non-finite state."""

    def __init__(self, message, step=None, path=None):
        super().__init__(message)
        self.step = step
        self.path = path


class StabilityError(QPortfolioError):
    """A solver time step violates its stability/accuracy bound."""


class SchemeError(QPortfolioError):
    """A finite-difference scheme violated a structural guarantee (positivity, mass)."""


class OracleError(QPortfolioError):
    """A numerical test oracle failed to converge; results must not be guessed."""


class ScenarioError(QPortfolioError):
    """Scenario file failed validation. Carries the full list of problems."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
