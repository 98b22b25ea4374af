"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Inconsistent grid, field shape or parameter choice."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ResolutionError(RuntimeError):
    """The grid cannot represent the requested operation accurately."""


class IntegrationError(RuntimeError):
    """Time stepping broke down."""

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = dict(diagnostic or {})


class NonContractionError(IntegrationError):
    """Picard iteration failed to contract."""
