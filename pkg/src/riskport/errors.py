"""Exception types shared across the package."""


class RiskportError(Exception):
    """Base class for all package errors."""


class ModelError(RiskportError, ValueError):
    """Invalid market or utility specification."""


class DomainError(RiskportError, ValueError):
    """An argument lies outside the domain of the evaluator."""


class NumericError(RiskportError, ArithmeticError):
    """Root-finding or quadrature failed to produce a finite answer."""


class ConfigError(RiskportError, ValueError):
    """Malformed or inconsistent run configuration."""
