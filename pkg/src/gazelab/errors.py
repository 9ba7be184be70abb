"""Exception types shared across gazelab modules."""


class GazelabError(Exception):
    """Base class for all gazelab errors."""


class ConfigurationError(GazelabError):
    """A required piece of configuration is missing or inconsistent."""


class ValidationError(GazelabError):
    """Input data violates a documented precondition."""
