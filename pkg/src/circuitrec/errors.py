class FormatError(ValueError):
    """Input bytes are not in a format we can decode."""


class ConfigError(ValueError):
    """Invalid configuration or hyperparameters."""
