"""Semantic exception types shared across the package."""


class NumericalError(RuntimeError):
    """A computation left its validity region.

    Raised for singular moment matrices, non-finite integrand values,
    grid minima on a search boundary, degenerate scale estimates, and
    similar conditions where returning a number would be misleading.
    """


class ConfigError(ValueError):
    """An experiment configuration is unparseable or inconsistent."""
