"""Shared exception types."""


class InputError(ValueError):
    """A parameter or argument is outside its documented domain."""


class CapabilityError(RuntimeError):
    """The request exceeds an exact-mode budget; use a Monte Carlo path instead."""


class HorizonError(ValueError):
    """A query or window reaches past the sampled time horizon."""


class UncertifiedProfileError(TypeError):
    """A diagnostic (family-restricted) profile was fed to a certified bound."""
