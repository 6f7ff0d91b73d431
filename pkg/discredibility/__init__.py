class DiscredibilityError(Exception):
    """
    Base exception class for Discredibility.
    """

    pass


class DiscredibilityWarning(UserWarning):
    """
    Base warning class for Discredibility.
    """

    pass


class ShapeError(DiscredibilityError):
    pass


class DivergenceError(DiscredibilityError):
    pass


class DatasetFormatError(DiscredibilityError):
    pass


class SplitError(DiscredibilityError):
    pass


class AttackContextError(DiscredibilityError):
    pass


class DiscreditError(DiscredibilityError):
    pass


class AuditStateError(DiscredibilityError):
    pass


class ConfigError(DiscredibilityError):
    pass
