"""Exception types raised by collapse_walk."""


class CollapseWalkError(Exception):
    """Base class for all package errors."""


class ValidationError(CollapseWalkError, ValueError):
    """An object was constructed with inconsistent or invalid data."""


class DomainError(CollapseWalkError, ValueError):
    """An argument lies outside the domain of an operation."""


class PreconditionError(CollapseWalkError):
    """An operation was called on a state that does not satisfy its precondition."""


class UnsupportedScenarioError(CollapseWalkError):
    """The requested computation is only defined for a narrower class of scenarios."""


class ConfigError(CollapseWalkError):
    """An experiment configuration could not be read or validated."""


class InstanceTooLargeError(CollapseWalkError):
    """An exact oracle was asked for an instance beyond its size limit."""
