"""Exception hierarchy shared by every module."""


class CurvlabError(Exception):
    """Base class for all library errors."""


class DomainError(CurvlabError):
    """A point or parameter lies outside the region where an operation is defined."""


class ConditioningError(CurvlabError):
    def __init__(self, message, condition_number):
        super().__init__(f"{message} (condition number {condition_number:.3e})")
        self.condition_number = condition_number


class DegeneratePlaneError(CurvlabError):
    """Two tangent vectors do not span a plane."""


class AmbiguousFootpointError(CurvlabError):
    """Two distinct closest points realise the distance; the point is outside the valid tube."""


class IntegrationError(CurvlabError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class InputError(CurvlabError, ValueError):
    """Caller supplied inconsistent data."""


class ParameterError(InputError):
    pass


class FeasibilityError(CurvlabError):
    def __init__(self, message, binding_constraint):
        super().__init__(f"{message} [binding: {binding_constraint}]")
        self.binding_constraint = binding_constraint


class CoverageError(CurvlabError):
    """A sample plan leaves a required region empty."""


class ConfigurationError(CurvlabError):
    pass


class SearchExhaustedError(CurvlabError):
    def __init__(self, message, trend):
        super().__init__(message)
        self.trend = trend


class ReplayError(CurvlabError):
    pass


class OrderingError(CurvlabError):
    """A report was requested before its prerequisites were computed."""
