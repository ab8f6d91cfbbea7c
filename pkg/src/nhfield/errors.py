"""Exception hierarchy shared by every module of the package."""


class NHFieldError(Exception):
    """Base class for all package errors."""


class EvaluationDomainError(NHFieldError, ValueError):
    """An arithmetic or elementary function was evaluated outside its domain."""

    def __init__(self, message, value=None):
        super().__init__(message if value is None else f"{message} (value={value!r})")
        self.value = value


class ExprSyntaxError(NHFieldError, ValueError):
    def __init__(self, offset, message):
        super().__init__(f"error at offset {offset}: {message}")
        self.offset = offset
        self.detail = message


class UnboundVariableError(NHFieldError, KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"unbound variable {self.name!r}"


class ModelSchemaError(NHFieldError, ValueError):
    """Model file or builder arguments violate the model schema."""


class SingularHessianError(NHFieldError, ArithmeticError):
    def __init__(self, message, condition=0.0):
        super().__init__(message)
        self.condition = condition


class ConstraintRankError(NHFieldError, ArithmeticError):
    """The constraint forms do not have full rank m."""


class IncompatibilityError(NHFieldError, ArithmeticError):
    """The compatibility matrix C is numerically singular at the point."""

    def __init__(self, message, condition=0.0):
        super().__init__(message)
        self.condition = condition


class FeasibilityError(NHFieldError, ValueError):
    """A point lies off the constraint submanifold beyond tolerance."""


class SingularSystemError(NHFieldError, ArithmeticError):
    def __init__(self, message, condition=0.0):
        super().__init__(message)
        self.condition = condition


class IntegrationError(NHFieldError, RuntimeError):
    """A time integration aborted; ``partial`` holds the steps computed so far."""

    def __init__(self, message, time=None, partial=None):
        super().__init__(message)
        self.time = time
        self.partial = partial


class UnsupportedModelError(NHFieldError, ValueError):
    pass


class LegendreInversionError(NHFieldError, ArithmeticError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class GridTooCoarseError(NHFieldError, ValueError):
    pass


class ConfigError(NHFieldError, ValueError):
    """Simulation configuration is invalid; ``field`` names the offender."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
