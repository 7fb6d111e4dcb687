"""Error taxonomy shared by the library and the command line front end."""


class SphereStabilityError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for this class."""

    exit_code = 1
    error_class = "error"


class DomainError(SphereStabilityError, ValueError):
    exit_code = 2
    error_class = "domain"


class CapacityError(DomainError):
    error_class = "capacity"


class NumericalError(SphereStabilityError, ArithmeticError):
    exit_code = 3
    error_class = "numerical"


class OutputError(SphereStabilityError, OSError):
    exit_code = 4
    error_class = "io"
