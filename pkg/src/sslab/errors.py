"""Exception hierarchy shared by all modules."""


class SslabError(Exception):
    """Base class for errors raised by the package."""


class InvalidParameterError(SslabError, ValueError):
    """A parameter lies outside its allowed domain."""


class ContractViolation(SslabError, ValueError):
    """An input does not satisfy an operation's precondition."""


class OutOfValidityError(SslabError, ValueError):
    """Parameters are outside the regime where a closed form applies."""


class NumericalError(SslabError, ArithmeticError):
    """A numerical routine failed (non-finite values, no convergence, defective spectrum)."""
