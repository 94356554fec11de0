"""Exception types mapped to CLI exit codes."""


class DataError(ValueError):
    """Malformed or insufficient input data (exit code 2)."""


class NumericFailure(ArithmeticError):
    """Divergence or non-finite values during fitting (exit code 3)."""
