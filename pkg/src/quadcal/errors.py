class QuadError(Exception):
    """Base class for errors raised by quadcal."""

    exit_code = 1


class InputError(QuadError, ValueError):
    """Bad or insufficient input data; CLI exit code 1."""

    exit_code = 1


class NumericalError(QuadError, ArithmeticError):
    """Fitting or scoring produced a non-finite result; CLI exit code 2."""

    exit_code = 2
