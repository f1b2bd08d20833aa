"""Exception hierarchy.

Input problems derive from :class:`InputError` (CLI exit code 2); numerical
failures derive from :class:`NumericalError` (CLI exit code 3).
"""


class FairMTLError(Exception):
    """Base class for all package errors."""


class InputError(FairMTLError, ValueError):
    exit_code = 2


class NumericalError(FairMTLError, ArithmeticError):
    exit_code = 3


# dataset
class MissingColumn(InputError):
    pass


class MissingValue(InputError):
    pass


class NonBinarySensitive(InputError):
    pass


class EmptyTask(InputError):
    pass


class DoubleEncoding(InputError):
    pass


class GroupDepleted(InputError):
    pass


class TooFewRows(InputError):
    pass


class InvalidSpec(InputError):
    pass


# metrics
class GroupMissing(InputError):
    pass


class EmptyLevels(InputError):
    pass


class DegenerateRange(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class InvalidInputs(InputError):
    pass


# solver / numerics
class SingularSystem(NumericalError):
    pass


class FullSpanConstraint(NumericalError):
    """The group-mean gaps span the whole input space; the hard constraint forces A = 0."""


class ZeroMatrix(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class AllCombinationsFailed(NumericalError):
    pass
