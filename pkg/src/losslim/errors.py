"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line tool:
1 for unreadable or malformed input files, 2 for model-class violations (the input is not the kind of system the
routine accepts) and 3 for numerical failures.
"""


class LosslimError(Exception):
    exit_code = 3


class InputError(LosslimError, ValueError):
    exit_code = 1


class ModelClassError(LosslimError, ValueError):
    exit_code = 2


class NumericalError(LosslimError, ArithmeticError):
    exit_code = 3


class DimensionMismatch(ModelClassError):
    pass


# lossless certification / limits
class NotLossless(ModelClassError):
    pass


class NotPositiveDefinite(ModelClassError):
    pass


class NotUnique(ModelClassError):
    pass


class SkewFeedthroughViolated(ModelClassError):
    pass


class NonzeroFeedthrough(ModelClassError):
    pass


class NegativeTrace(ModelClassError):
    pass


# networks
class Disconnected(ModelClassError):
    pass


class NotConnected(Disconnected):
    pass


class LoadAngleOutOfRange(ModelClassError):
    pass


class NonpositiveWeight(ModelClassError):
    pass


class NonpositiveInertia(ModelClassError):
    pass


class MissingRatedPower(ModelClassError):
    pass


# numerics
class NotHurwitz(NumericalError):
    pass


class IllConditioned(NumericalError):
    pass


class NoStabilizingSolution(NumericalError):
    pass


class BracketFailure(NumericalError):
    pass


class IllPosedLoop(NumericalError):
    pass


class SingularInternalBlock(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class NullspaceMismatch(NumericalError):
    pass


class InfeasibleSizing(NumericalError):
    pass
