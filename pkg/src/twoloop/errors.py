"""Exception hierarchy.

Every error carries the name of the operation that raised it so the CLI can
report a machine-readable failure.
"""


class TwoLoopError(Exception):
    """Base class. ``exit_code`` is what the CLI returns for it."""

    exit_code = 3
    operation = ""

    def __init__(self, message="", operation=None):
        super().__init__(message)
        if operation is not None:
            self.operation = operation


class ValidationError(TwoLoopError):
    exit_code = 2


class NumericError(TwoLoopError):
    exit_code = 3


class RegimeError(TwoLoopError):
    exit_code = 4


# system_model
class SaddleLevelMismatch(ValidationError):
    operation = "validate_two_saddle_loop"


class NoConnection(ValidationError):
    operation = "validate_two_saddle_loop"


class NoInteriorCenter(ValidationError):
    operation = "validate_two_saddle_loop"


class PreconditionError(ValidationError):
    pass


class OutOfAnnulus(ValidationError):
    operation = "normalized_parameter"


# complex_flow
class TransversalityLost(NumericError):
    operation = "lift_path"


class StepBudgetExceeded(NumericError):
    operation = "lift_path"


class NotClosed(NumericError):
    operation = "holonomy_transport"


class SaddleLost(NumericError):
    operation = "separatrix_shoot"


class BudgetExceeded(NumericError):
    operation = "separatrix_shoot"


# dulac
class SectionMiss(NumericError):
    operation = "dulac_map"


class SeedDivergence(NumericError):
    operation = "trace_zero_locus"


# melnikov
class NoReturn(NumericError):
    operation = "periodic_orbit"


class NotHyperelliptic(ValidationError):
    operation = "vanishing_cycle"


class BranchCollision(NumericError):
    operation = "vanishing_cycle"


class NoConvergence(NumericError):
    operation = "abelian_integral"


class NoisyTail(NumericError):
    operation = "characteristic_number"


class OrderAmbiguous(NumericError):
    operation = "estimate_Md"


# counting
class SmallModulus(RegimeError):
    operation = "build_contour"


class RefinementBudget(NumericError):
    operation = "build_contour"
