"""Exception types shared across the package."""


class DplinalgError(Exception):
    pass


class FieldMismatch(DplinalgError):
    pass


class DependentRows(DplinalgError):
    pass


class ZeroVector(DplinalgError):
    pass


class NonPositiveScale(DplinalgError):
    pass


class NonUnitVector(DplinalgError):
    pass


class DeltaTooLarge(DplinalgError):
    pass


class LiftDegeneracy(DplinalgError):
    """A lifted output vector has no usable last coordinate."""


class DimensionTooLarge(DplinalgError):
    pass


class InsufficientRows(DplinalgError):
    pass


class SolverFailed(DplinalgError):
    """The perceptron solver exhausted its rescaling budget.

    The partial outcome (last iterate, telemetry) is kept on ``outcome``.
    """

    def __init__(self, msg, outcome=None):
        super().__init__(msg)
        self.outcome = outcome


class InconsistentEqualities(DplinalgError):
    pass


class AffinelyDependent(DplinalgError):
    pass


class DegenerateDirection(DplinalgError):
    pass


class DatasetExhausted(DplinalgError):
    pass


class InvalidKnobs(DplinalgError):
    pass
