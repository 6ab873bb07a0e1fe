"""Exception types shared across the package.

Each carries an ``exit_code`` so the command-line front end can map failures
to the documented process exit status without inspecting messages.
"""


class SkelXaiError(Exception):
    exit_code = 1


class ConfigError(SkelXaiError):
    exit_code = 2


class DataError(SkelXaiError):
    exit_code = 3


class NumericError(SkelXaiError):
    exit_code = 4


class SequenceTooShort(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class MissingInput(DataError):
    pass


class InsufficientSamples(DataError):
    pass


class EmptyEnsemble(ConfigError):
    pass


class MixedMethods(DataError):
    pass


class KOutOfRange(ConfigError):
    pass


class NonPositiveHeight(DataError):
    pass


class EmptyFamily(DataError):
    pass


class MissingK(DataError):
    pass


class NoConsistentPerturbation(NumericError):
    """Every perturbation flipped the predicted class; the metric is skipped."""


class DivergedLoss(NumericError):
    def __init__(self, message, member=None):
        super().__init__(message)
        self.member = member
