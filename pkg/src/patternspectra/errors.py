"""Exception hierarchy.

``exit_code`` is what the command-line driver returns when the error escapes a
command: 1 for numerical-check failures, 2 for bad input.
"""


class PatternSpectraError(Exception):
    exit_code = 1


class InputError(PatternSpectraError, ValueError):
    exit_code = 2


class NumericalFailure(PatternSpectraError):
    exit_code = 1


class GridMismatch(InputError):
    pass


class ComponentMismatch(InputError):
    pass


class SnapshotFormatError(InputError):
    pass


class ConfigError(InputError):
    pass


class MissingArtifact(InputError):
    pass


class UnsupportedNormPair(InputError):
    pass


class NoConvergence(NumericalFailure):
    pass


class DegenerateWave(NumericalFailure):
    pass


class SingularJacobian(NumericalFailure):
    pass


class InconsistentDerivative(NumericalFailure):
    pass


class GapCollapse(NumericalFailure):
    pass


class InconsistentExpansion(NumericalFailure):
    pass


class ValidationFailure(NumericalFailure):
    pass


class ExpansionFailure(NumericalFailure):
    pass


class TailMassExceeded(NumericalFailure):
    pass


class DegenerateFit(NumericalFailure):
    pass


class AmplitudeTooLarge(InputError):
    pass


class ContractionViolated(NumericalFailure):
    pass


class BlowupDetected(NumericalFailure):
    pass


class NonlinearContamination(NumericalFailure):
    pass


class LeavesValidityRegion(NumericalFailure):
    pass
