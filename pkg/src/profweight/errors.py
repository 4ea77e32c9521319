"""Exception hierarchy shared across the package."""


class ProfWeightError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(ProfWeightError, ValueError):
    pass


class DegenerateWeightsError(ProfWeightError, ValueError):
    """Raised when the sample weights sum to zero."""


class DivergenceError(ProfWeightError, ArithmeticError):
    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class InvalidSpecError(ProfWeightError, ValueError):
    pass


class FrozenModelError(ProfWeightError):
    pass


class UnknownUnitError(ProfWeightError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class EmptyProbeSetError(ProfWeightError):
    pass


class DataError(ProfWeightError, ValueError):
    pass


class ConfigError(ProfWeightError, ValueError):
    pass


class MissingArtifactError(ProfWeightError, FileNotFoundError):
    pass
