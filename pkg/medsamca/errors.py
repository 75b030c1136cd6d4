# exceptions raised across the package


class MedSAMCAError(Exception):
    "Base class of every error raised by medsamca"


class DimensionError(MedSAMCAError, ValueError):
    "Shapes or sizes do not fit together"


class ConfigurationError(MedSAMCAError, ValueError):
    "A parameter or configuration value is outside its allowed range"


class ValidationError(MedSAMCAError, ValueError):
    "Input data violates a precondition (empty mask, degenerate box...)"


class ContractError(MedSAMCAError, RuntimeError):
    "An API is used against its contract"


class NumericalError(MedSAMCAError, ArithmeticError):
    "NaN/Inf values or a failed gradient check"


class FormatError(MedSAMCAError, ValueError):
    "A file does not follow its declared format"

    def __init__(self, message: str, offset: int = None):
        if offset is not None:
            message = "{0} (at byte offset {1})".format(message, offset)
        super().__init__(message)
        self.offset = offset


class CheckpointError(MedSAMCAError, IOError):
    "A checkpoint cannot be restored into the requested model"


EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


def exit_code_for(error: BaseException) -> int:
    "Map an exception to the command line exit code"
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(error, (FormatError, CheckpointError, OSError)):
        return EXIT_IO
    return EXIT_INVALID
