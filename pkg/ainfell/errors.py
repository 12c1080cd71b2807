"""Exception hierarchy shared by the library and the command line.

Every error that can reach the CLI carries the exit code it maps to.
"""


class AinfellError(Exception):
    exit_code = 1

    def __init__(self, message: str, *, anchor: str | None = None):
        super().__init__(message)
        self.anchor = anchor


class ConfigError(AinfellError):
    exit_code = 2


class InvalidModulusError(AinfellError):
    exit_code = 2


class UnknownSuiteError(AinfellError):
    exit_code = 2


class PoleProximityError(AinfellError):
    exit_code = 3


class TransversalityError(AinfellError):
    exit_code = 4


class IllConditionedFitError(AinfellError):
    exit_code = 5


# ---------------------------------------------------------------------------
# Library-level precondition failures
# ---------------------------------------------------------------------------


class DgAlgebraError(AinfellError):
    """Structure constants, differential or inner product fail validation."""


class HodgeError(AinfellError):
    pass


class TruncationError(AinfellError):
    """A series tail bound cannot be met within the term cap."""


class SlotMismatchError(AinfellError):
    """Sections or tensors live on incompatible bundles or bases."""


class PreconditionError(AinfellError):
    pass
