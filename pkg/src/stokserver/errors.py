"""Shared exception types.

Exit-code mapping used by the CLI: ValidationError -> 2,
ResourceBudgetError -> 3.
"""


class StokServerError(Exception):
    """Base class for all library errors."""


class ValidationError(StokServerError):
    """Malformed input: bad metric, bad distribution, bad file, ..."""


class SizeMismatchError(ValidationError):
    """Two configurations (or vectors) that should agree in size do not."""


class ImbalanceError(ValidationError):
    """Mass totals of two fractional configurations differ."""


class InfeasibleServeError(ValidationError):
    """A serve operation cannot gather one unit of server mass."""


class ExtractionError(StokServerError):
    """An LP solution violates a plan invariant during extraction."""

    def __init__(self, family: str, detail: str):
        super().__init__(f"constraint family '{family}' violated: {detail}")
        self.family = family


class ResourceBudgetError(StokServerError):
    """An exact oracle would exceed its configured state budget."""
