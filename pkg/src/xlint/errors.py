"""Exception hierarchy shared across the package."""


class XlintError(Exception):
    """Base class for every error raised by this package."""


class MalformedInput(XlintError):
    """Input data violates the dataset schema (missing column, bad value, ...)."""


class DuplicateRowId(XlintError):
    """Two rows in a dataset share the same id."""


class EmptyTable(XlintError):
    """Dataset contains no data rows."""


class MissingFeature(XlintError):
    """An instance does not cover every feature of the model."""


class TooManyFeatures(XlintError):
    """Brute-force Shapley enumeration capped at 12 features."""


class UnknownFeature(XlintError):
    """A condition or variable references a feature the table does not declare."""


class TypeMismatch(XlintError):
    """Operation incompatible with the feature kind (e.g. range on categorical)."""


class UnknownInsightType(XlintError):
    """Insight document tag is not one of read / correlation / comparison."""


class SchemaViolation(XlintError):
    """Insight JSON does not match the canonical schema."""

    def __init__(self, paths, message=None):
        self.paths = tuple(paths)
        super().__init__(message or f"schema violation at {', '.join(self.paths)}")


class NoParseError(XlintError):
    """Text is outside the controlled insight language."""


class ProviderUnavailable(XlintError):
    """LLM provider could not be reached or returned a transport-level failure."""


class UnparseableClassification(XlintError):
    """LLM never produced a usable insight-type classification."""


class UndefinedStatistic(XlintError):
    """Requested statistic is undefined on the given rows (internal signal)."""


class UnresolvableField(XlintError):
    """A chart encoding references a field the table cannot supply."""


class InvariantViolation(XlintError):
    """A chart specification breaks one of its structural invariants."""
