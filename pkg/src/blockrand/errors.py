"""Exception hierarchy shared across the package."""


class BlockRandError(ValueError):
    """Base class for every validation or estimation failure raised here."""


class DesignError(BlockRandError):
    """The block design is invalid (too few units, too few treatments, ...)."""


class ShapeError(BlockRandError):
    """Labels, outcomes or tables do not conform to the design."""


class UndefinedEstimatorError(BlockRandError):
    """An estimator is undefined for the given data (e.g. an empty arm)."""


class VarianceUnestimableError(BlockRandError):
    """A variance estimator was requested for blocks smaller than 2r."""


class EnumerationCapExceeded(BlockRandError):
    """Exhaustive enumeration would exceed the configured assignment cap."""


class SchemaError(BlockRandError):
    """An input document violates its file schema."""
