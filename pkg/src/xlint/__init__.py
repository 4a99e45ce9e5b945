"""xlint: structured insight checking and reverse mapping for
feature-attribution explanation tables."""

from .data import (
    ExplanationTable,
    FeatureMeta,
    LinearModel,
    Row,
    brute_force_shapley,
    exact_shapley_linear,
    filter_rows,
    load_table,
    serialize_table,
)
from .insights import (
    BoundInsight,
    Comparison,
    Correlation,
    Predicate,
    Read,
    SlotStatus,
    StructuredInsight,
    TCondition,
    TVariable,
    bind,
    deserialize,
    serialize,
    validate,
)

__version__ = "0.1.0"
