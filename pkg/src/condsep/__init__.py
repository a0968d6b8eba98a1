"""condsep: two-stage conditional target-source extraction.

A metadata-completion classifier infers the missing attributes of a target
source from a mixture plus a partial condition, and a frozen-completion-
conditioned separation network extracts the target. Includes the synthetic
data pipeline, all baseline and oracle training recipes, and the evaluation
harness.
"""

from .conditioning import (
    ATTRIBUTES,
    ATTRIBUTE_VALUES,
    LAYOUT_VERSION,
    AttributeSet,
    ConditionToFilm,
    decode_condition,
    encode_condition,
    encode_full,
    film_apply,
    probs_to_estimate,
    sample_condition,
)
from .errors import (
    CondsepError,
    ConfigurationError,
    DegenerateInputError,
    DomainError,
    IngestionError,
    LayoutVersionError,
    TrainingDiverged,
)

__version__ = "0.1.0"
