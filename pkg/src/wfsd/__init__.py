"""Semi-discrete and comparison schemes for Wright-Fisher diffusions."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AllPathsRejected,
    DomainError,
    InvalidParameter,
    NotApplicable,
    PreconditionFailed,
    StepSizeViolation,
)
from .model import (  # noqa: E402
    SET_I,
    SET_II,
    SET_III,
    MultiWFParams,
    SchemeId,
    WFParams,
    classify_boundaries,
    from_channel_rates,
    preset,
)
from .harness import ExperimentConfig, config_for_preset, strong_errors  # noqa: E402
