"""Query-counted black-box gradient estimation and adversarial attacks."""

from .errors import (
    BlackBanditError,
    BudgetExhausted,
    ConfigError,
    DegenerateGradient,
    DiagnosticsUnavailable,
    IllConditionedProbe,
    TransportError,
)
from .oracle import (
    LabeledInput,
    LinearModel,
    MlpModel,
    Oracle,
    OracleDescriptor,
    Point,
    QuadraticModel,
    QueryLedger,
    RemoteOracle,
    SoftmaxModel,
    make_model,
    make_oracle,
    seeded_weights,
    weights_payload,
)

__all__ = [
    "BlackBanditError",
    "BudgetExhausted",
    "ConfigError",
    "DegenerateGradient",
    "DiagnosticsUnavailable",
    "IllConditionedProbe",
    "TransportError",
    "LabeledInput",
    "LinearModel",
    "MlpModel",
    "Oracle",
    "OracleDescriptor",
    "Point",
    "QuadraticModel",
    "QueryLedger",
    "RemoteOracle",
    "SoftmaxModel",
    "make_model",
    "make_oracle",
    "seeded_weights",
    "weights_payload",
]

__version__ = "0.1.0"
