"""HTTP loss-oracle service for the v1 wire protocol."""

from .app import create_app, load_weights_file
from .models import WeightsError, build_model, seeded_weights, weights_document

__all__ = [
    "WeightsError",
    "build_model",
    "create_app",
    "load_weights_file",
    "seeded_weights",
    "weights_document",
]

__version__ = "0.1.0"
