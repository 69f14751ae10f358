"""Funnel-reduced conformer transducer with an analytic decoding cost model.

The package is organized by role:

- ``numerics``: float64 reverse-mode autodiff core
- ``encoder``: conformer stack with funnel (query-pooling) blocks
- ``hat_model``: blank-factored transducer, losses, prediction networks
- ``decoder``: alignment-synchronous beam search and cross-check decoders
- ``costmodel`` / ``benchdata``: analytic step and MAC accounting against
  published latency measurements
- ``harness``: synthetic task, training loop, evaluation, CLI
"""

from .encoder import EncoderConfig, EncodedSequence, format_shorthand, parse_shorthand
from .errors import (
    ConfigError,
    FitError,
    FunnelhatError,
    NumericError,
    ShapeError,
    TrainingDivergedError,
)
from .hat_model import HatModel, HatOutput, ModelConfig, PredNetConfig, edit_distance
from .decoder import (
    Beam,
    DecodeResult,
    Hypothesis,
    decode_alsync,
    decode_exhaustive,
    decode_framesync,
)

__version__ = "0.1.0"

__all__ = [
    "Beam",
    "ConfigError",
    "DecodeResult",
    "EncodedSequence",
    "EncoderConfig",
    "FitError",
    "FunnelhatError",
    "HatModel",
    "HatOutput",
    "Hypothesis",
    "ModelConfig",
    "NumericError",
    "PredNetConfig",
    "ShapeError",
    "TrainingDivergedError",
    "decode_alsync",
    "decode_exhaustive",
    "decode_framesync",
    "edit_distance",
    "format_shorthand",
    "parse_shorthand",
    "__version__",
]
