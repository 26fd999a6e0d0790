"""Amplitude estimation of sine waves from quantized, noisy samples."""

from .crlb import cell_probabilities, crlb_amplitude, fisher_information
from .errors import (
    ConvergenceError,
    EstimationFailed,
    IllConditionedError,
    QuantestError,
    UnboundedCRLBError,
    UnsupportedNoiseError,
    ValidationError,
)
from .mvbe import (
    EstimationResult,
    ThresholdCounts,
    crossing_probability,
    estimate,
    estimate_noiseless,
    invert_threshold,
    threshold_counts,
)
from .quantizer import (
    QuantizerModel,
    dnl,
    from_transitions,
    inl,
    make_resistor_ladder,
    make_uniform,
    quantize,
)
from .signal import NoiseModel, Record, SineParams, generate_record
from .sinefit import FitResult, fit3, fit4

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "EstimationFailed",
    "EstimationResult",
    "FitResult",
    "IllConditionedError",
    "NoiseModel",
    "QuantestError",
    "QuantizerModel",
    "Record",
    "SineParams",
    "ThresholdCounts",
    "UnboundedCRLBError",
    "UnsupportedNoiseError",
    "ValidationError",
    "cell_probabilities",
    "crlb_amplitude",
    "crossing_probability",
    "dnl",
    "estimate",
    "estimate_noiseless",
    "fisher_information",
    "fit3",
    "fit4",
    "from_transitions",
    "generate_record",
    "inl",
    "invert_threshold",
    "make_resistor_ladder",
    "make_uniform",
    "quantize",
    "threshold_counts",
]
