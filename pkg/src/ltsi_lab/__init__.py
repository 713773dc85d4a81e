"""Reciprocity, passivity and self-dual realizations of frequency-indexed LTI families."""

from .analysis import (
    LtsiRealization,
    family_reciprocity,
    generator_diagnostic,
    impedance_passivity,
    minimal_frequency_set,
    s_field,
    self_duality_check,
    weak_impedance_passivity,
)
from .errors import LtsiError
from .lti_core import Lossless, LtiRealization, Relaxation, Supplied
from .models import MODEL_NAMES, model
from .realization import canonical_transform, ph_parts
from .simulation import SpatialGrid, energy_audit, kernel, simulate
from .spectra import ClosedFormSymbol, FrequencyGrid, SampledSymbol, sup_norm

__all__ = [
    "ClosedFormSymbol", "FrequencyGrid", "Lossless", "LtiRealization", "LtsiError", "LtsiRealization",
    "MODEL_NAMES", "Relaxation", "SampledSymbol", "SpatialGrid", "Supplied", "canonical_transform",
    "energy_audit", "family_reciprocity", "generator_diagnostic", "impedance_passivity", "kernel",
    "minimal_frequency_set", "model", "ph_parts", "s_field", "self_duality_check", "simulate",
    "sup_norm", "weak_impedance_passivity",
]
__version__ = "0.1.0"
