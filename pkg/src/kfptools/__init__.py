"""kfptools: numerics for degenerate Kolmogorov-Fokker-Planck operators."""

from .hypogroup import (AnisotropicBall, GroupPoint, OperatorStructure,
                        compose, dilate, exp_drift, hom_norm, invert,
                        kolmogorov_structure, point, structure_from_json,
                        validate_structure)
from .fields import GridField, field_from_function, zero_field
from .report import ProbeReport, make_report

__all__ = [
    "AnisotropicBall", "GroupPoint", "OperatorStructure", "compose", "dilate",
    "exp_drift", "hom_norm", "invert", "kolmogorov_structure", "point",
    "structure_from_json", "validate_structure", "GridField",
    "field_from_function", "zero_field", "ProbeReport", "make_report",
]

__version__ = "0.1.0"
