"""Generate, detect and neutralize image downscaling attacks."""

from .attack import EmbedPlan, EmbedReport, PlanError, generate_attack, perturbation_mask
from .detect import DetectionReport, Spectrum, detect, spectrum
from .image import CorruptImageError, Image, PixelCoord, UnsupportedFormatError, load_image, save_image
from .metrics import SimilarityReport, compare
from .resize import (
    ANTIALIASED,
    MULTISTEP,
    VULNERABLE,
    Mode,
    ResizePolicy,
    ScaleSpec,
    contribution_map,
    resize,
)

__version__ = "0.1.0"

__all__ = [
    "ANTIALIASED",
    "MULTISTEP",
    "VULNERABLE",
    "CorruptImageError",
    "DetectionReport",
    "EmbedPlan",
    "EmbedReport",
    "Image",
    "Mode",
    "PixelCoord",
    "PlanError",
    "ResizePolicy",
    "ScaleSpec",
    "SimilarityReport",
    "Spectrum",
    "UnsupportedFormatError",
    "compare",
    "contribution_map",
    "detect",
    "generate_attack",
    "load_image",
    "perturbation_mask",
    "resize",
    "save_image",
    "spectrum",
]
