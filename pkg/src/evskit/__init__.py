"""evskit: multi-agent production of executable video scripts.

The package turns a word problem into a validated script (solution steps,
optional illustration code, narration) and compiles that script into a
deterministic render manifest.
"""

from .evs import (
    EVS,
    EVS_VERSION,
    PREMISE,
    Alignment,
    ClipTrigger,
    EVSFormatError,
    EVSValidationError,
    Finding,
    IllustrationAsset,
    Narration,
    NarrationSegment,
    PedagogicalText,
    Problem,
    SolutionStep,
    SymbolicElement,
    TimeWindow,
    canonical_deserialize,
    canonical_serialize,
    validate_evs,
)

__version__ = "0.1.0"

__all__ = [
    "EVS",
    "EVS_VERSION",
    "PREMISE",
    "Alignment",
    "ClipTrigger",
    "EVSFormatError",
    "EVSValidationError",
    "Finding",
    "IllustrationAsset",
    "Narration",
    "NarrationSegment",
    "PedagogicalText",
    "Problem",
    "SolutionStep",
    "SymbolicElement",
    "TimeWindow",
    "canonical_deserialize",
    "canonical_serialize",
    "validate_evs",
    "__version__",
]
