"""Exception taxonomy shared across the toolkit.

Validation problems (bad specs, bad arguments) and runtime problems
(measurement failures) are kept distinct so the CLI can map them to
stable exit codes.
"""


class StreamlatError(Exception):
    """Base class for all toolkit errors."""


class SpecValidationError(StreamlatError):
    """An architecture or filterbank spec violates one of its invariants.

    The message names the failing invariant.
    """


class UnsupportedLayoutError(SpecValidationError):
    """A layer kind appears where the analysis does not support it."""


class InfeasibleBlockError(SpecValidationError):
    """Requested block size is smaller than, or not a multiple of, the
    model's compression ratio."""


class DesignRangeError(SpecValidationError):
    """Filterbank design parameters outside the supported range."""


class ShapeError(StreamlatError):
    """Tensor shape does not match what the operation expects."""


class ManifestError(StreamlatError):
    """Weight manifest does not match the architecture spec."""


class MeasurementFailureError(StreamlatError):
    """An empirical measurement could not produce a result."""


class ComparisonError(StreamlatError):
    """Two reports cannot be compared (mismatched grids or kinds)."""


class DegenerateWeightsError(MeasurementFailureError):
    """Perturbation produced no observable output difference."""


class InsufficientAudioError(StreamlatError):
    """Input audio is too short for the requested analysis."""


class UndefinedLoudnessError(StreamlatError):
    """All measurement blocks were gated out (silence)."""
