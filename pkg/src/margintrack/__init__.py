"""Large-margin structured convolution tracker for single-channel imagery."""

from ._kernels import BACKEND
from .errors import FormatError, NumericalError
from .imaging import BoundingBox, Frame
from .tracker import TrackerConfig, detect, init, step

__version__ = "0.1.0"

__all__ = ["BACKEND", "BoundingBox", "FormatError", "Frame", "NumericalError",
           "TrackerConfig", "detect", "init", "step", "__version__"]
