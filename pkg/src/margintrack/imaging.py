"""Frames, search patches and handcrafted feature channels.

Coordinates follow the image convention: pixel ``(row, col)`` covers the unit
square ``[col, col + 1) x [row, row + 1)``, so its center is at
``(x, y) = (col + 0.5, row + 0.5)``.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ._kernels import bilinear_sample, orientation_histogram
from .errors import FormatError

SEARCH_AREA_FACTOR = 5.0  # linear factor; the crop covers 25x the target area
LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class Frame:
    """Single-channel image with intensities in [0, 1]."""

    intensity: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.intensity, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"frame must be a non-empty 2-D array, got shape {data.shape}")
        object.__setattr__(self, "intensity", data)

    @property
    def height(self):
        return self.intensity.shape[0]

    @property
    def width(self):
        return self.intensity.shape[1]


@dataclass(frozen=True)
class BoundingBox:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"bounding box needs positive size, got w={self.w}, h={self.h}")

    @classmethod
    def from_corner(cls, x, y, w, h):
        return cls(x + w / 2.0, y + h / 2.0, w, h)

    @property
    def corner(self):
        """Top-left ``(x, y, w, h)``."""
        return (self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.w, self.h)

    @property
    def area(self):
        return self.w * self.h


@dataclass(frozen=True)
class FeatureConfig:
    sample_side: int = 248
    hog_cell: int = 4
    hog_orientations: int = 9
    include_grayscale: bool = True
    window: bool = True
    clip: float = 0.2
    center: bool = True
    norm_floor: float = 0.0

    def __post_init__(self):
        if not 200 <= self.sample_side <= 300:
            raise ValueError(f"sample_side must lie in [200, 300], got {self.sample_side}")
        if self.hog_cell < 1:
            raise ValueError("hog_cell must be >= 1")
        if self.hog_orientations < 2:
            raise ValueError("hog_orientations must be >= 2")

    @property
    def cells(self):
        return self.sample_side // self.hog_cell

    @property
    def num_channels(self):
        return self.hog_orientations + int(self.include_grayscale)


@dataclass(frozen=True)
class Patch:
    """A square search patch resampled to ``sample_side`` pixels.

    ``resample_scale`` is the number of source pixels per patch pixel.
    """

    pixels: np.ndarray
    region: BoundingBox
    resample_scale: float


@dataclass(frozen=True)
class FeatureMap:
    """Feature layers covering the same patch; ``cell_sizes`` in patch pixels."""

    layers: tuple
    cell_sizes: tuple

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ValueError("a feature map needs at least one layer")
        if len(self.cell_sizes) != len(self.layers):
            raise ValueError("one cell size per layer is required")

    @property
    def resolutions(self):
        return tuple(layer.shape for layer in self.layers)

    def __len__(self):
        return len(self.layers)


def load_frame(path):
    """Read an 8-bit PGM (P5) or PNG image as a :class:`Frame`.

    RGB images are reduced to luminance. Raises ``OSError`` when the file
    cannot be read and :class:`FormatError` for any other format.
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            fmt = img.format
            if fmt == "PPM" and img.mode not in ("L", "RGB"):
                raise FormatError(f"{path}: unsupported PNM mode {img.mode}")
            if fmt not in ("PPM", "PNG"):
                raise FormatError(f"{path}: unsupported image format {fmt}")
            if img.mode in ("I", "I;16", "F"):
                raise FormatError(f"{path}: only 8-bit images are supported (mode {img.mode})")
            if img.mode == "P":
                img = img.convert("RGBA")
            if img.mode == "LA":
                img = img.convert("L")
            data = np.asarray(img, dtype=np.float64)
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: not a PGM or PNG image") from exc
    if data.ndim == 3:
        data = data[..., 0] * LUMA[0] + data[..., 1] * LUMA[1] + data[..., 2] * LUMA[2]
    return Frame(data / 255.0)


def save_pgm(path, frame):
    """Write a frame as an 8-bit binary PGM, rounding to the nearest level."""
    levels = np.clip(np.rint(np.asarray(frame.intensity) * 255.0), 0, 255).astype(np.uint8)
    h, w = levels.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(levels.tobytes())


def search_side(bbox, scale):
    """Side of the square source region in frame pixels."""
    return SEARCH_AREA_FACTOR * np.sqrt(bbox.w * bbox.h) * scale


def extract_search_patch(frame, bbox, scale, cfg):
    """Crop the square search region around ``bbox`` and resample it.

    The region has side ``5 * sqrt(w * h) * scale`` and is sampled bilinearly
    onto ``cfg.sample_side`` pixels; out-of-frame samples replicate the edge.
    """
    if not (bbox.w > 0 and bbox.h > 0):
        raise ValueError("bounding box must have positive size")
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    side = search_side(bbox, scale)
    n = cfg.sample_side
    step = side / n
    offsets = (np.arange(n) + 0.5) * step - side / 2.0
    # frame coordinate -> array index: subtract the half-pixel center offset
    cols = bbox.cx + offsets - 0.5
    rows = bbox.cy + offsets - 0.5
    pixels = bilinear_sample(frame.intensity, rows, cols)
    region = BoundingBox(bbox.cx, bbox.cy, side, side)
    return Patch(pixels, region, step)


def raised_cosine(n):
    """Separable taper that is strictly positive at the outermost cells."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * (np.arange(n) + 0.5) / n)


def image_gradients(img):
    """Central differences with edge replication (one-pixel half-step at borders)."""
    padded = np.pad(img, 1, mode="edge")
    gx = padded[1:-1, 2:] - padded[1:-1, :-2]
    gy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    return gx, gy


def cell_mean(img, cell):
    h, w = img.shape
    return img.reshape(h // cell, cell, w // cell, cell).mean(axis=(1, 3))


def compute_channels(patch, cfg):
    """Grayscale and gradient-orientation channels of a patch at cell resolution.

    Layer order is ``[grayscale, hog_0, ..., hog_{B-1}]`` (grayscale only when
    ``cfg.include_grayscale``). Orientation histograms are unsigned, hard
    binned, L2-normalized per cell and clipped at ``cfg.clip``.
    """
    img = np.asarray(patch.pixels, dtype=np.float64)
    cell = cfg.hog_cell
    if img.shape[0] % cell or img.shape[1] % cell:
        raise ValueError(f"patch side {img.shape} is not divisible by cell size {cell}")

    gx, gy = image_gradients(img)
    hist = orientation_histogram(gx, gy, cell, cfg.hog_orientations)
    norm = np.sqrt(np.sum(hist * hist, axis=0) + cfg.norm_floor ** 2 + 1e-12)
    hist = np.minimum(hist / norm, cfg.clip)
    if cfg.center:
        hist = hist - hist.mean(axis=(1, 2), keepdims=True)

    layers = []
    if cfg.include_grayscale:
        gray = cell_mean(img, cell)
        # exact zeros on flat input; the mean itself carries rounding error
        layers.append(gray - gray.mean() if np.ptp(gray) > 0 else np.zeros_like(gray))
    layers.extend(hist)

    if cfg.window:
        taper = np.outer(raised_cosine(hist.shape[1]), raised_cosine(hist.shape[2]))
        layers = [layer * taper for layer in layers]
    return FeatureMap(tuple(np.ascontiguousarray(layer) for layer in layers),
                      (cell,) * len(layers))
