"""Online tracking: multi-scale detection followed by scheduled learning."""

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import cconv, margin
from .errors import FormatError
from .imaging import (SEARCH_AREA_FACTOR, BoundingBox, FeatureConfig, compute_channels,
                      extract_search_patch)


@dataclass(frozen=True)
class ScaleConfig:
    num_scales: int = 10
    scale_step: float = 1.02
    min_scale: float = 0.2
    max_scale: float = 5.0

    def __post_init__(self):
        if self.num_scales < 1:
            raise ValueError("num_scales must be >= 1")
        if not self.scale_step > 1:
            raise ValueError("scale_step must be > 1")

    @property
    def factors(self):
        exps = np.arange(self.num_scales) - (self.num_scales - 1) / 2.0
        return self.scale_step ** exps


@dataclass(frozen=True)
class TrackerConfig:
    """Every tunable parameter; names match the keys of the config file."""

    c: float = 100.0
    mu: float = 1e-4
    eta: float = 1e-3
    sigma_factor: float = 1.0 / 16.0
    scales: int = 10
    scale_step: float = 1.02
    update_interval: int = 5
    alt_iters: int = 3
    cg_iters: int = 2
    init_iters: int = 30
    sample_side: int = 248
    hog_cell: int = 4
    hog_orientations: int = 9
    memory_size: int = 30
    learning_rate: float = 0.025
    cg_tol: float = 1e-5
    newton_iters: int = 5
    grid_factor: int = 4
    window: bool = True
    hog_center: bool = True
    hog_norm_floor: float = 1.0
    remove_dc: bool = True
    kernel_a: float = cconv.DEFAULT_KERNEL_A
    min_scale: float = 0.2
    max_scale: float = 5.0
    seed: int = 0

    def __post_init__(self):
        # fail at construction rather than on first use
        self.features, self.train, self.scale
        if not self.mu > 0 or self.eta < 0:
            raise ValueError("need mu > 0 and eta >= 0")
        if not self.sigma_factor > 0:
            raise ValueError("sigma_factor must be positive")
        if not 0 < self.min_scale <= 1 <= self.max_scale:
            raise ValueError("scale bounds must bracket 1")

    @property
    def features(self):
        return FeatureConfig(sample_side=self.sample_side, hog_cell=self.hog_cell,
                             hog_orientations=self.hog_orientations, window=self.window,
                             center=self.hog_center, norm_floor=self.hog_norm_floor)

    @property
    def train(self):
        return margin.TrainConfig(C=self.c, cg_iters=self.cg_iters, alt_iters=self.alt_iters,
                                  init_iters=self.init_iters,
                                  update_interval=self.update_interval, cg_tol=self.cg_tol,
                                  memory_size=self.memory_size,
                                  learning_rate=self.learning_rate,
                                  grid_factor=self.grid_factor)

    @property
    def scale(self):
        return ScaleConfig(self.scales, self.scale_step, self.min_scale, self.max_scale)

    def to_text(self):
        return "".join(f"{f.name} = {_format_value(getattr(self, f.name))}\n"
                       for f in fields(self))

    def digest(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v)


def parse_config(text, source="<config>"):
    """Parse ``key = value`` lines (``#`` starts a comment) into a :class:`TrackerConfig`."""
    types = {f.name: f.type for f in fields(TrackerConfig)}
    defaults = TrackerConfig()
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise FormatError(f"{source}:{lineno}: unknown key '{key}'")
        kind = type(getattr(defaults, key))
        try:
            if kind is bool:
                if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(value)
                values[key] = value.lower() in ("true", "1", "yes")
            elif kind is int:
                values[key] = int(value)
            else:
                values[key] = float(value)
        except ValueError:
            raise FormatError(f"{source}:{lineno}: bad value for '{key}': {value!r}") from None
    try:
        return TrackerConfig(**values)
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from None


def load_config(path):
    if path is None:
        return TrackerConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


@dataclass(frozen=True)
class TrackerState:
    filter: np.ndarray
    memory: margin.SampleMemory
    bbox: BoundingBox
    base_size: tuple
    scale: float
    frame_index: int
    config: TrackerConfig
    model: cconv.InterpolationModel
    reg: margin.SpatialRegularizer
    label: cconv.GaussianLabel
    loss_hat: np.ndarray

    @property
    def center(self):
        return (self.model.period[0] / 2.0, self.model.period[1] / 2.0)

    @property
    def grid(self):
        return tuple(self.config.grid_factor * int(p) for p in self.model.period)


def _sample(frame, cx, cy, base_size, scale, cfg, model):
    bbox = BoundingBox(cx, cy, base_size[0], base_size[1])
    patch = extract_search_patch(frame, bbox, scale, cfg.features)
    z = cconv.interpolate(compute_channels(patch, cfg.features), model)
    if cfg.remove_dc:
        # zero-mean samples keep the response offset fixed, so scores compare across scales
        z.coeffs[:, model.K[0], model.K[1]] = 0.0
    return z, patch


def init(frame, bbox, config=None, trace=None):
    """Train the first filter on the target in ``frame``."""
    config = config or TrackerConfig()
    if not (bbox.w >= 4 and bbox.h >= 4):
        raise ValueError(f"target must be at least 4x4 pixels, got {bbox.w}x{bbox.h}")
    fcfg = config.features
    res = (fcfg.cells, fcfg.cells)
    model = cconv.InterpolationModel.build([res] * fcfg.num_channels, a=config.kernel_a)
    base_size = (float(bbox.w), float(bbox.h))

    # target size in cells: the crop side is SEARCH_AREA_FACTOR * sqrt(w h)
    cells_per_px = fcfg.cells / (SEARCH_AREA_FACTOR * np.sqrt(bbox.w * bbox.h))
    target_cells = (bbox.h * cells_per_px, bbox.w * cells_per_px)
    sigma = np.sqrt(target_cells[0] * target_cells[1]) * config.sigma_factor
    center = (model.period[0] / 2.0, model.period[1] / 2.0)
    label = cconv.gaussian_fourier(sigma, center, model.period, model.K)
    loss_hat = cconv.loss_fourier(label)
    reg = margin.regularizer_coeffs((target_cells[0] / 2.0, target_cells[1] / 2.0),
                                    config.mu, config.eta, model.period)

    z, _ = _sample(frame, bbox.cx, bbox.cy, base_size, 1.0, config, model)
    memory = margin.SampleMemory(capacity=config.memory_size,
                                 learning_rate=config.learning_rate)
    grid = tuple(config.grid_factor * int(p) for p in model.period)
    w0 = np.zeros_like(z.coeffs)
    w, memory, _ = margin.collaborative_update(w0, memory, reg, config.train, loss_hat,
                                               center, grid, new_sample=z.coeffs,
                                               first=True, trace=trace)
    return TrackerState(w, memory, bbox, base_size, 1.0, 1, config, model, reg, label,
                        loss_hat)


@dataclass(frozen=True)
class Detection:
    bbox: BoundingBox
    score: float
    scale_index: int
    scale: float
    position: tuple


def detect(state, frame):
    """Search every scale around the current state and keep the best response.

    Returns a :class:`Detection`; ``position`` is the continuous maximizer in
    cell units of the winning scale.
    """
    cfg = state.config
    factors = cfg.scale.factors
    G = state.grid
    best = None
    for s, factor in enumerate(factors):
        scale = state.scale * factor
        z, patch = _sample(frame, state.bbox.cx, state.bbox.cy, state.base_size, scale, cfg,
                           state.model)
        conf = cconv.evaluate_confidence(state.filter, z)
        pos, score = cconv.argmax_subgrid(conf, G, cfg.newton_iters)
        if best is None or score > best[0]:
            best = (score, s, scale, pos, patch.resample_scale)
    score, s, scale, pos, resample = best
    px = displacement_to_pixels(pos, state.model.period, cfg.sample_side, resample)
    bbox = BoundingBox(state.bbox.cx + px[1], state.bbox.cy + px[0],
                       state.base_size[0] * scale, state.base_size[1] * scale)
    return Detection(bbox, float(score), int(s), float(scale), pos)


def displacement_to_pixels(pos, period, sample_side, resample_scale):
    """Offset of ``pos`` from the domain center in frame pixels, ``(dy, dx)``.

    Offsets wrap into ``[-T/2, T/2)``; one cell is ``sample_side / T`` patch
    pixels and ``resample_scale`` frame pixels per patch pixel.
    """
    out = []
    for p, T in zip(pos, period):
        d = p % T - T / 2.0
        out.append(d * (sample_side / T) * resample_scale)
    return tuple(out)


def step(state, frame, trace=None):
    """Track one frame. Returns ``(new_state, bbox, score)``; ``state`` is untouched."""
    cfg = state.config
    det = detect(state, frame)
    scale = float(np.clip(det.scale, cfg.min_scale, cfg.max_scale))
    bbox = BoundingBox(det.bbox.cx, det.bbox.cy, state.base_size[0] * scale,
                       state.base_size[1] * scale)
    frame_index = state.frame_index + 1
    w, memory = state.filter, state.memory
    if frame_index % cfg.update_interval == 0:
        z, _ = _sample(frame, bbox.cx, bbox.cy, state.base_size, scale, cfg, state.model)
        w, memory, _ = margin.collaborative_update(w, memory, state.reg, cfg.train,
                                                   state.loss_hat, state.center, state.grid,
                                                   new_sample=z.coeffs, trace=trace)
    new_state = replace(state, filter=w, memory=memory, bbox=bbox, scale=scale,
                        frame_index=frame_index)
    return new_state, bbox, det.score
