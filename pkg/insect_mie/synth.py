"""
Synthetic time-lapse generator for insect-mie
Renders moving insect-like ellipses over flat, noise or photo backgrounds and
returns the frames together with their ground-truth annotations.

All randomness comes from numpy's PCG64 bit generator seeded from the config,
so identical configs give bit-identical frames on every platform.
"""

import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from dateutil import tz
from scipy import ndimage

from insect_mie.config import Config, get_setting
from insect_mie.core import Annotation, BoundingBox, ColorFrame, FrameRecord, INSECT_CLASS_ID
from insect_mie.errors import ConfigInvalid, InvalidBox
from insect_mie.ingest import CameraView, SequenceManifest, parse_timestamp, write_annotations, write_manifest_csv
from insect_mie.utils.image_io import read_color_frame, write_color_frame

logger = logging.getLogger(__name__)

Color = Tuple[int, int, int]
Point = Tuple[float, float]

# Anti-aliasing: samples per pixel along each axis
SUPERSAMPLING = 4

DEFAULT_START = datetime(2023, 6, 1, 6, 0, 0, tzinfo=tz.UTC)

# Random stream for distractor placement, apart from the insects' streams
DISTRACTOR_STREAM = 1000


def _rng(*seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(list(seed)))


def _check_color(color: Sequence[int]) -> Color:
    color = tuple(int(c) for c in color)
    if len(color) != 3 or not all(0 <= c <= 255 for c in color):
        raise ConfigInvalid(f"color must be three values in [0, 255], got {color}")
    return color


# =============================================================================
# BACKGROUNDS
# =============================================================================

@dataclass(frozen=True)
class FlatBackground:
    color: Color = (96, 112, 80)

    def __post_init__(self):
        object.__setattr__(self, 'color', _check_color(self.color))

    def render(self, width: int, height: int) -> np.ndarray:
        return np.broadcast_to(np.array(self.color, dtype=np.float64), (height, width, 3)).copy()


@dataclass(frozen=True)
class NoiseBackground:
    """Static smoothed noise texture of +/- amplitude around a base color"""

    seed: int = 0
    amplitude: float = 6.0
    color: Color = (96, 112, 80)
    smoothness: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, 'color', _check_color(self.color))
        if self.amplitude < 0:
            raise ConfigInvalid(f"noise amplitude must be nonnegative, got {self.amplitude}")
        if self.smoothness <= 0:
            raise ConfigInvalid(f"noise smoothness must be positive, got {self.smoothness}")

    def render(self, width: int, height: int) -> np.ndarray:
        field_ = ndimage.gaussian_filter(_rng(self.seed).standard_normal((height, width)), self.smoothness)
        peak = np.abs(field_).max()
        if peak > 0:
            field_ = field_ * (self.amplitude / peak)
        return np.array(self.color, dtype=np.float64)[None, None, :] + field_[:, :, None]


@dataclass(frozen=True)
class TexturedBackground:
    """A photo, resampled to the frame size"""

    path: Path

    def __post_init__(self):
        object.__setattr__(self, 'path', Path(self.path))

    def render(self, width: int, height: int) -> np.ndarray:
        if not self.path.is_file():
            raise ConfigInvalid(f"background image not found: {self.path}")
        return read_color_frame(self.path, size=(width, height)).rgb.astype(np.float64)


Background = Union[FlatBackground, NoiseBackground, TexturedBackground]


# =============================================================================
# INSECTS
# =============================================================================

@dataclass(frozen=True)
class RandomWalk:
    """
    Correlated random walk: each frame the heading turns by at most max_turn
    degrees and the insect moves `step` pixels. Steps that would leave the
    frame (minus the insect's extent) bounce off the border.
    """

    step: float
    seed: Optional[int] = None
    max_turn: float = 30.0
    start: Optional[Point] = None


@dataclass(frozen=True)
class InsectSpec:
    """
    radius: horizontal semi-axis in pixels; aspect: vertical / horizontal semi-axis.
    waypoints are spread evenly over the visible frames and linearly interpolated.
    visible: [first, stop) frame range, None for the whole sequence.
    """

    radius: float
    color: Color = (128, 142, 112)
    aspect: float = 1.0
    waypoints: Tuple[Point, ...] = ()
    walk: Optional[RandomWalk] = None
    visible: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        object.__setattr__(self, 'color', _check_color(self.color))
        object.__setattr__(self, 'waypoints', tuple((float(x), float(y)) for x, y in self.waypoints))
        if self.radius < 2 or self.radius * self.aspect < 2:
            raise ConfigInvalid(f"insect semi-axes must be >= 2 px, got {self.radius} x {self.radius * self.aspect}")
        if bool(self.waypoints) == (self.walk is not None):
            raise ConfigInvalid("an insect needs either waypoints or a random walk")
        if self.walk is not None and self.walk.step < 0:
            raise ConfigInvalid(f"random walk step must be nonnegative, got {self.walk.step}")

    @property
    def semi_axes(self) -> Tuple[float, float]:
        return self.radius, self.radius * self.aspect


@dataclass(frozen=True)
class SynthConfig:
    """
    distractors: static insect-like shapes painted into the background (flower
    heads, leaf spots). They sway with the background jitter and are never
    annotated.
    """

    width: int = 320
    height: int = 240
    frame_count: int = 200
    interval: float = 30.0
    background: Background = field(default_factory=FlatBackground)
    background_jitter: float = 0.0
    insects: Tuple[InsectSpec, ...] = ()
    distractors: Tuple[InsectSpec, ...] = ()
    seed: int = 0
    sensor_noise: float = 0.0
    site_id: str = 'SYN-0'
    start: datetime = DEFAULT_START

    def __post_init__(self):
        object.__setattr__(self, 'insects', tuple(self.insects))
        object.__setattr__(self, 'distractors', tuple(self.distractors))
        if self.width < 3 or self.height < 3:
            raise ConfigInvalid(f"frame must be at least 3x3, got {self.width}x{self.height}")
        if self.frame_count < 1:
            raise ConfigInvalid(f"frame_count must be positive, got {self.frame_count}")
        if self.interval <= 0:
            raise ConfigInvalid(f"interval must be positive, got {self.interval}")
        if self.background_jitter < 0 or self.sensor_noise < 0:
            raise ConfigInvalid("background_jitter and sensor_noise must be nonnegative")
        for index, insect in enumerate(self.insects):
            for x, y in insect.waypoints:
                if not (0 <= x <= self.width and 0 <= y <= self.height):
                    raise ConfigInvalid(f"insect {index}: waypoint ({x}, {y}) outside the frame")
            if insect.walk is not None and insect.walk.start is not None:
                x, y = insect.walk.start
                if not (0 <= x <= self.width and 0 <= y <= self.height):
                    raise ConfigInvalid(f"insect {index}: walk start ({x}, {y}) outside the frame")
            if insect.visible is not None:
                first, stop = insect.visible
                if not 0 <= first < stop <= self.frame_count:
                    raise ConfigInvalid(f"insect {index}: visible range {insect.visible} outside [0, {self.frame_count}]")
        for index, distractor in enumerate(self.distractors):
            if distractor.walk is not None or len(distractor.waypoints) != 1:
                raise ConfigInvalid(f"distractor {index}: needs exactly one waypoint")
            x, y = distractor.waypoints[0]
            if not (0 <= x <= self.width and 0 <= y <= self.height):
                raise ConfigInvalid(f"distractor {index}: position ({x}, {y}) outside the frame")

    @classmethod
    def from_settings(cls, settings: Mapping[str, str]) -> 'SynthConfig':
        """
        Build a config from SYNTH_* keys. Insects are SYNTH_INSECTS random
        walkers whose placement and visibility derive from SYNTH_SEED.
        """
        default = cls()
        width = get_setting(settings, 'SYNTH_WIDTH', default.width, int)
        height = get_setting(settings, 'SYNTH_HEIGHT', default.height, int)
        frame_count = get_setting(settings, 'SYNTH_FRAMES', default.frame_count, int)
        seed = get_setting(settings, 'SYNTH_SEED', default.seed, int)
        color = get_setting(settings, 'SYNTH_BACKGROUND_COLOR', FlatBackground().color, _parse_color)

        kind = get_setting(settings, 'SYNTH_BACKGROUND', 'flat', str.lower)
        if kind == 'flat':
            background: Background = FlatBackground(color)
        elif kind == 'noise':
            background = NoiseBackground(
                seed=get_setting(settings, 'SYNTH_NOISE_SEED', seed, int),
                amplitude=get_setting(settings, 'SYNTH_NOISE_AMPLITUDE', NoiseBackground.amplitude, float),
                color=color,
                smoothness=get_setting(settings, 'SYNTH_NOISE_SMOOTHNESS', NoiseBackground.smoothness, float),
            )
        elif kind == 'textured':
            if 'SYNTH_TEXTURE_PATH' not in settings:
                raise ConfigInvalid("SYNTH_BACKGROUND=textured needs SYNTH_TEXTURE_PATH")
            background = TexturedBackground(Path(settings['SYNTH_TEXTURE_PATH']))
        else:
            raise ConfigInvalid(f"unknown SYNTH_BACKGROUND {kind!r}")

        radius = get_setting(settings, 'SYNTH_INSECT_RADIUS', 10.0, float)
        aspect = get_setting(settings, 'SYNTH_INSECT_ASPECT', 0.7, float)
        insect_color = get_setting(settings, 'SYNTH_INSECT_COLOR', InsectSpec.color, _parse_color)
        insects = random_insects(
            count=get_setting(settings, 'SYNTH_INSECTS', 0, int),
            seed=seed,
            width=width,
            height=height,
            frame_count=frame_count,
            radius=radius,
            aspect=aspect,
            color=insect_color,
            step=get_setting(settings, 'SYNTH_INSECT_STEP', 28.0, float),
            max_turn=get_setting(settings, 'SYNTH_INSECT_MAX_TURN', 30.0, float),
            visible_frames=(
                get_setting(settings, 'SYNTH_VISIBLE_MIN', 20, int),
                get_setting(settings, 'SYNTH_VISIBLE_MAX', 80, int),
            ),
        )
        return cls(
            width=width,
            height=height,
            frame_count=frame_count,
            interval=get_setting(settings, 'SYNTH_INTERVAL_SECONDS', default.interval, float),
            background=background,
            background_jitter=get_setting(settings, 'SYNTH_JITTER', default.background_jitter, float),
            insects=insects,
            distractors=random_distractors(
                count=get_setting(settings, 'SYNTH_DISTRACTORS', 0, int),
                seed=seed,
                width=width,
                height=height,
                radius=radius,
                aspect=aspect,
                color=insect_color,
            ),
            seed=seed,
            sensor_noise=get_setting(settings, 'SYNTH_SENSOR_NOISE', default.sensor_noise, float),
            site_id=get_setting(settings, 'SYNTH_SITE', default.site_id, str),
            start=get_setting(settings, 'SYNTH_START', default.start, parse_timestamp),
        )


def _parse_color(raw: str) -> Color:
    return _check_color(int(part) for part in raw.split(','))


def load_synth_config(path: Union[str, Path], overrides: Optional[Mapping[str, object]] = None) -> SynthConfig:
    """SynthConfig from a key-value file (environment < file < overrides)"""
    return SynthConfig.from_settings(Config.settings(path, overrides))


def random_insects(count: int, seed: int, width: int, height: int, frame_count: int,
                   radius: float = 10.0, aspect: float = 0.7, color: Color = (128, 142, 112),
                   step: float = 28.0, max_turn: float = 30.0,
                   visible_frames: Tuple[int, int] = (20, 80)) -> Tuple[InsectSpec, ...]:
    """Random-walking insects with random start points and visible ranges"""
    if count < 0:
        raise ConfigInvalid(f"insect count must be nonnegative, got {count}")
    shortest, longest = visible_frames
    if not 1 <= shortest <= longest:
        raise ConfigInvalid(f"visible frame range must satisfy 1 <= min <= max, got {visible_frames}")

    rng = _rng(seed, 0)
    margin_x, margin_y = radius + 1, radius * aspect + 1
    insects = []
    for index in range(count):
        length = int(rng.integers(shortest, min(longest, frame_count) + 1)) if shortest <= frame_count else frame_count
        first = int(rng.integers(0, frame_count - length + 1))
        start = (float(rng.uniform(margin_x, width - margin_x)), float(rng.uniform(margin_y, height - margin_y)))
        insects.append(InsectSpec(
            radius=radius,
            color=color,
            aspect=aspect,
            walk=RandomWalk(step=step, seed=int(rng.integers(0, 2**31)), max_turn=max_turn, start=start),
            visible=(first, first + length),
        ))
    return tuple(insects)


def random_distractors(count: int, seed: int, width: int, height: int, radius: float = 10.0,
                       aspect: float = 0.7, color: Color = (128, 142, 112)) -> Tuple[InsectSpec, ...]:
    """Static insect-colored shapes at random positions, fully inside the frame"""
    if count < 0:
        raise ConfigInvalid(f"distractor count must be nonnegative, got {count}")
    rng = _rng(seed, DISTRACTOR_STREAM)
    margin_x, margin_y = radius + 1, radius * aspect + 1
    return tuple(
        InsectSpec(
            radius=radius,
            color=color,
            aspect=aspect,
            waypoints=((float(rng.uniform(margin_x, width - margin_x)),
                        float(rng.uniform(margin_y, height - margin_y))),),
        )
        for _ in range(count)
    )


def easy_fixture(seed: int = 0, site_id: Optional[str] = None, frame_count: int = 200) -> SynthConfig:
    """
    Benchmark sequence: four random-walking insects that move further than
    their own length every frame, over a swaying noise background dotted with
    eight static shapes of the insects' color.
    """
    width, height = 320, 240
    return SynthConfig(
        width=width,
        height=height,
        frame_count=frame_count,
        interval=30.0,
        background=NoiseBackground(seed=seed, amplitude=6.0, color=(96, 112, 80), smoothness=4.0),
        background_jitter=0.5,
        insects=random_insects(4, seed, width, height, frame_count),
        distractors=random_distractors(8, seed, width, height),
        seed=seed,
        site_id=site_id or f"SYN-{seed}",
    )


# =============================================================================
# RENDERING
# =============================================================================

def _walk_positions(walk: RandomWalk, steps: int, width: int, height: int,
                    semi_axes: Tuple[float, float], rng: np.random.Generator) -> List[Point]:
    rx, ry = semi_axes
    lo_x, hi_x = min(rx, width / 2.0), max(width - rx, width / 2.0)
    lo_y, hi_y = min(ry, height / 2.0), max(height - ry, height / 2.0)

    if walk.start is not None:
        x, y = walk.start
    else:
        x, y = float(rng.uniform(lo_x, hi_x)), float(rng.uniform(lo_y, hi_y))
    x, y = min(max(x, lo_x), hi_x), min(max(y, lo_y), hi_y)
    heading = float(rng.uniform(0.0, 2.0 * math.pi))
    max_turn = math.radians(walk.max_turn)

    positions = [(x, y)]
    for _ in range(steps - 1):
        heading += float(rng.uniform(-max_turn, max_turn))
        dx, dy = walk.step * math.cos(heading), walk.step * math.sin(heading)
        if not lo_x <= x + dx <= hi_x:
            dx = -dx
        if not lo_y <= y + dy <= hi_y:
            dy = -dy
        heading = math.atan2(dy, dx)
        x = min(max(x + dx, lo_x), hi_x)
        y = min(max(y + dy, lo_y), hi_y)
        positions.append((x, y))
    return positions


def _waypoint_positions(waypoints: Sequence[Point], steps: int) -> List[Point]:
    if len(waypoints) == 1 or steps == 1:
        return [waypoints[0]] * steps
    knots = np.linspace(0.0, steps - 1, len(waypoints))
    frames = np.arange(steps, dtype=np.float64)
    xs = np.interp(frames, knots, [p[0] for p in waypoints])
    ys = np.interp(frames, knots, [p[1] for p in waypoints])
    return [(float(x), float(y)) for x, y in zip(xs, ys)]


def insect_track(insect: InsectSpec, index: int, cfg: SynthConfig) -> List[Optional[Point]]:
    """Center of the insect in every frame, None where it is not visible"""
    first, stop = insect.visible or (0, cfg.frame_count)
    steps = stop - first
    if insect.walk is not None:
        walk_seed = insect.walk.seed if insect.walk.seed is not None else cfg.seed
        positions = _walk_positions(insect.walk, steps, cfg.width, cfg.height, insect.semi_axes,
                                    _rng(walk_seed, index + 1))
    else:
        positions = _waypoint_positions(insect.waypoints, steps)
    return [None] * first + positions + [None] * (cfg.frame_count - stop)


def ellipse_coverage(center: Point, semi_axes: Tuple[float, float], width: int,
                     height: int) -> Tuple[Tuple[slice, slice], np.ndarray]:
    """Fraction of each pixel covered by the ellipse, for the pixels it touches"""
    (cx, cy), (rx, ry) = center, semi_axes
    x0, x1 = max(int(math.floor(cx - rx)), 0), min(int(math.ceil(cx + rx)), width)
    y0, y1 = max(int(math.floor(cy - ry)), 0), min(int(math.ceil(cy + ry)), height)
    if x0 >= x1 or y0 >= y1:
        return (slice(0, 0), slice(0, 0)), np.zeros((0, 0))

    offsets = (np.arange(SUPERSAMPLING) + 0.5) / SUPERSAMPLING
    xs = (np.arange(x0, x1)[:, None] + offsets[None, :]).ravel()
    ys = (np.arange(y0, y1)[:, None] + offsets[None, :]).ravel()
    inside = ((xs[None, :] - cx) / rx) ** 2 + ((ys[:, None] - cy) / ry) ** 2 <= 1.0
    coverage = inside.reshape(y1 - y0, SUPERSAMPLING, x1 - x0, SUPERSAMPLING).mean(axis=(1, 3))
    return (slice(y0, y1), slice(x0, x1)), coverage


def frame_records(cfg: SynthConfig, image_dir: Union[str, Path] = '.') -> List[FrameRecord]:
    """Records named <site>_<index>.png, one interval apart"""
    image_dir = Path(image_dir)
    return [
        FrameRecord(cfg.site_id, cfg.start + timedelta(seconds=k * cfg.interval), k,
                    image_dir / f"{cfg.site_id}_{k:05d}.png")
        for k in range(cfg.frame_count)
    ]


def _paint(canvas: np.ndarray, shape: InsectSpec, center: Point, cfg: SynthConfig) -> bool:
    """Alpha-blend one ellipse into a float canvas; False when nothing of it lands in the frame"""
    region, alpha = ellipse_coverage(center, shape.semi_axes, cfg.width, cfg.height)
    if alpha.size == 0 or not alpha.any():
        return False
    color = np.array(shape.color, dtype=np.float64)
    canvas[region] = canvas[region] * (1.0 - alpha[:, :, None]) + color * alpha[:, :, None]
    return True


def generate(cfg: SynthConfig, records: Optional[Sequence[FrameRecord]] = None
             ) -> Tuple[List[ColorFrame], List[List[Annotation]]]:
    """
    Render every frame and its ground truth.

    Truth boxes are the ellipses' tight boxes clipped to the frame; an insect
    outside its visible range is neither drawn nor annotated. Distractors are
    painted into the background once, before the per-frame jitter.
    """
    records = list(records) if records is not None else frame_records(cfg)
    if len(records) != cfg.frame_count:
        raise ConfigInvalid(f"expected {cfg.frame_count} frame records, got {len(records)}")

    rng = _rng(cfg.seed)
    texture = cfg.background.render(cfg.width, cfg.height)
    for distractor in cfg.distractors:
        _paint(texture, distractor, distractor.waypoints[0], cfg)
    tracks = [insect_track(insect, index, cfg) for index, insect in enumerate(cfg.insects)]

    frames: List[ColorFrame] = []
    truth: List[List[Annotation]] = []
    for k, record in enumerate(records):
        canvas = texture
        if cfg.background_jitter > 0:
            dx, dy = rng.uniform(-cfg.background_jitter, cfg.background_jitter, size=2)
            canvas = ndimage.shift(texture, (dy, dx, 0.0), order=1, mode='nearest')
        canvas = canvas.copy()

        annotations = []
        for insect, track in zip(cfg.insects, tracks):
            center = track[k]
            if center is None:
                continue
            if not _paint(canvas, insect, center, cfg):
                continue

            rx, ry = insect.semi_axes
            try:
                box = BoundingBox(center[0] - rx, center[1] - ry, center[0] + rx, center[1] + ry)
                annotations.append(Annotation(record, box.clip(cfg.width, cfg.height), INSECT_CLASS_ID))
            except InvalidBox:
                continue

        if cfg.sensor_noise > 0:
            canvas = canvas + rng.normal(0.0, cfg.sensor_noise, size=canvas.shape)

        frames.append(ColorFrame(np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8)))
        truth.append(annotations)

    logger.debug(f"Generated {cfg.frame_count} frames for {cfg.site_id} with {sum(map(len, truth))} insect(s)")
    return frames, truth


def write_dataset(cfg: SynthConfig, out_dir: Union[str, Path]) -> SequenceManifest:
    """
    Write images/<name>.png, labels/<name>.txt (one file per frame, empty for
    background frames) and manifest.csv.
    """
    out_dir = Path(out_dir)
    image_dir, label_dir = out_dir / 'images', out_dir / 'labels'
    image_dir.mkdir(parents=True, exist_ok=True)
    label_dir.mkdir(parents=True, exist_ok=True)

    records = frame_records(cfg, image_dir)
    frames, truth = generate(cfg, records)
    for record, frame, annotations in zip(records, frames, truth):
        write_color_frame(record.path, frame, fmt='png')
        write_annotations(label_dir / f"{record.stem}.txt", annotations, cfg.width, cfg.height)

    manifest = SequenceManifest(cfg.site_id, CameraView.TOP, 'synthetic', cfg.interval, records)
    write_manifest_csv(out_dir / 'manifest.csv', [manifest])
    logger.info(f"Wrote synthetic dataset {out_dir} ({cfg.frame_count} frames, {sum(map(len, truth))} insects)")
    return manifest
