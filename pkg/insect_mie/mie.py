"""
Motion-Informed Enhancement (MIE)
Grayscale + blur, the three-frame motion likelihood and the RGB channel remapping
that turn a time-lapse sequence into images an unmodified detector can consume:

    red   = |G_k - G_k-1| + |G_k+1 - G_k|   (saturated at 255)
    green = green of frame k                (unchanged)
    blue  = round(0.5 * blue + 0.5 * red)   of frame k

where G is the grayscale, Gaussian-blurred frame.
"""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage
from scipy.special import comb

from insect_mie.config import get_setting
from insect_mie.core import ColorFrame, FrameRecord, GrayFrame, MotionLikelihood
from insect_mie.errors import (
    ConfigInvalid,
    DimensionMismatch,
    EmptySequence,
    FrameTooSmall,
    UnsortedInput,
)
from insect_mie.utils.image_io import OUTPUT_FORMATS, output_name, read_color_frame, write_color_frame

logger = logging.getLogger(__name__)


class EdgePolicy(str, Enum):
    """How the first and last frame of a segment get their missing neighbor"""
    REPLICATE = 'replicate'
    SKIP = 'skip'


class KernelKind(str, Enum):
    BINOMIAL = 'binomial'
    GAUSSIAN = 'gaussian'


@dataclass(frozen=True)
class MieConfig:
    """Parameters of the enhancement transform and of the sequence runner"""

    blur_kernel_size: int = 5
    blur_sigma: float = 1.1
    kernel: KernelKind = KernelKind.BINOMIAL
    grayscale_weights: Tuple[float, float, float] = (0.299, 0.587, 0.114)
    edge_policy: EdgePolicy = EdgePolicy.REPLICATE
    nominal_interval: float = 30.0
    max_gap_factor: float = 3.0
    output_format: str = 'png'
    jpeg_quality: int = 95
    png_compress_level: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'kernel', KernelKind(self.kernel))
        object.__setattr__(self, 'edge_policy', EdgePolicy(self.edge_policy))
        object.__setattr__(self, 'grayscale_weights', tuple(float(w) for w in self.grayscale_weights))

        if self.blur_kernel_size < 3 or self.blur_kernel_size % 2 == 0:
            raise ConfigInvalid(f"blur kernel size must be odd and >= 3, got {self.blur_kernel_size}")
        if self.blur_sigma <= 0:
            raise ConfigInvalid(f"blur sigma must be positive, got {self.blur_sigma}")
        if len(self.grayscale_weights) != 3 or any(w < 0 for w in self.grayscale_weights):
            raise ConfigInvalid(f"grayscale weights must be three nonnegative values, got {self.grayscale_weights}")
        if abs(sum(self.grayscale_weights) - 1.0) > 1e-9:
            raise ConfigInvalid(f"grayscale weights must sum to 1, got {sum(self.grayscale_weights)}")
        if self.nominal_interval <= 0:
            raise ConfigInvalid(f"nominal interval must be positive, got {self.nominal_interval}")
        if self.max_gap_factor < 1:
            raise ConfigInvalid(f"gap factor must be >= 1, got {self.max_gap_factor}")
        if self.output_format not in OUTPUT_FORMATS:
            raise ConfigInvalid(f"output format must be one of {sorted(OUTPUT_FORMATS)}, got {self.output_format!r}")
        if not 1 <= self.jpeg_quality <= 100:
            raise ConfigInvalid(f"JPEG quality must be in [1, 100], got {self.jpeg_quality}")
        if not 0 <= self.png_compress_level <= 9:
            raise ConfigInvalid(f"PNG compress level must be in [0, 9], got {self.png_compress_level}")

    @classmethod
    def from_settings(cls, settings: Mapping[str, str]) -> 'MieConfig':
        """Create configuration from merged settings (env, config file, CLI)"""
        default = cls()
        weights = get_setting(
            settings, 'MIE_GRAYSCALE_WEIGHTS', default.grayscale_weights,
            lambda raw: tuple(float(part) for part in raw.split(',')),
        )
        return cls(
            blur_kernel_size=get_setting(settings, 'MIE_BLUR_KERNEL_SIZE', default.blur_kernel_size, int),
            blur_sigma=get_setting(settings, 'MIE_BLUR_SIGMA', default.blur_sigma, float),
            kernel=get_setting(settings, 'MIE_KERNEL', default.kernel, KernelKind),
            grayscale_weights=weights,
            edge_policy=get_setting(settings, 'MIE_EDGE_POLICY', default.edge_policy, EdgePolicy),
            nominal_interval=get_setting(settings, 'SEQUENCE_INTERVAL_SECONDS', default.nominal_interval, float),
            max_gap_factor=get_setting(settings, 'MIE_MAX_GAP_FACTOR', default.max_gap_factor, float),
            output_format=get_setting(settings, 'MIE_OUTPUT_FORMAT', default.output_format, str.lower),
            jpeg_quality=get_setting(settings, 'MIE_JPEG_QUALITY', default.jpeg_quality, int),
            png_compress_level=get_setting(settings, 'MIE_PNG_COMPRESS_LEVEL', default.png_compress_level, int),
        )

    def kernel_weights(self) -> Tuple[np.ndarray, Optional[int]]:
        """
        One-dimensional kernel and its integer normalizer.

        The binomial kernel is integer ([1, 4, 6, 4, 1] for size 5) and is applied
        separably with exact integer arithmetic, so the normalizer is returned.
        The Gaussian kernel is already normalized and the normalizer is None.
        """
        size = self.blur_kernel_size
        if self.kernel is KernelKind.BINOMIAL:
            weights = np.array([comb(size - 1, k, exact=True) for k in range(size)], dtype=np.int64)
            return weights, int(weights.sum())
        offsets = np.arange(size, dtype=np.float64) - size // 2
        weights = np.exp(-0.5 * (offsets / self.blur_sigma) ** 2)
        return weights / weights.sum(), None


@dataclass(frozen=True, eq=False)
class EnhancedFrame(ColorFrame):
    """ColorFrame whose red plane carries the motion likelihood"""

    @property
    def motion(self) -> np.ndarray:
        return self.red


def _round_half_up(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def grayscale(frame: ColorFrame, weights: Sequence[float]) -> np.ndarray:
    """Luminance plane quantized to 8 bits"""
    luminance = frame.rgb.astype(np.float64) @ np.asarray(weights, dtype=np.float64)
    return _round_half_up(luminance)


def grayscale_blur(frame: ColorFrame, cfg: MieConfig) -> GrayFrame:
    """Grayscale conversion followed by a separable blur with replicated borders"""
    size = cfg.blur_kernel_size
    if frame.width < size or frame.height < size:
        raise FrameTooSmall(f"{size}x{size} kernel does not fit a {frame.width}x{frame.height} frame")

    gray = grayscale(frame, cfg.grayscale_weights)
    weights, normalizer = cfg.kernel_weights()

    if normalizer is not None:
        acc = ndimage.correlate1d(gray.astype(np.int64), weights, axis=1, mode='nearest', output=np.int64)
        acc = ndimage.correlate1d(acc, weights, axis=0, mode='nearest', output=np.int64)
        total = normalizer * normalizer
        blurred = ((acc + total // 2) // total).astype(np.uint8)
    else:
        acc = ndimage.correlate1d(gray.astype(np.float64), weights, axis=1, mode='nearest')
        acc = ndimage.correlate1d(acc, weights, axis=0, mode='nearest')
        blurred = _round_half_up(acc)

    return GrayFrame(blurred)


def motion_likelihood(prev: GrayFrame, curr: GrayFrame, next: GrayFrame) -> MotionLikelihood:
    """Three-frame difference |curr - prev| + |next - curr|, saturating at 255"""
    if not (prev.samples.shape == curr.samples.shape == next.samples.shape):
        raise DimensionMismatch(
            f"frame sizes differ: {prev.samples.shape}, {curr.samples.shape}, {next.samples.shape}"
        )
    p = prev.samples.astype(np.int16)
    c = curr.samples.astype(np.int16)
    n = next.samples.astype(np.int16)
    diff = np.abs(c - p) + np.abs(n - c)
    return MotionLikelihood(np.minimum(diff, 255).astype(np.uint8))


def enhance_from_gray(prev: GrayFrame, curr: GrayFrame, next: GrayFrame, frame: ColorFrame) -> EnhancedFrame:
    """Channel remapping once the blurred grayscale neighbors are known"""
    motion = motion_likelihood(prev, curr, next)
    if motion.samples.shape != frame.rgb.shape[:2]:
        raise DimensionMismatch(f"motion plane {motion.samples.shape} does not match frame {frame.rgb.shape[:2]}")

    rgb = np.empty_like(frame.rgb)
    rgb[:, :, 0] = motion.samples
    rgb[:, :, 1] = frame.green
    # round(0.5 * b + 0.5 * r) with halves rounded up
    rgb[:, :, 2] = ((frame.blue.astype(np.uint16) + frame.red + 1) >> 1).astype(np.uint8)
    return EnhancedFrame(rgb)


def enhance(prev: ColorFrame, curr: ColorFrame, next: ColorFrame, cfg: MieConfig) -> EnhancedFrame:
    """Enhance frame `curr` using its two time neighbors"""
    if not (prev.same_size(curr) and next.same_size(curr)):
        raise DimensionMismatch(
            f"frame sizes differ: {prev.width}x{prev.height}, {curr.width}x{curr.height}, {next.width}x{next.height}"
        )
    return enhance_from_gray(
        grayscale_blur(prev, cfg), grayscale_blur(curr, cfg), grayscale_blur(next, cfg), curr
    )


# =============================================================================
# SEQUENCES
# =============================================================================

@dataclass(frozen=True)
class FrameFailure:
    """A frame that could not be enhanced; the batch carries on without it"""
    sequence_index: int
    path: Path
    reason: str


@dataclass
class SequenceReport:
    written: int = 0
    skipped_edges: int = 0
    segments: int = 0
    failures: List[FrameFailure] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        return {
            'frames_written': self.written,
            'edge_frames_skipped': self.skipped_edges,
            'segments': self.segments,
            'failures': [
                {'sequence_index': f.sequence_index, 'path': str(f.path), 'reason': f.reason}
                for f in sorted(self.failures, key=lambda f: f.sequence_index)
            ],
        }


class FrameSink(Protocol):
    """Receives enhanced frames in any order, keyed by their record"""

    def write(self, record: FrameRecord, frame: EnhancedFrame) -> None:
        ...


class DirectorySink:
    """Writes each enhanced frame next to its siblings as <stem>.png (or .jpg)"""

    def __init__(self, out_dir: Union[str, Path], cfg: MieConfig):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg

    def path_for(self, record: FrameRecord) -> Path:
        return self.out_dir / output_name(record.stem, self.cfg.output_format)

    def write(self, record: FrameRecord, frame: EnhancedFrame) -> None:
        write_color_frame(
            self.path_for(record), frame,
            fmt=self.cfg.output_format,
            quality=self.cfg.jpeg_quality,
            compress_level=self.cfg.png_compress_level,
        )


class MemorySink:
    """Keeps enhanced frames in memory, indexed by sequence_index"""

    def __init__(self):
        self.frames: Dict[int, EnhancedFrame] = {}
        self.records: Dict[int, FrameRecord] = {}
        self.lock = threading.Lock()

    def write(self, record: FrameRecord, frame: EnhancedFrame) -> None:
        with self.lock:
            self.frames[record.sequence_index] = frame
            self.records[record.sequence_index] = record

    def ordered(self) -> List[EnhancedFrame]:
        return [self.frames[index] for index in sorted(self.frames)]


def split_segments(frames: Sequence[FrameRecord], nominal_interval: float,
                   max_gap_factor: float) -> List[List[FrameRecord]]:
    """
    Split a sequence wherever two consecutive frames are further apart than
    max_gap_factor nominal intervals (the nightly recording pause, for example).
    """
    segments: List[List[FrameRecord]] = []
    limit = nominal_interval * max_gap_factor
    previous: Optional[FrameRecord] = None

    for record in frames:
        if previous is not None:
            if record.sequence_index <= previous.sequence_index:
                raise UnsortedInput(
                    f"sequence_index {record.sequence_index} follows {previous.sequence_index}"
                )
            gap = (record.timestamp - previous.timestamp).total_seconds()
            if gap < 0:
                raise UnsortedInput(f"{record.path} is older than {previous.path}")
            if gap > limit:
                logger.info(f"Time gap of {gap:.0f} s before {record.path.name}, starting a new segment")
                segments.append([])
        if not segments:
            segments.append([])
        segments[-1].append(record)
        previous = record

    return segments


@dataclass(frozen=True)
class _Decoded:
    color: ColorFrame
    gray: GrayFrame


Loader = Callable[[Path], ColorFrame]


def enhance_sequence(frames: Sequence[FrameRecord], cfg: MieConfig, sink: FrameSink,
                     workers: int = 1, loader: Optional[Loader] = None,
                     chunk_size: Optional[int] = None) -> SequenceReport:
    """
    Enhance every frame of an ordered sequence and stream the results to `sink`.

    Frames are decoded and blurred once, in chunks, and shared read-only by the
    windows that need them. Windows run on a bounded thread pool; the outputs
    do not depend on the worker count.

    Returns a SequenceReport. `report.written` is the count of enhanced frames
    delivered to the sink, the result of the operation proper; the report also
    carries skipped edges, segment count and per-frame failures. Decode and
    write errors become FrameFailures.
    """
    if not frames:
        raise EmptySequence("no frames to enhance")

    loader = loader or read_color_frame
    chunk = chunk_size or max(8, 4 * workers)
    report = SequenceReport()
    segments = split_segments(frames, cfg.nominal_interval, cfg.max_gap_factor)
    report.segments = len(segments)

    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix='mie') as pool:
        for segment in segments:
            _enhance_segment(segment, cfg, sink, pool, loader, chunk, report)

    logger.info(
        f"Enhanced {report.written}/{len(frames)} frames in {report.segments} segment(s), "
        f"{len(report.failures)} failure(s)"
    )
    return report


def _enhance_segment(segment: List[FrameRecord], cfg: MieConfig, sink: FrameSink,
                     pool: ThreadPoolExecutor, loader: Loader, chunk: int,
                     report: SequenceReport) -> None:
    n = len(segment)
    if cfg.edge_policy is EdgePolicy.SKIP:
        targets = list(range(1, n - 1))
        report.skipped_edges += min(n, 2)
    else:
        targets = list(range(n))

    def load(position: int) -> Union[_Decoded, str]:
        record = segment[position]
        try:
            color = loader(record.path)
            return _Decoded(color, grayscale_blur(color, cfg))
        except Exception as e:
            return f"decode failed: {e}"

    cache: Dict[int, Union[_Decoded, str]] = {}

    def neighbor(position: int, offset: int) -> Union[_Decoded, str]:
        other = min(max(position + offset, 0), n - 1)
        decoded = cache[other]
        if isinstance(decoded, str) and other != position:
            if cfg.edge_policy is EdgePolicy.SKIP:
                return f"neighbor {segment[other].path.name} unavailable"
            logger.warning(f"Neighbor {segment[other].path.name} unavailable, replicating {segment[position].path.name}")
            return cache[position]
        return decoded

    def enhance_window(position: int) -> None:
        own = cache[position]
        if isinstance(own, str):
            raise RuntimeError(own)
        prev, nxt = neighbor(position, -1), neighbor(position, 1)
        for side in (prev, nxt):
            if isinstance(side, str):
                raise RuntimeError(side)
        enhanced = enhance_from_gray(prev.gray, own.gray, nxt.gray, own.color)
        sink.write(segment[position], enhanced)

    for start in range(0, len(targets), chunk):
        block = targets[start:start + chunk]
        lo, hi = max(block[0] - 1, 0), min(block[-1] + 1, n - 1)
        for stale in [p for p in cache if p < lo]:
            del cache[stale]
        needed = [p for p in range(lo, hi + 1) if p not in cache]
        for position, decoded in zip(needed, pool.map(load, needed)):
            cache[position] = decoded

        futures = {pool.submit(enhance_window, position): position for position in block}
        for future in as_completed(futures):
            position = futures[future]
            record = segment[position]
            try:
                future.result()
                report.written += 1
                logger.debug(f"Enhanced {record.path.name}")
            except Exception as e:
                logger.warning(f"Frame {record.path.name} failed: {e}")
                report.failures.append(FrameFailure(record.sequence_index, record.path, str(e)))
