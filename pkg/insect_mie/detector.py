"""
Baseline insect detector
Threshold -> morphological opening -> 8-connected components -> padded boxes,
run on one plane of a frame (the MIE red channel by default).

Dependencies: numpy, scipy.ndimage, scikit-image (no ML frameworks)
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Mapping, NamedTuple, Optional, Union

import numpy as np
from scipy import ndimage
from skimage.filters import threshold_otsu
from skimage.morphology import disk

from insect_mie.config import get_setting
from insect_mie.core import BoundingBox, ColorFrame, Detection, FrameRecord, INSECT_CLASS_ID
from insect_mie.errors import ConfigInvalid
from insect_mie.mie import MieConfig, grayscale

logger = logging.getLogger(__name__)

CHANNELS = ('red', 'green', 'blue', 'gray')
OTSU = 'otsu'

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class DetectorConfig:
    """
    threshold: fixed 8-bit level or 'otsu'. A fixed level is the default since
    Otsu degenerates on motion images without any insect, which is most frames.
    """

    threshold: Union[int, str] = 40
    open_radius: int = 1
    min_area: int = 64
    max_area: int = 40_000
    pad: int = 2
    channel: str = 'red'

    def __post_init__(self):
        if isinstance(self.threshold, str):
            if self.threshold.lower() != OTSU:
                raise ConfigInvalid(f"threshold must be an integer or 'otsu', got {self.threshold!r}")
            object.__setattr__(self, 'threshold', OTSU)
        elif not 1 <= self.threshold <= 254:
            raise ConfigInvalid(f"threshold must be in [1, 254], got {self.threshold}")
        if self.open_radius < 0:
            raise ConfigInvalid(f"open radius must be nonnegative, got {self.open_radius}")
        if not 0 <= self.min_area < self.max_area:
            raise ConfigInvalid(f"need 0 <= min_area < max_area, got {self.min_area}, {self.max_area}")
        if self.pad < 0:
            raise ConfigInvalid(f"pad must be nonnegative, got {self.pad}")
        if self.channel not in CHANNELS:
            raise ConfigInvalid(f"channel must be one of {CHANNELS}, got {self.channel!r}")

    @classmethod
    def from_settings(cls, settings: Mapping[str, str]) -> 'DetectorConfig':
        default = cls()
        return cls(
            threshold=get_setting(settings, 'DETECTOR_THRESHOLD', default.threshold, _parse_threshold),
            open_radius=get_setting(settings, 'DETECTOR_OPEN_RADIUS', default.open_radius, int),
            min_area=get_setting(settings, 'DETECTOR_MIN_AREA', default.min_area, int),
            max_area=get_setting(settings, 'DETECTOR_MAX_AREA', default.max_area, int),
            pad=get_setting(settings, 'DETECTOR_PAD', default.pad, int),
            channel=get_setting(settings, 'DETECTOR_CHANNEL', default.channel, str.lower),
        )


def _parse_threshold(raw: str) -> Union[int, str]:
    raw = str(raw).strip().lower()
    return OTSU if raw in (OTSU, 'auto') else int(raw)


class Component(NamedTuple):
    label: int
    area: int
    box: BoundingBox


def connected_components(mask: np.ndarray) -> List[Component]:
    """
    8-connected components of a binary plane.

    Labels follow raster-scan order of each component's first pixel; boxes are
    half-open pixel extents, so a full 10x10 mask yields (0, 0, 10, 10).
    """
    labels, count = ndimage.label(np.asarray(mask, dtype=bool), structure=EIGHT_CONNECTED)
    if count == 0:
        return []
    areas = np.bincount(labels.ravel(), minlength=count + 1)
    components = []
    for label, slices in enumerate(ndimage.find_objects(labels), start=1):
        rows, cols = slices
        box = BoundingBox(cols.start, rows.start, cols.stop, rows.stop)
        components.append(Component(label, int(areas[label]), box))
    return components


def select_plane(frame: ColorFrame, channel: str) -> np.ndarray:
    if channel == 'gray':
        return grayscale(frame, MieConfig().grayscale_weights)
    return getattr(frame, channel)


def binarize(plane: np.ndarray, cfg: DetectorConfig) -> np.ndarray:
    if cfg.threshold == OTSU:
        if plane.min() == plane.max():
            return np.zeros(plane.shape, dtype=bool)
        level = threshold_otsu(plane)
        return plane > level
    return plane >= cfg.threshold


def detect(frame: ColorFrame, cfg: DetectorConfig, record: FrameRecord) -> List[Detection]:
    """Detections for one frame, highest confidence first"""
    plane = select_plane(frame, cfg.channel)
    mask = binarize(plane, cfg)
    if cfg.open_radius > 0:
        mask = ndimage.binary_opening(mask, structure=disk(cfg.open_radius))

    labels, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if count == 0:
        return []

    areas = np.bincount(labels.ravel(), minlength=count + 1)
    sums = np.bincount(labels.ravel(), weights=plane.ravel().astype(np.float64), minlength=count + 1)

    detections = []
    for label, (rows, cols) in enumerate(ndimage.find_objects(labels), start=1):
        area = int(areas[label])
        if not cfg.min_area <= area <= cfg.max_area:
            continue
        box = BoundingBox(cols.start, rows.start, cols.stop, rows.stop)
        box = box.padded(cfg.pad).clip(frame.width, frame.height)
        confidence = min(1.0, sums[label] / area / 255.0)
        detections.append(Detection(record, box, confidence, INSECT_CLASS_ID))

    detections.sort(key=lambda d: -d.confidence)
    logger.debug(f"{record.path.name}: {count} component(s), {len(detections)} detection(s)")
    return detections


def detect_many(frames: List[ColorFrame], records: List[FrameRecord], cfg: DetectorConfig,
                workers: Optional[int] = None) -> List[List[Detection]]:
    """Per-frame detection on a thread pool; output order follows the input"""
    with ThreadPoolExecutor(max_workers=workers or 1, thread_name_prefix='detect') as pool:
        return list(pool.map(lambda pair: detect(pair[0], cfg, pair[1]), zip(frames, records)))
