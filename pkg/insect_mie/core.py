"""
Core domain types for insect-mie
Frames, frame identity, boxes, annotations and detections shared by every stage.
No I/O lives here.

Pixel convention: origin top-left, x to the right, y downward. Boxes are
half-open in continuous coordinates, so pixel column i spans [i, i + 1).
"""

import math
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Sequence, Tuple

import numpy as np

from insect_mie.errors import ConfidenceOutOfRange, FrameTooSmall, InvalidBox

# Single class in the monitoring data set
INSECT_CLASS_ID = 0

MIN_FRAME_SIZE = 3
BOX_TOLERANCE = 1e-9


def _read_only(array: np.ndarray) -> np.ndarray:
    view = array.view()
    view.setflags(write=False)
    return view


@dataclass(frozen=True, eq=False)
class ColorFrame:
    """
    8-bit RGB raster stored as a (height, width, 3) array.
    The array is exposed read-only so frames can be shared between workers.
    """

    rgb: np.ndarray

    def __post_init__(self):
        rgb = np.asarray(self.rgb)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise ValueError(f"expected a (height, width, 3) array, got shape {rgb.shape}")
        if rgb.dtype != np.uint8:
            raise TypeError(f"expected 8-bit samples, got {rgb.dtype}")
        height, width = rgb.shape[:2]
        if width < MIN_FRAME_SIZE or height < MIN_FRAME_SIZE:
            raise FrameTooSmall(f"frame {width}x{height} is below {MIN_FRAME_SIZE}x{MIN_FRAME_SIZE}")
        object.__setattr__(self, 'rgb', _read_only(rgb))

    @classmethod
    def from_planes(cls, red: np.ndarray, green: np.ndarray, blue: np.ndarray) -> 'ColorFrame':
        """Stack three equally sized 8-bit planes into a frame"""
        return cls(np.dstack([red, green, blue]).astype(np.uint8, copy=False))

    @classmethod
    def filled(cls, width: int, height: int, color: Tuple[int, int, int]) -> 'ColorFrame':
        """Uniform frame of one color"""
        rgb = np.empty((height, width, 3), dtype=np.uint8)
        rgb[:] = np.asarray(color, dtype=np.uint8)
        return cls(rgb)

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def red(self) -> np.ndarray:
        return self.rgb[:, :, 0]

    @property
    def green(self) -> np.ndarray:
        return self.rgb[:, :, 1]

    @property
    def blue(self) -> np.ndarray:
        return self.rgb[:, :, 2]

    def same_size(self, other: 'ColorFrame') -> bool:
        return self.rgb.shape == other.rgb.shape


@dataclass(frozen=True, eq=False)
class GrayFrame:
    """Single 8-bit plane, the grayscale-and-blurred form of a color frame"""

    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 2:
            raise ValueError(f"expected a (height, width) plane, got shape {samples.shape}")
        if samples.dtype != np.uint8:
            raise TypeError(f"expected 8-bit samples, got {samples.dtype}")
        object.__setattr__(self, 'samples', _read_only(samples))

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True, eq=False)
class MotionLikelihood(GrayFrame):
    """Three-frame difference plane, saturated to 8 bits"""


@dataclass(frozen=True)
class FrameRecord:
    """Identity of one frame inside a time-lapse sequence"""

    site_id: str
    timestamp: datetime
    sequence_index: int
    path: Path

    def __post_init__(self):
        if self.sequence_index < 0:
            raise ValueError(f"sequence_index must be nonnegative, got {self.sequence_index}")
        object.__setattr__(self, 'path', Path(self.path))

    @property
    def stem(self) -> str:
        return self.path.stem


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel space with sub-pixel coordinates"""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise InvalidBox(f"non-finite box coordinates {coords}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvalidBox(f"degenerate box {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def intersection_area(self, other: 'BoundingBox') -> float:
        w = min(self.x_max, other.x_max) - max(self.x_min, other.x_min)
        h = min(self.y_max, other.y_max) - max(self.y_min, other.y_min)
        if w <= 0 or h <= 0:
            return 0.0
        return w * h

    def clip(self, width: float, height: float) -> 'BoundingBox':
        """Intersect with the frame rectangle; raises InvalidBox if nothing is left"""
        clipped = (
            min(max(self.x_min, 0.0), width),
            min(max(self.y_min, 0.0), height),
            min(max(self.x_max, 0.0), width),
            min(max(self.y_max, 0.0), height),
        )
        if not (clipped[0] < clipped[2] and clipped[1] < clipped[3]):
            raise InvalidBox(f"box {self.as_tuple()} lies outside the {width}x{height} frame")
        return BoundingBox(*clipped)

    def padded(self, pad: float) -> 'BoundingBox':
        return BoundingBox(self.x_min - pad, self.y_min - pad, self.x_max + pad, self.y_max + pad)

    def shifted(self, dx: float, dy: float) -> 'BoundingBox':
        return BoundingBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def almost_equal(self, other: 'BoundingBox', tolerance: float = BOX_TOLERANCE) -> bool:
        return all(abs(a - b) <= tolerance for a, b in zip(self.as_tuple(), other.as_tuple()))

    def center_distance(self, other: 'BoundingBox') -> float:
        (ax, ay), (bx, by) = self.center, other.center
        return math.hypot(ax - bx, ay - by)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes, 0 when they are disjoint"""
    inter = a.intersection_area(b)
    if inter <= 0.0:
        return 0.0
    union = a.area + b.area - inter
    return min(1.0, inter / union)


def iou_matrix(boxes_a: Sequence[BoundingBox], boxes_b: Sequence[BoundingBox]) -> np.ndarray:
    """Pairwise IoU, shape (len(boxes_a), len(boxes_b))"""
    if not boxes_a or not boxes_b:
        return np.zeros((len(boxes_a), len(boxes_b)), dtype=np.float64)
    a = np.array([box.as_tuple() for box in boxes_a], dtype=np.float64)
    b = np.array([box.as_tuple() for box in boxes_b], dtype=np.float64)
    inter_w = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    inter_h = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(inter_w, 0.0, None) * np.clip(inter_h, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.minimum(1.0, inter / union)


@dataclass(frozen=True)
class Annotation:
    """Ground-truth insect in one frame"""

    frame: FrameRecord
    box: BoundingBox
    class_id: int = INSECT_CLASS_ID


@dataclass(frozen=True)
class Detection:
    """Predicted insect in one frame"""

    frame: FrameRecord
    box: BoundingBox
    confidence: float
    class_id: int = INSECT_CLASS_ID

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ConfidenceOutOfRange(f"confidence {self.confidence} outside [0, 1]")
