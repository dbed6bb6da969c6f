"""
Shared fixtures for the insect-mie test suite
"""

import logging
import os
import sys
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
import pytest
from dateutil import tz
from hypothesis import strategies as st

# Add the repository root to Python path so the package imports without installation
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from insect_mie.core import Annotation, BoundingBox, ColorFrame, Detection, FrameRecord

T0 = datetime(2023, 6, 12, 4, 30, 0, tzinfo=tz.UTC)


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: timing runs on full-resolution frames (deselect with -m "not slow")')


def make_record(index: int = 0, site: str = 'S1-0', seconds: float = None, directory: str = 'frames') -> FrameRecord:
    """Frame `index` of a 30 s sequence, or at an explicit offset in seconds"""
    offset = index * 30.0 if seconds is None else seconds
    return FrameRecord(site, T0 + timedelta(seconds=offset), index, Path(directory) / f"{site}_{index:05d}.png")


def make_detection(box, confidence: float = 0.9, record: FrameRecord = None) -> Detection:
    return Detection(record or make_record(), BoundingBox(*box), confidence)


def make_annotation(box, record: FrameRecord = None) -> Annotation:
    return Annotation(record or make_record(), BoundingBox(*box))


def uniform_frame(value, width: int = 16, height: int = 12) -> ColorFrame:
    color = (value, value, value) if isinstance(value, int) else value
    return ColorFrame.filled(width, height, color)


@st.composite
def boxes(draw, max_coord: float = 100.0, min_size: float = 0.5):
    x = draw(st.floats(min_value=0.0, max_value=max_coord, allow_nan=False, allow_infinity=False))
    y = draw(st.floats(min_value=0.0, max_value=max_coord, allow_nan=False, allow_infinity=False))
    w = draw(st.floats(min_value=min_size, max_value=max_coord, allow_nan=False, allow_infinity=False))
    h = draw(st.floats(min_value=min_size, max_value=max_coord, allow_nan=False, allow_infinity=False))
    return BoundingBox(x, y, x + w, y + h)


@st.composite
def color_frames(draw, width: int = 8, height: int = 6):
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    rgb = np.random.default_rng(seed).integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    return ColorFrame(rgb)


@pytest.fixture(autouse=True)
def reset_package_logger():
    """Stage loggers bind sys.stderr once; drop handlers so each test captures its own stream"""
    yield
    logger = logging.getLogger('insect_mie')
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.setLevel(logging.NOTSET)
    logger.propagate = True


@pytest.fixture
def record():
    return make_record()


@pytest.fixture
def rng():
    return np.random.default_rng(20230612)
