"""
Abundance for insect-mie
Suppresses repeated detections of an insect sitting at the same position and
bins the raw and filtered detections into an abundance time series.
"""

import csv
import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from itertools import groupby
from pathlib import Path
from typing import Deque, Dict, Iterable, List, Mapping, Optional, Sequence, TextIO, Tuple, Union

from matplotlib.figure import Figure

from insect_mie.config import get_setting
from insect_mie.core import Detection
from insect_mie.errors import ConfigInvalid, UnsortedInput
from insect_mie.ingest import EPOCH

logger = logging.getLogger(__name__)

SERIES_COLUMNS = ('bin_start', 'raw', 'filtered', 'no_data')

RAW_COLOR = 'red'
FILTERED_COLOR = 'green'


class AnchorPolicy(str, Enum):
    KEPT = 'kept'
    ANY = 'any'


@dataclass(frozen=True)
class AbundanceConfig:
    """
    window: seconds a kept detection suppresses its position (0 disables the filter)
    same_position_radius: box-center distance in pixels that counts as the same position
    bin_seconds: width of a series bin, aligned to 1970-01-01 UTC
    """

    window: float = 120.0
    same_position_radius: float = 30.0
    bin_seconds: float = 86_400.0
    anchor: AnchorPolicy = AnchorPolicy.KEPT
    high_suppression_ratio: float = 3.0

    def __post_init__(self):
        if self.window < 0:
            raise ConfigInvalid(f"window must be nonnegative, got {self.window}")
        if self.same_position_radius < 0:
            raise ConfigInvalid(f"same_position_radius must be nonnegative, got {self.same_position_radius}")
        if self.bin_seconds <= 0:
            raise ConfigInvalid(f"bin_seconds must be positive, got {self.bin_seconds}")
        if self.high_suppression_ratio <= 0:
            raise ConfigInvalid(f"high_suppression_ratio must be positive, got {self.high_suppression_ratio}")
        try:
            object.__setattr__(self, 'anchor', AnchorPolicy(self.anchor))
        except ValueError as e:
            raise ConfigInvalid(f"anchor must be 'kept' or 'any', got {self.anchor!r}") from e

    @property
    def bin_width(self) -> timedelta:
        return timedelta(seconds=self.bin_seconds)

    @classmethod
    def from_settings(cls, settings: Mapping[str, str]) -> 'AbundanceConfig':
        default = cls()
        return cls(
            window=get_setting(settings, 'ABUNDANCE_WINDOW_SECONDS', default.window, float),
            same_position_radius=get_setting(settings, 'ABUNDANCE_RADIUS_PX', default.same_position_radius, float),
            bin_seconds=get_setting(settings, 'ABUNDANCE_BIN_SECONDS', default.bin_seconds, float),
            anchor=get_setting(settings, 'ABUNDANCE_ANCHOR', default.anchor, str.lower),
            high_suppression_ratio=get_setting(settings, 'ABUNDANCE_HIGH_SUPPRESSION_RATIO',
                                               default.high_suppression_ratio, float),
        )


# =============================================================================
# TEMPORAL FILTER
# =============================================================================

def _processing_order(dets: Sequence[Detection]) -> List[Detection]:
    """Time order with equal timestamps by descending confidence; rejects unsorted input"""
    for position, (earlier, later) in enumerate(zip(dets, dets[1:]), start=1):
        if later.frame.timestamp < earlier.frame.timestamp:
            raise UnsortedInput(
                f"detection {position} at {later.frame.timestamp.isoformat()} precedes "
                f"{earlier.frame.timestamp.isoformat()}"
            )
    ordered: List[Detection] = []
    for _, same_time in groupby(dets, key=lambda d: d.frame.timestamp):
        ordered.extend(sorted(same_time, key=lambda d: -d.confidence))
    return ordered


def temporal_filter(dets: Sequence[Detection], cfg: AbundanceConfig) -> Tuple[List[Detection], List[Detection]]:
    """
    Split time-ordered detections into (kept, suppressed).

    A detection is suppressed when an anchor of the same camera site lies less
    than `window` seconds before it with a box center within
    `same_position_radius` pixels. Anchors are the kept detections, or every
    earlier detection under the `any` policy.
    """
    kept: List[Detection] = []
    suppressed: List[Detection] = []
    anchors: Dict[str, Deque[Detection]] = {}

    for detection in _processing_order(list(dets)):
        site_anchors = anchors.setdefault(detection.frame.site_id, deque())
        now = detection.frame.timestamp
        while site_anchors and (now - site_anchors[0].frame.timestamp).total_seconds() >= cfg.window:
            site_anchors.popleft()

        same_position = any(
            detection.box.center_distance(anchor.box) <= cfg.same_position_radius for anchor in site_anchors
        )
        if same_position:
            suppressed.append(detection)
        else:
            kept.append(detection)

        if cfg.window > 0 and (not same_position or cfg.anchor is AnchorPolicy.ANY):
            site_anchors.append(detection)

    return kept, suppressed


def _filter_site(dets: List[Detection], cfg: AbundanceConfig) -> Tuple[List[Detection], List[Detection]]:
    dets.sort(key=lambda d: d.frame.timestamp)
    return temporal_filter(dets, cfg)


def filter_by_site(dets: Iterable[Detection], cfg: AbundanceConfig,
                   workers: Optional[int] = None) -> Dict[str, Tuple[List[Detection], List[Detection]]]:
    """Sort and filter each camera site independently; sites run on a thread pool"""
    by_site: Dict[str, List[Detection]] = {}
    for detection in dets:
        by_site.setdefault(detection.frame.site_id, []).append(detection)

    sites = sorted(by_site)
    with ThreadPoolExecutor(max_workers=workers or 1, thread_name_prefix='abundance') as pool:
        results = list(pool.map(lambda site: _filter_site(by_site[site], cfg), sites))

    for site, (kept, suppressed) in zip(sites, results):
        logger.info(f"Site {site}: kept {len(kept)}, suppressed {len(suppressed)} detection(s)")
    return dict(zip(sites, results))


# =============================================================================
# SERIES
# =============================================================================

@dataclass(frozen=True)
class AbundanceBin:
    start: datetime
    raw: int
    filtered: int
    no_data: bool = False

    def suppression_ratio(self) -> float:
        if self.filtered == 0:
            return float('inf') if self.raw else 0.0
        return self.raw / self.filtered


@dataclass(frozen=True)
class AbundanceSeries:
    bins: Tuple[AbundanceBin, ...]
    bin_width: timedelta
    high_suppression_ratio: float = 3.0

    def __post_init__(self):
        for b in self.bins:
            if b.filtered > b.raw:
                raise ValueError(f"bin {b.start.isoformat()} has more filtered ({b.filtered}) than raw ({b.raw})")

    def __len__(self) -> int:
        return len(self.bins)

    @property
    def raw_total(self) -> int:
        return sum(b.raw for b in self.bins)

    @property
    def filtered_total(self) -> int:
        return sum(b.filtered for b in self.bins)

    def is_high_suppression(self, b: AbundanceBin) -> bool:
        """Many more raw than filtered detections hints at a static false positive"""
        return b.suppression_ratio() > self.high_suppression_ratio

    def high_suppression_bins(self) -> List[AbundanceBin]:
        return [b for b in self.bins if self.is_high_suppression(b)]


def bin_start(timestamp: datetime, bin_width: timedelta) -> datetime:
    """Start of the bin containing timestamp, bins aligned to the Unix epoch"""
    offset = (timestamp - EPOCH) // bin_width
    return EPOCH + offset * bin_width


def abundance_series(kept: Sequence[Detection], raw: Sequence[Detection], cfg: AbundanceConfig,
                     frame_times: Optional[Iterable[datetime]] = None) -> AbundanceSeries:
    """
    Per-bin raw and filtered counts from the first to the last covered bin.

    A bin without any recorded frame is emitted with zero counts and no_data set.
    Without frame_times, recorded frames are known only through detections, so
    every bin without a raw detection is marked no_data.
    """
    width = cfg.bin_width
    raw_counts: Dict[datetime, int] = {}
    kept_counts: Dict[datetime, int] = {}
    for detection in raw:
        key = bin_start(detection.frame.timestamp, width)
        raw_counts[key] = raw_counts.get(key, 0) + 1
    for detection in kept:
        key = bin_start(detection.frame.timestamp, width)
        kept_counts[key] = kept_counts.get(key, 0) + 1

    covered = set(raw_counts)
    if frame_times is not None:
        covered = {bin_start(t, width) for t in frame_times} | covered
    span = covered | set(kept_counts)
    if not span:
        return AbundanceSeries((), width, cfg.high_suppression_ratio)

    bins = []
    current, last = min(span), max(span)
    while current <= last:
        bins.append(AbundanceBin(
            start=current,
            raw=raw_counts.get(current, 0),
            filtered=kept_counts.get(current, 0),
            no_data=current not in covered,
        ))
        current += width

    series = AbundanceSeries(tuple(bins), width, cfg.high_suppression_ratio)
    flagged = series.high_suppression_bins()
    if flagged:
        logger.warning(
            f"{len(flagged)} bin(s) with raw/filtered ratio above {cfg.high_suppression_ratio:g}, "
            f"first at {flagged[0].start.isoformat()}"
        )
    return series


def _iso(value: datetime) -> str:
    return value.strftime('%Y-%m-%dT%H:%M:%SZ')


def write_series_csv(stream: TextIO, series: AbundanceSeries) -> None:
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(SERIES_COLUMNS)
    for b in series.bins:
        writer.writerow([_iso(b.start), b.raw, b.filtered, int(b.no_data)])


def plot_series_svg(series: AbundanceSeries, path: Union[str, Path], title: str = 'Insect abundance') -> Path:
    """Line chart of raw (red) and filtered (green) counts; no_data bins are left as gaps"""
    path = Path(path)
    starts = [b.start for b in series.bins]
    raw = [float('nan') if b.no_data else b.raw for b in series.bins]
    filtered = [float('nan') if b.no_data else b.filtered for b in series.bins]

    fig = Figure(figsize=(10, 4))
    ax = fig.add_subplot(1, 1, 1)
    ax.plot(starts, raw, color=RAW_COLOR, marker='.', label='Detections')
    ax.plot(starts, filtered, color=FILTERED_COLOR, marker='.', label='Filtered detections')
    ax.set_title(title)
    ax.set_xlabel('Date (UTC)')
    ax.set_ylabel('Count')
    ax.legend(loc='upper right')
    fig.autofmt_xdate()
    fig.savefig(path, format='svg', metadata={'Date': None})
    return path
