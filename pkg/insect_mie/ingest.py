"""
Ingest for insect-mie
Discovers time-lapse sequences on disk, reads and writes manifest CSVs and the
normalized `class cx cy w h [confidence]` box files, and computes data set statistics.
"""

import csv
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Pattern, Sequence, TextIO, Tuple, Union

from dateutil import tz
from dateutil.parser import isoparse

from insect_mie.core import Annotation, BoundingBox, Detection, FrameRecord
from insect_mie.errors import (
    ConfidenceOutOfRange,
    EmptySequence,
    InvalidBox,
    MalformedLine,
    UnparsableTimestamp,
    ValueOutOfRange,
)
from insect_mie.utils.image_io import is_image_file

logger = logging.getLogger(__name__)

EPOCH = datetime(1970, 1, 1, tzinfo=tz.UTC)

MANIFEST_COLUMNS = ('path', 'site', 'view', 'plant', 'timestamp')
STATS_COLUMNS = ('site', 'week', 'insects', 'images', 'ratio', 'view', 'plant', 'background')

# Filename templates: a regex with either a `counter` or a `timestamp` group
PATTERN_PRESETS = {
    'counter': r'(?P<counter>\d+)\.(?:jpe?g|png)$',
    'iso': r'(?P<timestamp>\d{4}-?\d{2}-?\d{2}[T_ -]?\d{2}[:\-]?\d{2}[:\-]?\d{2})',
}


class CameraView(str, Enum):
    TOP = 'Top'
    SIDE = 'Side'

    @classmethod
    def parse(cls, raw: str) -> 'CameraView':
        for view in cls:
            if view.value.lower() == raw.strip().lower():
                return view
        raise ValueError(f"unknown camera view {raw!r}")


@dataclass(frozen=True)
class SkippedFile:
    path: Path
    reason: str


@dataclass(frozen=True)
class SequenceManifest:
    """Frames of one camera site, sorted by time"""

    site_id: str
    camera_view: CameraView = CameraView.TOP
    plant: str = ''
    nominal_interval: float = 30.0
    frames: Tuple[FrameRecord, ...] = ()
    skipped: Tuple[SkippedFile, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not self.site_id:
            raise ValueError("site_id must not be empty")
        object.__setattr__(self, 'frames', tuple(self.frames))
        object.__setattr__(self, 'skipped', tuple(self.skipped))
        stamps = [record.timestamp for record in self.frames]
        if any(later < earlier for earlier, later in zip(stamps, stamps[1:])):
            raise ValueError(f"frames of site {self.site_id} are not sorted by timestamp")

    def irregular_intervals(self, slack: float) -> List[Tuple[int, float]]:
        """(sequence_index, gap seconds) wherever spacing deviates from the nominal interval by more than slack"""
        irregular = []
        for earlier, later in zip(self.frames, self.frames[1:]):
            gap = (later.timestamp - earlier.timestamp).total_seconds()
            if abs(gap - self.nominal_interval) > slack:
                irregular.append((later.sequence_index, gap))
        return irregular


def _as_utc(value: datetime) -> datetime:
    if value.tzinfo is None:
        return value.replace(tzinfo=tz.UTC)
    return value.astimezone(tz.UTC)


def parse_timestamp(raw: str) -> datetime:
    """
    Parse an RFC 3339 / ISO-8601 timestamp, also accepting the filename-safe
    forms 2023-06-15_10-30-00 and 20230615T103000. Naive values are taken as UTC.
    """
    text = raw.strip()
    digits = re.sub(r'\D', '', text)
    if len(digits) == 14 and ':' not in text and not re.search(r'[Zz+]', text):
        text = f"{digits[:8]}T{digits[8:]}"
    try:
        return _as_utc(isoparse(text))
    except (ValueError, OverflowError) as e:
        raise UnparsableTimestamp(f"cannot parse timestamp {raw!r}: {e}") from e


def _compile_pattern(pattern: Union[str, Pattern]) -> Pattern:
    if isinstance(pattern, str):
        pattern = re.compile(PATTERN_PRESETS.get(pattern, pattern))
    if not {'counter', 'timestamp'} & set(pattern.groupindex):
        raise ValueError("filename pattern needs a 'counter' or 'timestamp' group")
    return pattern


def scan_sequence(root: Union[str, Path], pattern: Union[str, Pattern] = 'counter',
                  site_id: Optional[str] = None, camera_view: CameraView = CameraView.TOP,
                  plant: str = '', nominal_interval: float = 30.0,
                  origin: datetime = EPOCH) -> SequenceManifest:
    """
    Build a manifest from the image files of one directory.

    Timestamps come from the `timestamp` group of the pattern when present,
    otherwise from `origin + counter * nominal_interval`. Files that are not
    images, do not match, or carry an unparsable timestamp are skipped and
    listed in the manifest's `skipped` field.
    """
    root = Path(root)
    if not root.is_dir():
        raise NotADirectoryError(f"{root} is not a directory")
    regex = _compile_pattern(pattern)

    stamped: List[Tuple[datetime, str, Path]] = []
    skipped: List[SkippedFile] = []

    for path in sorted(p for p in root.iterdir() if p.is_file()):
        if not is_image_file(path):
            skipped.append(SkippedFile(path, 'not an image file'))
            continue
        match = regex.search(path.name)
        if match is None:
            skipped.append(SkippedFile(path, 'name does not match the filename pattern'))
            continue
        groups = match.groupdict()
        try:
            if groups.get('timestamp') is not None:
                timestamp = parse_timestamp(groups['timestamp'])
            else:
                timestamp = origin + timedelta(seconds=int(groups['counter']) * nominal_interval)
        except UnparsableTimestamp as e:
            skipped.append(SkippedFile(path, str(e)))
            continue
        stamped.append((timestamp, path.name, path))

    stamped.sort()
    site = site_id or root.name
    records: List[FrameRecord] = []
    for timestamp, _, path in stamped:
        if records and records[-1].timestamp == timestamp:
            skipped.append(SkippedFile(path, f"duplicate timestamp {timestamp.isoformat()}"))
            continue
        records.append(FrameRecord(site, timestamp, len(records), path))

    for entry in skipped:
        logger.warning(f"Skipped {entry.path.name}: {entry.reason}")
    if not records:
        raise EmptySequence(f"no usable frames in {root}")

    logger.info(f"Scanned {len(records)} frames for site {site} ({len(skipped)} skipped)")
    return SequenceManifest(site, camera_view, plant, nominal_interval, records, skipped)


# =============================================================================
# MANIFEST CSV
# =============================================================================

def read_manifest_csv(path: Union[str, Path], nominal_interval: float = 30.0) -> List[SequenceManifest]:
    """One SequenceManifest per site; relative paths resolve against the CSV's directory"""
    path = Path(path)
    base = path.parent
    rows: Dict[str, List[Tuple[datetime, Path, str, str]]] = {}

    with path.open(newline='', encoding='utf-8') as handle:
        reader = csv.DictReader(handle)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise MalformedLine(f"manifest is missing columns {sorted(missing)}", 1, str(path))
        for line_number, row in enumerate(reader, start=2):
            try:
                timestamp = parse_timestamp(row['timestamp'])
            except UnparsableTimestamp as e:
                raise UnparsableTimestamp(f"{path}:{line_number}: {e}") from e
            frame_path = Path(row['path'])
            if not frame_path.is_absolute():
                frame_path = base / frame_path
            rows.setdefault(row['site'], []).append((timestamp, frame_path, row['view'], row['plant']))

    manifests = []
    for site, entries in rows.items():
        entries.sort(key=lambda entry: (entry[0], str(entry[1])))
        records = [FrameRecord(site, ts, index, frame_path) for index, (ts, frame_path, _, _) in enumerate(entries)]
        view = CameraView.parse(entries[0][2]) if entries[0][2] else CameraView.TOP
        manifests.append(SequenceManifest(site, view, entries[0][3], nominal_interval, records))

    logger.info(f"Read manifest {path.name}: {len(manifests)} site(s), {sum(len(m.frames) for m in manifests)} frames")
    return manifests


def write_manifest_csv(path: Union[str, Path], manifests: Iterable[SequenceManifest]) -> Path:
    path = Path(path)
    base = path.parent.resolve()
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(MANIFEST_COLUMNS)
        for manifest in manifests:
            for record in manifest.frames:
                frame_path = record.path.resolve()
                try:
                    frame_path = frame_path.relative_to(base)
                except ValueError:
                    pass
                writer.writerow([
                    frame_path.as_posix(), manifest.site_id, manifest.camera_view.value,
                    manifest.plant, record.timestamp.isoformat(),
                ])
    return path


# =============================================================================
# NORMALIZED BOX FILES
# =============================================================================

def _parse_box_line(fields: List[str], line_number: int, path: str, frame_w: float,
                    frame_h: float) -> Tuple[int, BoundingBox]:
    try:
        class_id = int(fields[0])
        cx, cy, w, h = (float(value) for value in fields[1:5])
    except ValueError as e:
        raise MalformedLine(f"non-numeric field: {e}", line_number, path) from e

    for name, value in (('cx', cx), ('cy', cy), ('w', w), ('h', h)):
        if not 0.0 <= value <= 1.0:
            raise ValueOutOfRange(f"{name}={value} outside [0, 1]", line_number, path)
    if w <= 0.0 or h <= 0.0:
        raise ValueOutOfRange(f"box size {w}x{h} must be positive", line_number, path)

    box = BoundingBox(
        (cx - w / 2.0) * frame_w, (cy - h / 2.0) * frame_h,
        (cx + w / 2.0) * frame_w, (cy + h / 2.0) * frame_h,
    )
    try:
        return class_id, box.clip(frame_w, frame_h)
    except InvalidBox as e:
        raise ValueOutOfRange(str(e), line_number, path) from e


def _box_lines(path: Path, columns: int) -> Iterable[Tuple[int, List[str]]]:
    with path.open(encoding='utf-8') as handle:
        for line_number, line in enumerate(handle, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != columns:
                raise MalformedLine(f"expected {columns} fields, got {len(fields)}", line_number, str(path))
            yield line_number, fields


def read_annotations(path: Union[str, Path], frame: FrameRecord, frame_w: float, frame_h: float) -> List[Annotation]:
    """Parse `class cx cy w h` lines into pixel-space annotations clipped to the frame"""
    path = Path(path)
    annotations = []
    for line_number, fields in _box_lines(path, 5):
        class_id, box = _parse_box_line(fields, line_number, str(path), frame_w, frame_h)
        annotations.append(Annotation(frame, box, class_id))
    return annotations


def read_detections(path: Union[str, Path], frame: FrameRecord, frame_w: float, frame_h: float) -> List[Detection]:
    """Parse `class cx cy w h confidence` lines, highest confidence first"""
    path = Path(path)
    detections = []
    for line_number, fields in _box_lines(path, 6):
        class_id, box = _parse_box_line(fields, line_number, str(path), frame_w, frame_h)
        try:
            confidence = float(fields[5])
        except ValueError as e:
            raise MalformedLine(f"non-numeric confidence: {e}", line_number, str(path)) from e
        if not 0.0 <= confidence <= 1.0:
            raise ConfidenceOutOfRange(f"confidence {confidence} outside [0, 1]", line_number, str(path))
        detections.append(Detection(frame, box, confidence, class_id))
    detections.sort(key=lambda d: -d.confidence)
    return detections


def _normalized(box: BoundingBox, frame_w: float, frame_h: float) -> str:
    cx, cy = box.center
    return f"{cx / frame_w:.6f} {cy / frame_h:.6f} {box.width / frame_w:.6f} {box.height / frame_h:.6f}"


def write_annotations(path: Union[str, Path], annotations: Iterable[Annotation], frame_w: float, frame_h: float) -> Path:
    path = Path(path)
    lines = [f"{a.class_id} {_normalized(a.box, frame_w, frame_h)}\n" for a in annotations]
    path.write_text(''.join(lines), encoding='utf-8')
    return path


def write_detections(path: Union[str, Path], detections: Iterable[Detection], frame_w: float, frame_h: float) -> Path:
    path = Path(path)
    lines = [f"{d.class_id} {_normalized(d.box, frame_w, frame_h)} {d.confidence:.6f}\n" for d in detections]
    path.write_text(''.join(lines), encoding='utf-8')
    return path


def read_box_dir(directory: Union[str, Path], records: Iterable[FrameRecord], frame_w: float, frame_h: float,
                 detections: bool = False) -> Dict[FrameRecord, list]:
    """
    Read `<stem>.txt` for every record. A missing file means an empty frame
    (a background image for annotations, no prediction for detections).
    """
    directory = Path(directory)
    reader = read_detections if detections else read_annotations
    boxes: Dict[FrameRecord, list] = {}
    for record in records:
        path = directory / f"{record.stem}.txt"
        boxes[record] = reader(path, record, frame_w, frame_h) if path.is_file() else []
    return boxes


# =============================================================================
# DATA SET STATISTICS
# =============================================================================

@dataclass(frozen=True)
class SiteStats:
    site_id: str
    week: Optional[int]
    images: int
    insects: int
    background_images: int
    camera_view: CameraView
    plant: str

    @property
    def ratio(self) -> float:
        """Annotated insects per recorded image, in percent"""
        return 100.0 * self.insects / self.images if self.images else 0.0


@dataclass(frozen=True)
class DatasetStats:
    sites: Tuple[SiteStats, ...]

    @property
    def images(self) -> int:
        return sum(site.images for site in self.sites)

    @property
    def insects(self) -> int:
        return sum(site.insects for site in self.sites)

    @property
    def background_images(self) -> int:
        return sum(site.background_images for site in self.sites)

    @property
    def ratio(self) -> float:
        return 100.0 * self.insects / self.images if self.images else 0.0


def dataset_stats(manifests: Sequence[SequenceManifest],
                  annotations: Mapping[FrameRecord, Sequence[Annotation]]) -> DatasetStats:
    """Per-site and total image, insect and background counts with insect ratios"""
    sites = []
    for manifest in manifests:
        counts = [len(annotations.get(record, ())) for record in manifest.frames]
        week = manifest.frames[0].timestamp.isocalendar()[1] if manifest.frames else None
        sites.append(SiteStats(
            site_id=manifest.site_id,
            week=week,
            images=len(manifest.frames),
            insects=sum(counts),
            background_images=sum(1 for count in counts if count == 0),
            camera_view=manifest.camera_view,
            plant=manifest.plant,
        ))
    return DatasetStats(tuple(sites))


def write_stats_csv(stream: TextIO, stats: DatasetStats) -> None:
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(STATS_COLUMNS)
    for site in stats.sites:
        writer.writerow([
            site.site_id, site.week if site.week is not None else '', site.insects, site.images,
            f"{site.ratio:.1f}", site.camera_view.value, site.plant, site.background_images,
        ])
    writer.writerow(['Total', '', stats.insects, stats.images, f"{stats.ratio:.1f}", '', '', stats.background_images])
