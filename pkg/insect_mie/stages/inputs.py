"""
Input resolution shared by the stages: which frames, which sites, what size.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

from insect_mie.config import Config, get_setting
from insect_mie.core import FrameRecord
from insect_mie.errors import UsageError
from insect_mie.ingest import CameraView, SequenceManifest, read_manifest_csv, scan_sequence
from insect_mie.utils.image_io import read_image_size

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.csv'


def resolve_manifests(request: Dict[str, Any], settings: Mapping[str, str],
                      directory_key: Optional[str] = 'in_dir') -> List[SequenceManifest]:
    """
    Frames to work on, in order of preference: an explicit --manifest, a
    manifest.csv inside the input directory, or a scan of the input directory.
    """
    interval = get_setting(settings, 'SEQUENCE_INTERVAL_SECONDS', Config.SEQUENCE_INTERVAL_SECONDS, float)

    if request.get('manifest'):
        path = Path(request['manifest'])
        if not path.is_file():
            raise UsageError(f"manifest: {path} is not a file")
        return read_manifest_csv(path, interval)

    directory = request.get(directory_key) if directory_key else None
    if directory is None:
        raise UsageError("either --manifest or an input directory is required")
    directory = Path(directory)
    if not directory.is_dir():
        raise UsageError(f"{directory} is not a directory")

    if (directory / MANIFEST_NAME).is_file():
        return read_manifest_csv(directory / MANIFEST_NAME, interval)

    view = CameraView.parse(request['view']) if request.get('view') else CameraView.TOP
    return [scan_sequence(
        directory,
        pattern=request.get('pattern') or 'counter',
        site_id=request.get('site'),
        camera_view=view,
        plant=request.get('plant') or '',
        nominal_interval=interval,
    )]


def default_frame_size(settings: Mapping[str, str]) -> Tuple[int, int]:
    return (
        get_setting(settings, 'INSECT_MIE_FRAME_WIDTH', Config.FRAME_WIDTH, int),
        get_setting(settings, 'INSECT_MIE_FRAME_HEIGHT', Config.FRAME_HEIGHT, int),
    )


def site_frame_size(manifest: SequenceManifest, settings: Mapping[str, str]) -> Tuple[int, int]:
    """Pixel size of a site's frames, from its first readable image or the configured default"""
    for record in manifest.frames:
        if record.path.is_file():
            try:
                return read_image_size(record.path)
            except OSError as e:
                logger.warning(f"Cannot read size of {record.path}: {e}")
            break
    return default_frame_size(settings)


def all_frames(manifests: List[SequenceManifest]) -> List[FrameRecord]:
    return [record for manifest in manifests for record in manifest.frames]
