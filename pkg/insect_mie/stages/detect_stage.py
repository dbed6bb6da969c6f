"""
Detect Stage for insect-mie
Runs the baseline detector over enhanced (or plain color) frames and writes one
normalized detection file per frame.
"""

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from insect_mie.base.base_stage import BaseStage
from insect_mie.core import FrameRecord
from insect_mie.detector import DetectorConfig, detect
from insect_mie.errors import MieError, UsageError
from insect_mie.ingest import write_detections, write_manifest_csv
from insect_mie.mie import FrameFailure
from insect_mie.stages.inputs import MANIFEST_NAME, all_frames, resolve_manifests
from insect_mie.utils.image_io import read_color_frame


class DetectStage(BaseStage):
    """
    Stage for threshold / opening / connected-component detection
    """

    def __init__(self, settings: Optional[Mapping[str, str]] = None, workers: Optional[int] = None):
        super().__init__('detect', settings, workers)
        self.detector_config = DetectorConfig.from_settings(self.settings)

    def run(self, request: Dict[str, Any]) -> Dict[str, Any]:
        """Process detection request"""
        if not request.get('out_dir'):
            raise UsageError("missing required output directory")
        out_dir = Path(request['out_dir'])
        out_dir.mkdir(parents=True, exist_ok=True)
        manifests = resolve_manifests(request, self.settings)
        records = all_frames(manifests)

        self.logger.info(
            f"Detecting on {len(records)} frames (channel {self.detector_config.channel}, "
            f"threshold {self.detector_config.threshold})"
        )

        with ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix='detect') as pool:
            results = list(pool.map(lambda record: self._detect_frame(record, out_dir), records))

        failures = [result for result in results if isinstance(result, FrameFailure)]
        counts = [result for result in results if isinstance(result, int)]
        for failure in failures:
            self.logger.warning(f"Frame {failure.path.name} failed: {failure.reason}")

        manifest_path = write_manifest_csv(out_dir / MANIFEST_NAME, manifests)

        if failures and not self.continue_on_frame_failure:
            raise MieError(f"{len(failures)} frame(s) failed detection")

        return self.create_standard_response(
            inputs={'in_dir': request.get('in_dir'), 'manifest': request.get('manifest')},
            outputs={'out_dir': out_dir, 'manifest': manifest_path},
            summary={
                'frames': len(counts),
                'detections': sum(counts),
                'frames_with_detections': sum(1 for count in counts if count),
                'failures': [
                    {'sequence_index': f.sequence_index, 'path': str(f.path), 'reason': f.reason}
                    for f in failures
                ],
            },
        )

    def _detect_frame(self, record: FrameRecord, out_dir: Path):
        """Detection count for the frame, or a FrameFailure"""
        try:
            frame = read_color_frame(record.path)
            detections = detect(frame, self.detector_config, record)
            write_detections(out_dir / f"{record.stem}.txt", detections, frame.width, frame.height)
            return len(detections)
        except (OSError, ValueError, MieError) as e:
            return FrameFailure(record.sequence_index, record.path, str(e))
