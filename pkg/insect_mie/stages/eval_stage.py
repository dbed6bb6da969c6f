"""
Eval Stage for insect-mie
Matches detection files against annotation files and writes the per-site,
macro and micro report.
"""

from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from insect_mie.base.base_stage import BaseStage
from insect_mie.config import get_setting
from insect_mie.errors import UsageError
from insect_mie.evaluation import AP_ALL_POINT, AP_ELEVEN_POINT, IOU_THRESHOLD, evaluate, format_report, write_report_csv
from insect_mie.ingest import read_box_dir
from insect_mie.stages.inputs import resolve_manifests, site_frame_size


class EvalStage(BaseStage):
    """
    Stage computing recall, precision, F1 and AP@.5 per camera site
    """

    def __init__(self, settings: Optional[Mapping[str, str]] = None, workers: Optional[int] = None):
        super().__init__('eval', settings, workers)
        self.iou_threshold = get_setting(self.settings, 'INSECT_MIE_IOU_THRESHOLD', IOU_THRESHOLD, float)

    def run(self, request: Dict[str, Any]) -> Dict[str, Any]:
        """Process evaluation request"""
        det_dir = self.require_dir(request, 'det_dir')
        ann_dir = self.require_dir(request, 'ann_dir')
        ap_method = request.get('ap_method') or AP_ALL_POINT
        if ap_method not in (AP_ALL_POINT, AP_ELEVEN_POINT):
            raise UsageError(f"unknown AP method {ap_method!r}")

        manifests = resolve_manifests(request, self.settings, directory_key='det_dir')
        records = []
        detections: Dict = {}
        annotations: Dict = {}
        for manifest in manifests:
            width, height = site_frame_size(manifest, self.settings)
            detections.update(read_box_dir(det_dir, manifest.frames, width, height, detections=True))
            annotations.update(read_box_dir(ann_dir, manifest.frames, width, height))
            records.extend(manifest.frames)

        report = evaluate(records, detections, annotations, self.iou_threshold, ap_method)
        text = format_report(report, title=f"Detection results at IoU {self.iou_threshold:g}")

        outputs: Dict[str, Any] = {}
        if request.get('out'):
            out_path = Path(request['out'])
            out_path.parent.mkdir(parents=True, exist_ok=True)
            with out_path.open('w', newline='', encoding='utf-8') as handle:
                write_report_csv(handle, report)
            outputs['report'] = out_path

        totals = report.totals
        response = self.create_standard_response(
            inputs={'det_dir': det_dir, 'ann_dir': ann_dir, 'manifest': request.get('manifest')},
            outputs=outputs,
            summary={
                'frames': len(records),
                'sites': len(report.sites),
                'tp': totals.tp,
                'fp': totals.fp,
                'fn': totals.fn,
                'micro': asdict(report.micro),
                'macro': asdict(report.macro),
                'f1_spread': report.f1_spread(),
                'ap_method': ap_method,
            },
        )
        response['text'] = text
        return response
