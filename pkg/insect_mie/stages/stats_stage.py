"""
Stats Stage for insect-mie
Counts images, annotated insects and background images per camera site.
"""

import io
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from insect_mie.base.base_stage import BaseStage
from insect_mie.ingest import dataset_stats, read_box_dir, write_stats_csv
from insect_mie.stages.inputs import default_frame_size, resolve_manifests


class StatsStage(BaseStage):
    """
    Stage reporting data set statistics (insects per image ratio per site)
    """

    def __init__(self, settings: Optional[Mapping[str, str]] = None, workers: Optional[int] = None):
        super().__init__('stats', settings, workers)

    def run(self, request: Dict[str, Any]) -> Dict[str, Any]:
        """Process statistics request"""
        ann_dir = self.require_dir(request, 'ann_dir')
        manifests = resolve_manifests(request, self.settings)

        # counts only: box geometry is irrelevant, so no image is opened
        width, height = default_frame_size(self.settings)
        annotations: Dict = {}
        for manifest in manifests:
            annotations.update(read_box_dir(ann_dir, manifest.frames, width, height))

        stats = dataset_stats(manifests, annotations)
        buffer = io.StringIO()
        write_stats_csv(buffer, stats)

        outputs: Dict[str, Any] = {}
        if request.get('out'):
            out_path = Path(request['out'])
            out_path.parent.mkdir(parents=True, exist_ok=True)
            out_path.write_text(buffer.getvalue(), encoding='utf-8')
            outputs['stats'] = out_path

        response = self.create_standard_response(
            inputs={'ann_dir': ann_dir, 'manifest': request.get('manifest')},
            outputs=outputs,
            summary={
                'sites': len(stats.sites),
                'images': stats.images,
                'insects': stats.insects,
                'background_images': stats.background_images,
                'ratio_percent': round(stats.ratio, 2),
            },
        )
        response['text'] = buffer.getvalue()
        return response
