"""
Abundance Stage for insect-mie
Filters repeated same-position detections per site and writes the raw and
filtered abundance series, optionally as an SVG chart.
"""

from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from insect_mie.abundance import AbundanceConfig, abundance_series, filter_by_site, plot_series_svg, write_series_csv
from insect_mie.base.base_stage import BaseStage
from insect_mie.errors import UsageError
from insect_mie.ingest import read_box_dir
from insect_mie.stages.inputs import resolve_manifests, site_frame_size


class AbundanceStage(BaseStage):
    """
    Stage for the time-window position filter and the abundance time series
    """

    def __init__(self, settings: Optional[Mapping[str, str]] = None, workers: Optional[int] = None):
        super().__init__('abundance', settings, workers)
        self.abundance_config = AbundanceConfig.from_settings(self.settings)

    def run(self, request: Dict[str, Any]) -> Dict[str, Any]:
        """Process abundance request"""
        det_dir = self.require_dir(request, 'det_dir')
        if not request.get('out'):
            raise UsageError("missing required output file")
        out_path = Path(request['out'])

        manifests = resolve_manifests(request, self.settings, directory_key='det_dir')
        raw = []
        frame_times = []
        for manifest in manifests:
            width, height = site_frame_size(manifest, self.settings)
            for detections in read_box_dir(det_dir, manifest.frames, width, height, detections=True).values():
                raw.extend(detections)
            frame_times.extend(record.timestamp for record in manifest.frames)

        filtered = filter_by_site(raw, self.abundance_config, workers=self.workers)
        kept = [d for site_kept, _ in filtered.values() for d in site_kept]
        series = abundance_series(kept, raw, self.abundance_config, frame_times)

        out_path.parent.mkdir(parents=True, exist_ok=True)
        with out_path.open('w', newline='', encoding='utf-8') as handle:
            write_series_csv(handle, series)
        outputs: Dict[str, Any] = {'series': out_path}

        if request.get('svg'):
            outputs['svg'] = plot_series_svg(series, request['svg'])

        self.logger.info(f"Abundance: {len(raw)} raw, {len(kept)} filtered detections in {len(series)} bin(s)")
        return self.create_standard_response(
            inputs={'det_dir': det_dir, 'manifest': request.get('manifest')},
            outputs=outputs,
            summary={
                'raw': len(raw),
                'filtered': len(kept),
                'bins': len(series),
                'no_data_bins': sum(1 for b in series.bins if b.no_data),
                'high_suppression_bins': [b.start.isoformat() for b in series.high_suppression_bins()],
                'per_site': {
                    site: {'kept': len(site_kept), 'suppressed': len(site_suppressed)}
                    for site, (site_kept, site_suppressed) in filtered.items()
                },
                'anchor': self.abundance_config.anchor.value,
                'window_seconds': self.abundance_config.window,
                'radius_px': self.abundance_config.same_position_radius,
            },
        )
