"""
Enhance Stage for insect-mie
Runs the motion-informed enhancement over every sequence of the input and
writes the enhanced frames plus a manifest for the following stages.
"""

from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from insect_mie.base.base_stage import BaseStage
from insect_mie.errors import MieError, UsageError
from insect_mie.ingest import SequenceManifest, write_manifest_csv
from insect_mie.mie import DirectorySink, MieConfig, enhance_sequence
from insect_mie.stages.inputs import MANIFEST_NAME, resolve_manifests


class EnhanceStage(BaseStage):
    """
    Stage producing MIE frames: red = motion likelihood, green kept, blue mixed
    """

    def __init__(self, settings: Optional[Mapping[str, str]] = None, workers: Optional[int] = None):
        super().__init__('enhance', settings, workers)
        self.mie_config = MieConfig.from_settings(self.settings)

    def run(self, request: Dict[str, Any]) -> Dict[str, Any]:
        """Process enhancement request"""
        if not request.get('out_dir'):
            raise UsageError("missing required output directory")
        out_dir = Path(request['out_dir'])
        manifests = resolve_manifests(request, self.settings)
        several = len(manifests) > 1

        self.logger.info(f"Enhancing {sum(len(m.frames) for m in manifests)} frames from {len(manifests)} site(s)")

        outputs: List[SequenceManifest] = []
        reports: Dict[str, Any] = {}
        failures = 0
        for manifest in manifests:
            site_dir = out_dir / manifest.site_id if several else out_dir
            cfg = replace(self.mie_config, nominal_interval=manifest.nominal_interval)
            sink = DirectorySink(site_dir, cfg)
            report = enhance_sequence(list(manifest.frames), cfg, sink, workers=self.workers)
            reports[manifest.site_id] = report.to_dict()
            failures += len(report.failures)

            failed = {failure.sequence_index for failure in report.failures}
            frames = tuple(
                replace(record, path=sink.path_for(record))
                for record in manifest.frames
                if record.sequence_index not in failed and sink.path_for(record).is_file()
            )
            outputs.append(replace(manifest, frames=frames, skipped=()))

        out_dir.mkdir(parents=True, exist_ok=True)
        manifest_path = write_manifest_csv(out_dir / MANIFEST_NAME, outputs)

        if failures and not self.continue_on_frame_failure:
            raise MieError(f"{failures} frame(s) failed to enhance")

        return self.create_standard_response(
            inputs={'in_dir': request.get('in_dir'), 'manifest': request.get('manifest')},
            outputs={'out_dir': out_dir, 'manifest': manifest_path},
            summary={
                'edge_policy': self.mie_config.edge_policy.value,
                'frames_written': sum(len(m.frames) for m in outputs),
                'failures': failures,
                'sites': reports,
            },
        )
