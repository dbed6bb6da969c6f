"""
Synth Stage for insect-mie
Writes a self-contained synthetic time-lapse data set (frames, labels, manifest).
"""

from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from insect_mie.base.base_stage import BaseStage
from insect_mie.errors import UsageError
from insect_mie.synth import SynthConfig, easy_fixture, write_dataset

PRESETS = ('easy',)


class SynthStage(BaseStage):
    """
    Stage generating synthetic sequences with ground truth
    """

    def __init__(self, settings: Optional[Mapping[str, str]] = None, workers: Optional[int] = None):
        super().__init__('synth', settings, workers)

    def _synth_config(self, request: Dict[str, Any]) -> SynthConfig:
        preset = request.get('preset')
        if preset is None:
            overrides = {
                'SYNTH_SEED': request.get('seed'),
                'SYNTH_FRAMES': request.get('frames'),
                'SYNTH_SITE': request.get('site'),
            }
            settings = dict(self.settings)
            settings.update({key: str(value) for key, value in overrides.items() if value is not None})
            return SynthConfig.from_settings(settings)

        if preset not in PRESETS:
            raise UsageError(f"unknown preset {preset!r}, choose from {PRESETS}")
        seed = int(request.get('seed') or 0)
        if request.get('frames'):
            cfg = easy_fixture(seed=seed, frame_count=int(request['frames']))
        else:
            cfg = easy_fixture(seed=seed)
        if request.get('site'):
            cfg = replace(cfg, site_id=request['site'])
        return cfg

    def run(self, request: Dict[str, Any]) -> Dict[str, Any]:
        """Process synthesis request"""
        if not request.get('out_dir'):
            raise UsageError("missing required output directory")
        out_dir = Path(request['out_dir'])
        cfg = self._synth_config(request)

        self.logger.info(
            f"Generating {cfg.frame_count} frames of {cfg.width}x{cfg.height} "
            f"with {len(cfg.insects)} insect(s), seed {cfg.seed}"
        )
        manifest = write_dataset(cfg, out_dir)

        return self.create_standard_response(
            inputs={'preset': request.get('preset'), 'seed': cfg.seed},
            outputs={
                'out_dir': out_dir,
                'images': out_dir / 'images',
                'labels': out_dir / 'labels',
                'manifest': out_dir / 'manifest.csv',
            },
            summary={
                'site': manifest.site_id,
                'frames': len(manifest.frames),
                'insects': len(cfg.insects),
                'width': cfg.width,
                'height': cfg.height,
            },
        )
