"""
Benchmark Stage for insect-mie
Compares the baseline detector on plain color frames and on MIE frames over
synthetic sequences.
"""

from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from insect_mie.base.base_stage import BaseStage
from insect_mie.benchmark import DEFAULT_FRAMES, DEFAULT_SEQUENCES, benchmark_configs, run_benchmark
from insect_mie.detector import DetectorConfig
from insect_mie.errors import UsageError
from insect_mie.evaluation import format_comparison, write_report_csv
from insect_mie.mie import MieConfig


class BenchmarkStage(BaseStage):
    """
    Stage for the color vs motion-enhanced detection comparison
    """

    def __init__(self, settings: Optional[Mapping[str, str]] = None, workers: Optional[int] = None):
        super().__init__('benchmark', settings, workers)
        self.mie_config = MieConfig.from_settings(self.settings)
        self.detector_config = DetectorConfig.from_settings(self.settings)

    def run(self, request: Dict[str, Any]) -> Dict[str, Any]:
        """Process benchmark request"""
        sequences = int(request.get('sequences') or DEFAULT_SEQUENCES)
        frames = int(request.get('frames') or DEFAULT_FRAMES)
        if sequences < 1 or frames < 3:
            raise UsageError("benchmark needs at least 1 sequence of at least 3 frames")

        configs = benchmark_configs(sequences, frames, seed=int(request.get('seed') or 0))
        result = run_benchmark(configs, self.mie_config, self.detector_config, workers=self.workers)

        outputs: Dict[str, Any] = {}
        if request.get('out_dir'):
            out_dir = Path(request['out_dir'])
            out_dir.mkdir(parents=True, exist_ok=True)
            for name, report in (('color', result.color), ('mie', result.enhanced)):
                path = out_dir / f"{name}_report.csv"
                with path.open('w', newline='', encoding='utf-8') as handle:
                    write_report_csv(handle, report)
                outputs[f"{name}_report"] = path

        response = self.create_standard_response(
            inputs={'sequences': sequences, 'frames': frames, 'seed': request.get('seed') or 0},
            outputs=outputs,
            summary=result.to_dict(),
        )
        response['text'] = format_comparison(result.deltas())
        return response
