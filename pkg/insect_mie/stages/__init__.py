from insect_mie.stages.abundance_stage import AbundanceStage
from insect_mie.stages.benchmark_stage import BenchmarkStage
from insect_mie.stages.detect_stage import DetectStage
from insect_mie.stages.enhance_stage import EnhanceStage
from insect_mie.stages.eval_stage import EvalStage
from insect_mie.stages.stats_stage import StatsStage
from insect_mie.stages.synth_stage import SynthStage

STAGES = {
    'enhance': EnhanceStage,
    'detect': DetectStage,
    'eval': EvalStage,
    'abundance': AbundanceStage,
    'synth': SynthStage,
    'stats': StatsStage,
    'benchmark': BenchmarkStage,
}

__all__ = [
    'AbundanceStage', 'BenchmarkStage', 'DetectStage', 'EnhanceStage',
    'EvalStage', 'StatsStage', 'SynthStage', 'STAGES',
]
